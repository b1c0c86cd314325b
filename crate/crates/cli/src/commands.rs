use crate::config::{non_negative, pick, require, InputFormat, RunConfig, DEFAULT_SEED};
use crate::error::CliError;
use crate::files::{
    labels_csv, read_labels, read_series, read_text, segments_csv, write_json, write_text,
    ClusterRecord, EmissionRecord, HyperRecord, ModelFile, RankingFile, RankingThresholds,
    TransformRecord,
};
use crate::{FitArgs, IngestArgs, MapArgs, RankArgs, SynthArgs};
use drivestyle_core::ingest::{
    derive_accel, parse_oxts, serialize_csv, standardize, DrivingSeries, IngestError, OxtsColumns,
    OXTS_DEFAULT_RATE_HZ,
};
use drivestyle_core::ranking::{rank_clusters, rank_summaries, RankingConfig, RankingError};
use drivestyle_core::scenario::{
    align_frames, build_risk_timeline, correlation_report, extract_features, parse_label_frames,
};
use drivestyle_core::segment::{extract_segments, label_switches, summarize_clusters};
use drivestyle_core::sticky::{fit_chains, FitOptions, Hyperparameters, PriorSettings, SamplerError};
use drivestyle_core::synth::{generate_synthetic, SynthConfig};
use drivestyle_core::CHANNEL_NAMES;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

fn sampler_error(e: SamplerError) -> CliError {
    match e {
        SamplerError::InvalidHyperparameter(_) | SamplerError::BadSchedule { .. } => {
            CliError::Config(e.to_string())
        }
        SamplerError::SweepFailed { iteration, .. } | SamplerError::NonFiniteDensity { iteration } => {
            CliError::NumericalAt {
                iteration,
                message: e.to_string(),
            }
        }
        SamplerError::EmptyData => CliError::Usage(e.to_string()),
        SamplerError::NonSpdPsi | SamplerError::Model(_) => CliError::Numerical(e.to_string()),
    }
}

fn ingest_line(e: &IngestError) -> Option<usize> {
    match e {
        IngestError::ShortLine { line, .. } | IngestError::NonNumericField { line, .. } => Some(*line),
        _ => None,
    }
}

fn oxts_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let dir = if dir.join("data").is_dir() {
        dir.join("data")
    } else {
        dir.to_path_buf()
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::input(&dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::input(&dir, "no oxts .txt records found"));
    }
    Ok(files)
}

fn read_oxts(path: &Path, rate: f64, columns: OxtsColumns) -> Result<DrivingSeries, CliError> {
    let source = path.display().to_string();
    if path.is_dir() {
        let files = oxts_files(path)?;
        let records = files
            .iter()
            .map(|f| Ok(read_text(f)?.lines().find(|l| !l.trim().is_empty()).unwrap_or("").to_string()))
            .collect::<Result<Vec<String>, CliError>>()?;
        parse_oxts(&records, rate, columns, &source).map_err(|e| match ingest_line(&e) {
            Some(line) => CliError::input(&files[line - 1], e),
            None => CliError::input(path, e),
        })
    } else {
        let text = read_text(path)?;
        let records: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        parse_oxts(&records, rate, columns, &source).map_err(|e| CliError::input(path, e))
    }
}

fn channel_ranges(series: &DrivingSeries) -> Value {
    let mut ranges = serde_json::Map::new();
    for (c, name) in CHANNEL_NAMES.iter().enumerate() {
        let (lo, hi) = series
            .channel(c)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        ranges.insert(name.to_string(), json!([lo, hi]));
    }
    Value::Object(ranges)
}

pub(crate) fn ingest(a: IngestArgs) -> Result<Value, CliError> {
    let cfg = RunConfig::load_optional(a.config.as_deref())?;
    let input = require(a.input, cfg.input, "input")?;
    let out = require(a.out, cfg.out, "out")?;
    if !input.exists() {
        return Err(CliError::InputNotFound(input));
    }
    let format = a.format.or(cfg.format).unwrap_or(if input.is_dir() {
        InputFormat::Oxts
    } else {
        InputFormat::Csv
    });
    let rate = pick(a.rate, cfg.rate_hz, OXTS_DEFAULT_RATE_HZ);
    let columns = a
        .oxts_columns
        .map(|v| [v[0], v[1], v[2], v[3]])
        .or(cfg.oxts_columns)
        .map_or_else(OxtsColumns::default, |c| OxtsColumns {
            v_f: c[0],
            v_l: c[1],
            a_f: c[2],
            a_l: c[3],
        });
    let mut series = match format {
        InputFormat::Csv if input.is_dir() => {
            return Err(CliError::input(&input, "is a directory; use --format oxts"))
        }
        InputFormat::Csv => read_series(&input)?,
        InputFormat::Oxts => read_oxts(&input, rate, columns)?,
    };
    if a.derive_accel || cfg.derive_accel == Some(true) {
        series = derive_accel(&series).map_err(|e| CliError::input(&input, e))?;
    }
    write_text(&out, &serialize_csv(&series))?;
    log::info!("wrote {} frames to {}", series.len(), out.display());
    Ok(json!({
        "command": "ingest",
        "input": input.display().to_string(),
        "out": out.display().to_string(),
        "frames": series.len(),
        "dt": series.dt(),
        "rate_hz": series.sample_rate_hz(),
        "ranges": channel_ranges(&series),
    }))
}

pub(crate) fn fit(a: FitArgs) -> Result<Value, CliError> {
    let cfg = RunConfig::load_optional(a.config.as_deref())?;
    let input = require(a.input, cfg.input, "input")?;
    let out = require(a.out, cfg.out, "out")?;
    let labels_path = require(a.labels, cfg.labels, "labels")?;
    let segments_path = a.segments.or(cfg.segments);
    let seed = pick(a.seed, cfg.seed, DEFAULT_SEED);
    let d = PriorSettings::default();
    let settings = PriorSettings {
        alpha: pick(a.alpha, cfg.alpha, d.alpha),
        gamma: pick(a.gamma, cfg.gamma, d.gamma),
        kappa: pick(a.kappa, cfg.kappa, d.kappa),
        truncation: pick(a.truncation, cfg.truncation, d.truncation),
        niw_scale0: pick(None, cfg.niw_scale0, d.niw_scale0),
        niw_dof0: cfg.niw_dof0,
        psi_fraction: pick(None, cfg.psi_fraction, d.psi_fraction),
    };
    let fo = FitOptions::default();
    let options = FitOptions {
        iterations: pick(a.iters, cfg.iterations, fo.iterations),
        burn_in: pick(a.burn_in, cfg.burn_in, fo.burn_in),
        emission_mode: pick(a.emission_mode, cfg.emission_mode, fo.emission_mode),
    };
    if options.iterations <= options.burn_in {
        return Err(CliError::Config(format!(
            "iterations ({}) must exceed burn-in ({})",
            options.iterations, options.burn_in
        )));
    }
    let chains = pick(a.chains, cfg.chains, 1);
    if chains == 0 {
        return Err(CliError::Config("chains must be at least 1".into()));
    }
    if !(settings.psi_fraction > 0.0 && settings.psi_fraction.is_finite()) {
        return Err(CliError::Config(format!(
            "psi_fraction must be > 0, got {}",
            settings.psi_fraction
        )));
    }
    let do_standardize = pick(a.standardize, cfg.standardize, true);

    let series = read_series(&input)?;
    let (scaled, transform) = standardize(&series, do_standardize);
    let obs = scaled.observations();
    let hyper = Hyperparameters::from_data(&obs, &settings).map_err(sampler_error)?;
    log::info!(
        "fitting {} frames: L={}, {} sweeps, {} chain(s), seed {seed}",
        obs.len(),
        hyper.truncation,
        options.iterations,
        chains
    );
    let result = fit_chains(&obs, &hyper, &options, seed, chains).map_err(sampler_error)?;

    let best = &result.best_state;
    let total = result.labels.len() as f64;
    let mut frames = vec![0usize; result.n_clusters()];
    for &z in &result.labels {
        frames[z] += 1;
    }
    let clusters = result
        .cluster_states
        .iter()
        .enumerate()
        .map(|(id, &state)| {
            let m = &best.emit.means()[state];
            ClusterRecord {
                id,
                state,
                frames: frames[id],
                occupancy: frames[id] as f64 / total,
                mean: transform.invert(&[m[0], m[1], m[2], m[3]]),
            }
        })
        .collect();
    let model = ModelFile {
        source: input.display().to_string(),
        frames: series.len(),
        seed,
        chains,
        chain: result.chain,
        settings,
        options,
        standardize: do_standardize,
        transform: TransformRecord {
            mean: transform.mean,
            scale: transform.scale,
        },
        hyper: HyperRecord {
            alpha: hyper.alpha,
            gamma: hyper.gamma,
            kappa: hyper.kappa,
            truncation: hyper.truncation,
            niw_mean0: hyper.niw_mean0.iter().copied().collect(),
            niw_scale0: hyper.niw_scale0,
            niw_dof0: hyper.niw_dof0,
            niw_psi0: hyper.niw_psi0.transpose().iter().copied().collect(),
        },
        best_iteration: result.best_iteration,
        n_clusters: result.n_clusters(),
        clusters,
        weights: best.weights.folded(),
        initial: best.trans.initial().to_vec(),
        transition: best.trans.rows().to_vec(),
        emission: EmissionRecord {
            means: best.emit.means().iter().map(|m| m.iter().copied().collect()).collect(),
            covariances: best
                .emit
                .covariances()
                .iter()
                .map(|c| c.transpose().iter().copied().collect())
                .collect(),
        },
        trace: result.trace.clone(),
    };
    write_json(&out, &model)?;
    write_text(&labels_path, &labels_csv(series.timestamps(), &result.labels))?;
    if let Some(path) = &segments_path {
        write_text(path, &segments_csv(series.timestamps(), &extract_segments(&result.labels)))?;
    }
    Ok(json!({
        "command": "fit",
        "input": input.display().to_string(),
        "out": out.display().to_string(),
        "labels": labels_path.display().to_string(),
        "frames": series.len(),
        "clusters": result.n_clusters(),
        "switches": label_switches(&result.labels),
        "best_iteration": result.best_iteration,
        "final_log_density": result.final_log_density(),
        "seed": seed,
        "chain": result.chain,
    }))
}

fn ranking_error(path: &Path, e: RankingError) -> CliError {
    match e {
        RankingError::NonFiniteScore(_) => CliError::Numerical(e.to_string()),
        _ => CliError::input(path, e),
    }
}

fn check_lengths(labels_path: &Path, labels: usize, frames: usize) -> Result<(), CliError> {
    if labels == frames {
        Ok(())
    } else {
        Err(CliError::input(
            labels_path,
            format!("{labels} label rows for a series of {frames} frames"),
        ))
    }
}

pub(crate) fn rank(a: RankArgs) -> Result<Value, CliError> {
    let cfg = RunConfig::load_optional(a.config.as_deref())?;
    let input = require(a.input, cfg.input, "input")?;
    let labels_path = require(a.labels, cfg.labels, "labels")?;
    let out = require(a.out, cfg.out, "out")?;
    let occupancy_path = a
        .occupancy
        .or(cfg.occupancy)
        .unwrap_or_else(|| out.with_extension("occupancy.csv"));
    let d = RankingConfig::default();
    let config = RankingConfig {
        deadband: non_negative("deadband", pick(a.deadband, cfg.deadband, d.deadband))?,
        stop_threshold: non_negative(
            "stop_threshold",
            pick(a.stop_threshold, cfg.stop_threshold, d.stop_threshold),
        )?,
    };

    let series = read_series(&input)?;
    let labels = read_labels(&labels_path)?;
    check_lengths(&labels_path, labels.len(), series.len())?;
    let summaries = summarize_clusters(&series, &labels).map_err(|e| CliError::input(&labels_path, e))?;
    let max_id = labels.iter().max().copied().unwrap_or(0);
    let empty: Vec<usize> = (0..=max_id)
        .filter(|id| summaries.iter().all(|s| s.cluster_id != *id))
        .collect();
    if !empty.is_empty() {
        log::warn!("cluster ids with no frames omitted from the ranking: {empty:?}");
    }
    let ranking = rank_summaries(&series, &summaries, &config).map_err(|e| ranking_error(&labels_path, e))?;
    let file = RankingFile::from_ranking(
        &ranking,
        RankingThresholds {
            deadband: config.deadband,
            stop_threshold: config.stop_threshold,
        },
    );
    write_json(&out, &file)?;
    write_text(&occupancy_path, &file.occupancy_csv())?;
    let levels: serde_json::Map<String, Value> = file
        .clusters
        .iter()
        .map(|c| (c.id.to_string(), json!(c.level.as_str())))
        .collect();
    Ok(json!({
        "command": "rank",
        "out": out.display().to_string(),
        "occupancy": occupancy_path.display().to_string(),
        "clusters": file.clusters.len(),
        "order": file.order,
        "levels": levels,
        "omitted": empty,
    }))
}

pub(crate) fn map(a: MapArgs) -> Result<Value, CliError> {
    let cfg = RunConfig::load_optional(a.config.as_deref())?;
    let input = require(a.input, cfg.input, "input")?;
    let labels_path = require(a.labels, cfg.labels, "labels")?;
    let ranking_path = require(a.ranking, cfg.ranking, "ranking")?;
    let scene_path = require(a.scene, cfg.scene, "scene")?;
    let timeline_path = require(a.out_timeline, cfg.out_timeline, "out-timeline")?;
    let report_path = require(a.out_report, cfg.out_report, "out-report")?;
    let offset = pick(a.frame_offset, cfg.frame_offset, 0);

    let series = read_series(&input)?;
    let labels = read_labels(&labels_path)?;
    check_lengths(&labels_path, labels.len(), series.len())?;
    let ranking_file: RankingFile = serde_json::from_str(&read_text(&ranking_path)?)
        .map_err(|e| CliError::input(&ranking_path, e))?;
    let ranking = rank_clusters(&ranking_file.assignments()).map_err(|e| ranking_error(&ranking_path, e))?;
    let boxes = parse_label_frames(&read_text(&scene_path)?).map_err(|e| CliError::input(&scene_path, e))?;
    let aligned = align_frames(boxes, offset, series.len()).map_err(|e| CliError::input(&scene_path, e))?;
    let frames = extract_features(&aligned, series.len());
    let timeline =
        build_risk_timeline(&series, &labels, &ranking, &frames).map_err(|e| CliError::input(&labels_path, e))?;
    let report = correlation_report(&series, &timeline).map_err(|e| CliError::input(&input, e))?;

    write_text(&timeline_path, &timeline.to_csv())?;
    write_json(&report_path, &report)?;
    Ok(json!({
        "command": "map",
        "out_timeline": timeline_path.display().to_string(),
        "out_report": report_path.display().to_string(),
        "frames": timeline.len(),
        "frames_with_objects": frames.iter().filter(|f| f.number > 0).count(),
        "pearson_vf_number": report.global.pearson_vf_number,
        "pearson_vf_distance": report.global.pearson_vf_distance,
        "nearest_changes": report.nearest_changes,
    }))
}

pub(crate) fn synth(a: SynthArgs) -> Result<Value, CliError> {
    let cfg = RunConfig::load_optional(a.config.as_deref())?;
    let out = require(a.out, cfg.out, "out")?;
    let truth_path = require(a.out_truth, cfg.out_truth, "out-truth")?;
    let seed = pick(a.seed, cfg.seed, DEFAULT_SEED);
    let d = SynthConfig::default();
    let sc = SynthConfig {
        states: pick(a.states, cfg.states, d.states),
        length: pick(a.length, cfg.length, d.length),
        self_prob: pick(a.self_prob, cfg.self_prob, d.self_prob),
        separation: pick(a.separation, cfg.separation, d.separation),
        rate_hz: pick(a.rate, cfg.rate_hz, d.rate_hz),
    };
    sc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if !(sc.rate_hz > 0.0 && sc.rate_hz.is_finite()) {
        return Err(CliError::Config(format!("rate must be > 0, got {}", sc.rate_hz)));
    }
    let drive = generate_synthetic(&sc, seed).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_text(&out, &serialize_csv(&drive.series))?;
    write_text(&truth_path, &labels_csv(drive.series.timestamps(), &drive.truth))?;
    Ok(json!({
        "command": "synth",
        "out": out.display().to_string(),
        "out_truth": truth_path.display().to_string(),
        "states": sc.states,
        "length": sc.length,
        "seed": seed,
        "switches": label_switches(&drive.truth),
    }))
}
