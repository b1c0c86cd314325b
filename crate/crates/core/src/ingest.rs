//! Kinematic log ingestion: canonical CSV, KITTI oxts records, derived
//! accelerations and optional per-channel standardization.

use crate::CHANNELS;
use nalgebra::DVector;
use std::fmt::Write as _;
use thiserror::Error;

/// Maximum tolerated relative deviation of any step from the inferred `dt`.
pub const UNIFORM_STEP_TOL: f64 = 1e-3;

/// Canonical CSV header.
pub const CSV_HEADER: &str = "t,v_f,v_l,a_f,a_l";

/// Header accepted for logs that carry velocities only.
pub const CSV_HEADER_VELOCITY_ONLY: &str = "t,v_f,v_l";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("empty input: no data rows")]
    EmptyInput,
    #[error("line {line}: unexpected header {found:?}, expected `{CSV_HEADER}`")]
    BadHeader { line: usize, found: String },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: timestamp does not increase")]
    NonMonotonicTime { line: usize },
    #[error("line {line}: step deviates from dt={dt} by more than {UNIFORM_STEP_TOL} relative")]
    NonUniformSampling { line: usize, dt: f64 },
    #[error("line {line}: non-finite value")]
    NonFinite { line: usize },
    #[error("line {line}: {found} fields, need at least {needed}")]
    ShortLine {
        line: usize,
        found: usize,
        needed: usize,
    },
    #[error("line {line}: field {field} is not numeric: {value:?}")]
    NonNumericField {
        line: usize,
        field: usize,
        value: String,
    },
    #[error("series has {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("sample rate must be positive and finite, got {0}")]
    BadRate(f64),
}

/// Uniformly sampled `[v_f, v_l, a_f, a_l]` time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingSeries {
    timestamps: Vec<f64>,
    channels: Vec<[f64; CHANNELS]>,
    sample_rate_hz: f64,
    source_id: String,
}

impl DrivingSeries {
    /// Builds a series from explicit timestamps, inferring `dt` as the median
    /// step and rejecting non-uniform sampling. Needs at least two samples.
    pub fn from_timestamps(
        timestamps: Vec<f64>,
        channels: Vec<[f64; CHANNELS]>,
        source_id: impl Into<String>,
    ) -> Result<Self, IngestError> {
        assert_eq!(timestamps.len(), channels.len());
        if timestamps.is_empty() {
            return Err(IngestError::EmptyInput);
        }
        check_finite(&timestamps, &channels)?;
        for (i, w) in timestamps.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(IngestError::NonMonotonicTime { line: i + 2 });
            }
        }
        if timestamps.len() < 2 {
            return Err(IngestError::TooShort {
                len: timestamps.len(),
                needed: 2,
            });
        }
        let dt = median_step(&timestamps);
        for (i, w) in timestamps.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() / dt > UNIFORM_STEP_TOL {
                return Err(IngestError::NonUniformSampling { line: i + 2, dt });
            }
        }
        Ok(Self {
            timestamps,
            channels,
            sample_rate_hz: 1.0 / dt,
            source_id: source_id.into(),
        })
    }

    /// Builds a series at a known rate with timestamps `i / rate_hz`.
    pub fn from_rate(
        channels: Vec<[f64; CHANNELS]>,
        rate_hz: f64,
        source_id: impl Into<String>,
    ) -> Result<Self, IngestError> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(IngestError::BadRate(rate_hz));
        }
        if channels.is_empty() {
            return Err(IngestError::EmptyInput);
        }
        let timestamps: Vec<f64> = (0..channels.len()).map(|i| i as f64 / rate_hz).collect();
        check_finite(&timestamps, &channels)?;
        Ok(Self {
            timestamps,
            channels,
            sample_rate_hz: rate_hz,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn channels(&self) -> &[[f64; CHANNELS]] {
        &self.channels
    }

    /// Values of one channel (0 = v_f, 1 = v_l, 2 = a_f, 3 = a_l).
    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.channels.iter().map(move |row| row[c])
    }

    pub fn v_f(&self) -> Vec<f64> {
        self.channel(0).collect()
    }

    pub fn a_f(&self) -> Vec<f64> {
        self.channel(2).collect()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Rows as column vectors for the sampler.
    pub fn observations(&self) -> Vec<DVector<f64>> {
        self.channels
            .iter()
            .map(|row| DVector::from_column_slice(row))
            .collect()
    }

    fn with_channels(&self, channels: Vec<[f64; CHANNELS]>) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            channels,
            sample_rate_hz: self.sample_rate_hz,
            source_id: self.source_id.clone(),
        }
    }
}

fn check_finite(timestamps: &[f64], channels: &[[f64; CHANNELS]]) -> Result<(), IngestError> {
    for (i, (t, row)) in timestamps.iter().zip(channels).enumerate() {
        if !t.is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::NonFinite { line: i + 2 });
        }
    }
    Ok(())
}

fn median_step(timestamps: &[f64]) -> f64 {
    let mut steps: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(f64::total_cmp);
    let n = steps.len();
    if n % 2 == 1 {
        steps[n / 2]
    } else {
        0.5 * (steps[n / 2 - 1] + steps[n / 2])
    }
}

/// Parses canonical CSV. A `t,v_f,v_l` header is also accepted, in which case
/// accelerations are derived from velocity by [`derive_accel`].
pub fn parse_csv(text: &str, source_id: &str) -> Result<DrivingSeries, IngestError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (header_line, header) = lines.next().ok_or(IngestError::EmptyInput)?;
    let header_norm: String = header.chars().filter(|c| !c.is_whitespace()).collect();
    let width = match header_norm.as_str() {
        CSV_HEADER => 5,
        CSV_HEADER_VELOCITY_ONLY => 3,
        _ => {
            return Err(IngestError::BadHeader {
                line: header_line,
                found: header.to_string(),
            })
        }
    };

    let mut timestamps = Vec::new();
    let mut channels = Vec::new();
    let mut last_line = Vec::new();
    for (line, row) in lines {
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected {width} cells, found {}", cells.len()),
            });
        }
        let mut vals = [0.0; 5];
        for (k, cell) in cells.iter().enumerate() {
            vals[k] = cell.parse::<f64>().map_err(|_| IngestError::MalformedRow {
                line,
                reason: format!("non-numeric cell {cell:?}"),
            })?;
            if !vals[k].is_finite() {
                return Err(IngestError::NonFinite { line });
            }
        }
        if let Some(&prev) = timestamps.last() {
            if !(vals[0] > prev) {
                return Err(IngestError::NonMonotonicTime { line });
            }
        }
        timestamps.push(vals[0]);
        channels.push([vals[1], vals[2], vals[3], vals[4]]);
        last_line.push(line);
    }
    if timestamps.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let series = DrivingSeries::from_timestamps(timestamps, channels, source_id).map_err(
        |e| match e {
            // report file line numbers rather than row positions
            IngestError::NonUniformSampling { line, dt } => IngestError::NonUniformSampling {
                line: last_line[line - 1],
                dt,
            },
            other => other,
        },
    )?;
    if width == 3 {
        derive_accel(&series)
    } else {
        Ok(series)
    }
}

/// Writes the canonical CSV form. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn serialize_csv(series: &DrivingSeries) -> String {
    let mut out = String::with_capacity(series.len() * 48);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (t, row) in series.timestamps.iter().zip(&series.channels) {
        let _ = writeln!(out, "{t},{},{},{},{}", row[0], row[1], row[2], row[3]);
    }
    out
}

/// Column positions of the four channels inside an oxts record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OxtsColumns {
    pub v_f: usize,
    pub v_l: usize,
    pub a_f: usize,
    pub a_l: usize,
}

impl Default for OxtsColumns {
    /// KITTI raw layout: vf=8, vl=9, af=14, al=15.
    fn default() -> Self {
        Self {
            v_f: 8,
            v_l: 9,
            a_f: 14,
            a_l: 15,
        }
    }
}

impl OxtsColumns {
    fn as_array(&self) -> [usize; CHANNELS] {
        [self.v_f, self.v_l, self.a_f, self.a_l]
    }
}

/// Minimum number of fields an oxts record must carry.
pub const OXTS_MIN_FIELDS: usize = 17;

/// KITTI default acquisition rate.
pub const OXTS_DEFAULT_RATE_HZ: f64 = 10.0;

/// Parses oxts records (one whitespace-delimited line per frame).
pub fn parse_oxts<S: AsRef<str>>(
    records: &[S],
    rate_hz: f64,
    columns: OxtsColumns,
    source_id: &str,
) -> Result<DrivingSeries, IngestError> {
    let cols = columns.as_array();
    let needed = OXTS_MIN_FIELDS.max(cols.iter().max().unwrap() + 1);
    let mut channels = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = rec.as_ref().split_whitespace().collect();
        if fields.len() < needed {
            return Err(IngestError::ShortLine {
                line,
                found: fields.len(),
                needed,
            });
        }
        let mut row = [0.0; CHANNELS];
        for (slot, &c) in row.iter_mut().zip(&cols) {
            *slot = fields[c]
                .parse::<f64>()
                .map_err(|_| IngestError::NonNumericField {
                    line,
                    field: c,
                    value: fields[c].to_string(),
                })?;
        }
        channels.push(row);
    }
    DrivingSeries::from_rate(channels, rate_hz, source_id)
}

/// Replaces both acceleration channels with finite differences of the
/// velocities: central in the interior, one-sided at the ends.
pub fn derive_accel(series: &DrivingSeries) -> Result<DrivingSeries, IngestError> {
    let n = series.len();
    if n < 3 {
        return Err(IngestError::TooShort { len: n, needed: 3 });
    }
    let dt = series.dt();
    let ch = &series.channels;
    let mut out = ch.clone();
    for (v, a) in [(0usize, 2usize), (1, 3)] {
        out[0][a] = (ch[1][v] - ch[0][v]) / dt;
        for i in 1..n - 1 {
            out[i][a] = (ch[i + 1][v] - ch[i - 1][v]) / (2.0 * dt);
        }
        out[n - 1][a] = (ch[n - 1][v] - ch[n - 2][v]) / dt;
    }
    Ok(series.with_channels(out))
}

/// Per-channel affine transform `z = (x - mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelTransform {
    pub mean: [f64; CHANNELS],
    pub scale: [f64; CHANNELS],
}

impl ChannelTransform {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; CHANNELS],
            scale: [1.0; CHANNELS],
        }
    }

    pub fn apply(&self, row: &[f64; CHANNELS]) -> [f64; CHANNELS] {
        std::array::from_fn(|c| (row[c] - self.mean[c]) / self.scale[c])
    }

    pub fn invert(&self, row: &[f64; CHANNELS]) -> [f64; CHANNELS] {
        std::array::from_fn(|c| row[c] * self.scale[c] + self.mean[c])
    }

    pub fn invert_series(&self, series: &DrivingSeries) -> DrivingSeries {
        series.with_channels(series.channels.iter().map(|r| self.invert(r)).collect())
    }
}

/// Channels whose sample standard deviation falls below this keep unit scale.
pub const MIN_SCALE: f64 = 1e-9;

/// Z-scores every channel using the sample standard deviation. When
/// `enabled` is false the series is returned unchanged with the channel
/// means and unit scales recorded.
pub fn standardize(series: &DrivingSeries, enabled: bool) -> (DrivingSeries, ChannelTransform) {
    let n = series.len() as f64;
    let mut mean = [0.0; CHANNELS];
    for row in &series.channels {
        for c in 0..CHANNELS {
            mean[c] += row[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    if !enabled {
        return (
            series.clone(),
            ChannelTransform {
                mean,
                scale: [1.0; CHANNELS],
            },
        );
    }
    let mut scale = [0.0; CHANNELS];
    for row in &series.channels {
        for c in 0..CHANNELS {
            scale[c] += (row[c] - mean[c]).powi(2);
        }
    }
    for s in &mut scale {
        *s = if n > 1.0 { (*s / (n - 1.0)).sqrt() } else { 0.0 };
        if *s < MIN_SCALE {
            *s = 1.0;
        }
    }
    let transform = ChannelTransform { mean, scale };
    let out = series.with_channels(series.channels.iter().map(|r| transform.apply(r)).collect());
    (out, transform)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_from_vf(vf: &[f64], dt: f64) -> DrivingSeries {
        DrivingSeries::from_rate(vf.iter().map(|&v| [v, 0.0, 0.0, 0.0]).collect(), 1.0 / dt, "t")
            .unwrap()
    }

    #[test]
    fn two_rows() {
        let s = parse_csv("t,v_f,v_l,a_f,a_l\n0.0,5,0,1,0\n0.1,5.1,0,1,0\n", "x").unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.dt() - 0.1).abs() < 1e-12);
        assert_eq!(s.channels()[1], [5.1, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn non_monotonic_time() {
        let err = parse_csv("t,v_f,v_l,a_f,a_l\n0.0,1,0,0,0\n0.1,1,0,0,0\n0.05,1,0,0,0\n", "x")
            .unwrap_err();
        assert_eq!(err, IngestError::NonMonotonicTime { line: 4 });
    }

    #[test]
    fn header_only_is_empty() {
        assert_eq!(
            parse_csv("t,v_f,v_l,a_f,a_l\n", "x").unwrap_err(),
            IngestError::EmptyInput
        );
        assert_eq!(parse_csv("", "x").unwrap_err(), IngestError::EmptyInput);
    }

    #[test]
    fn malformed_cell_reports_line() {
        let err = parse_csv("t,v_f,v_l,a_f,a_l\n0.0,1,0,0,0\n0.1,abc,0,0,0\n", "x").unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { line: 3, .. }));
    }

    #[test]
    fn non_uniform_rejected() {
        let err = parse_csv(
            "t,v_f,v_l,a_f,a_l\n0,1,0,0,0\n0.1,1,0,0,0\n0.2,1,0,0,0\n0.35,1,0,0,0\n",
            "x",
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::NonUniformSampling { line: 5, .. }));
    }

    #[test]
    fn velocity_only_header_derives_accel() {
        let s = parse_csv("t,v_f,v_l\n0,0,0\n1,1,0\n2,2,0\n", "x").unwrap();
        assert_eq!(s.a_f(), vec![1.0, 1.0, 1.0]);
    }

    fn oxts_line(vals: [(usize, f64); 4], n_fields: usize) -> String {
        let mut f = vec![0.0; n_fields];
        for (i, v) in vals {
            f[i] = v;
        }
        f.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn oxts_index_extraction() {
        let line = oxts_line([(8, 7.0), (9, 0.2), (14, 0.5), (15, -0.1)], 30);
        let s = parse_oxts(&[line], 10.0, OxtsColumns::default(), "o").unwrap();
        assert_eq!(s.channels()[0], [7.0, 0.2, 0.5, -0.1]);
        assert_eq!(s.timestamps()[0], 0.0);
    }

    #[test]
    fn oxts_timestamps_at_ten_hz() {
        let lines: Vec<String> = (0..100).map(|_| oxts_line([(8, 1.0); 4], 30)).collect();
        let s = parse_oxts(&lines, 10.0, OxtsColumns::default(), "o").unwrap();
        assert_eq!(s.len(), 100);
        assert!((s.timestamps()[99] - 9.9).abs() < 1e-12);
        assert!((s.dt() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn oxts_short_line() {
        let line = oxts_line([(0, 1.0); 4], 12);
        let err = parse_oxts(&[line], 10.0, OxtsColumns::default(), "o").unwrap_err();
        assert_eq!(
            err,
            IngestError::ShortLine {
                line: 1,
                found: 12,
                needed: 17
            }
        );
    }

    #[test]
    fn oxts_non_numeric() {
        let mut line = oxts_line([(0, 1.0); 4], 30);
        line = line.replacen("0", "x", 9);
        let err = parse_oxts(&[line], 10.0, OxtsColumns::default(), "o").unwrap_err();
        assert!(matches!(err, IngestError::NonNumericField { line: 1, field: 8, .. }));
    }

    #[test]
    fn oxts_column_override() {
        let line = oxts_line([(0, 3.0), (1, 4.0), (2, 5.0), (3, 6.0)], 17);
        let cols = OxtsColumns {
            v_f: 0,
            v_l: 1,
            a_f: 2,
            a_l: 3,
        };
        let s = parse_oxts(&[line], 10.0, cols, "o").unwrap();
        assert_eq!(s.channels()[0], [3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn derive_accel_examples() {
        let s = derive_accel(&series_from_vf(&[0.0, 1.0, 2.0], 1.0)).unwrap();
        assert_eq!(s.a_f(), vec![1.0, 1.0, 1.0]);

        let s = derive_accel(&series_from_vf(&[5.0; 6], 0.1)).unwrap();
        assert!(s.a_f().iter().all(|&a| a == 0.0));

        let s = derive_accel(&series_from_vf(&[0.0, 1.0, 4.0, 9.0], 1.0)).unwrap();
        assert_eq!(&s.a_f()[1..3], &[2.0, 4.0]);

        assert_eq!(
            derive_accel(&series_from_vf(&[1.0, 2.0], 1.0)).unwrap_err(),
            IngestError::TooShort { len: 2, needed: 3 }
        );
    }

    #[test]
    fn standardize_examples() {
        let s = series_from_vf(&[1.0, 3.0], 1.0);
        let (z, tr) = standardize(&s, true);
        assert_eq!(tr.mean[0], 2.0);
        assert!((tr.scale[0] - 2f64.sqrt()).abs() < 1e-15);
        let h = 1.0 / 2f64.sqrt();
        assert!((z.channels()[0][0] + h).abs() < 1e-15);
        assert!((z.channels()[1][0] - h).abs() < 1e-15);
        // all-zero channels keep unit scale
        assert_eq!(tr.scale[1], 1.0);
        assert_eq!(z.channels()[0][1], 0.0);

        let (same, tr) = standardize(&s, false);
        assert_eq!(same, s);
        assert_eq!(tr.scale, [1.0; CHANNELS]);
        assert_eq!(tr.mean[0], 2.0);
    }
}
