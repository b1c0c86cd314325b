//! Scene features from tracking labels, risk timelines and correlation reports.
//!
//! Label files use the whitespace-separated tracking layout
//! `frame track_id type truncated occluded alpha bbox(4) dimensions(3) location(3) rotation_y`.
//! Each frame is reduced to four features: the number of boxes and the
//! ground-plane distance, type and observation angle of the nearest one.

use crate::ingest::DrivingSeries;
use crate::ranking::{Coarse, Level, UrgencyRanking};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

/// Minimum number of whitespace fields on a label line.
pub const LABEL_MIN_FIELDS: usize = 17;
const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unknown object type '{found}'")]
    UnknownType { line: usize, found: String },
    #[error("{labels} labels for {frames} frames")]
    LengthMismatch { labels: usize, frames: usize },
    #[error("cluster {0} is not in the ranking")]
    UnknownCluster(usize),
    #[error("label frame {frame} shifted by {offset} falls outside 0..{frames}")]
    FrameOutOfRange { frame: usize, offset: i64, frames: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectType {
    Car,
    Van,
    Truck,
    Pedestrian,
    Cyclist,
    Tram,
    Misc,
}

impl ObjectType {
    /// Parses a label-file type string. `Person_sitting` folds into
    /// `Pedestrian`; `DontCare` yields `Ok(None)`.
    pub fn parse(s: &str) -> Result<Option<Self>, String> {
        Ok(Some(match s {
            "Car" => ObjectType::Car,
            "Van" => ObjectType::Van,
            "Truck" => ObjectType::Truck,
            "Pedestrian" | "Person_sitting" => ObjectType::Pedestrian,
            "Cyclist" => ObjectType::Cyclist,
            "Tram" => ObjectType::Tram,
            "Misc" => ObjectType::Misc,
            "DontCare" => return Ok(None),
            other => return Err(other.to_string()),
        }))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectType::Car => "Car",
            ObjectType::Van => "Van",
            ObjectType::Truck => "Truck",
            ObjectType::Pedestrian => "Pedestrian",
            ObjectType::Cyclist => "Cyclist",
            ObjectType::Tram => "Tram",
            ObjectType::Misc => "Misc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub frame: usize,
    /// `None` for the untracked id `-1`.
    pub track_id: Option<i64>,
    pub object_type: ObjectType,
    /// Metres in the camera frame: x right, y down, z forward.
    pub location: [f64; 3],
    /// Radians in `[-pi, pi]`.
    pub observation_angle: f64,
}

impl BoundingBox {
    /// Distance in the x-z plane.
    pub fn ground_distance(&self) -> f64 {
        self.location[0].hypot(self.location[2])
    }
}

/// Parses a label file into boxes grouped by frame. The result has one
/// entry per frame up to the largest frame index seen; frames without boxes
/// are empty. An empty file gives an empty vector.
pub fn parse_label_frames(text: &str) -> Result<Vec<Vec<BoundingBox>>, ScenarioError> {
    let mut frames: Vec<Vec<BoundingBox>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let malformed = |reason: String| ScenarioError::MalformedLine { line, reason };
        if fields.len() < LABEL_MIN_FIELDS {
            return Err(malformed(format!(
                "expected at least {LABEL_MIN_FIELDS} fields, found {}",
                fields.len()
            )));
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| malformed(format!("bad frame index '{}'", fields[0])))?;
        let track: i64 = fields[1]
            .parse()
            .map_err(|_| malformed(format!("bad track id '{}'", fields[1])))?;
        let object_type = match ObjectType::parse(fields[2]) {
            Ok(Some(t)) => t,
            Ok(None) => {
                // still extends the frame range
                if frames.len() <= frame {
                    frames.resize_with(frame + 1, Vec::new);
                }
                continue;
            }
            Err(found) => return Err(ScenarioError::UnknownType { line, found }),
        };
        let num = |i: usize| -> Result<f64, ScenarioError> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| malformed(format!("field {i} is not a number: '{}'", fields[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(malformed(format!("field {i} is not finite")))
            }
        };
        let alpha = num(5)?;
        if alpha.abs() > PI + ANGLE_TOL {
            return Err(malformed(format!("alpha {alpha} outside [-pi, pi]")));
        }
        let location = [num(13)?, num(14)?, num(15)?];
        if frames.len() <= frame {
            frames.resize_with(frame + 1, Vec::new);
        }
        frames[frame].push(BoundingBox {
            frame,
            track_id: (track >= 0).then_some(track),
            object_type,
            location,
            observation_angle: alpha.clamp(-PI, PI),
        });
    }
    Ok(frames)
}

/// Moves label frame `f` to series frame `f + offset`, producing exactly
/// `frame_count` entries. Boxes landing outside the series are an error.
pub fn align_frames(
    frames: Vec<Vec<BoundingBox>>,
    offset: i64,
    frame_count: usize,
) -> Result<Vec<Vec<BoundingBox>>, ScenarioError> {
    let mut out: Vec<Vec<BoundingBox>> = vec![Vec::new(); frame_count];
    for (f, boxes) in frames.into_iter().enumerate() {
        if boxes.is_empty() {
            continue;
        }
        let target = f as i64 + offset;
        if target < 0 || target >= frame_count as i64 {
            return Err(ScenarioError::FrameOutOfRange {
                frame: f,
                offset,
                frames: frame_count,
            });
        }
        let target = target as usize;
        out[target] = boxes
            .into_iter()
            .map(|b| BoundingBox { frame: target, ..b })
            .collect();
    }
    Ok(out)
}

/// Per-frame scene features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFrame {
    pub number: usize,
    /// Metres to the nearest box; `+inf` when the frame has no boxes.
    pub distance: f64,
    pub object_type: Option<ObjectType>,
    pub angle: f64,
    pub nearest_id: Option<i64>,
}

impl ScenarioFrame {
    pub const EMPTY: Self = Self {
        number: 0,
        distance: f64::INFINITY,
        object_type: None,
        angle: 0.0,
        nearest_id: None,
    };

    pub fn type_name(&self) -> &'static str {
        self.object_type.map_or("none", ObjectType::as_str)
    }
}

/// Reduces each frame's boxes to a [`ScenarioFrame`]. The output has
/// `max(frame_count, boxes.len())` entries; frames past the end of `boxes`
/// are empty. Ties on distance keep the earliest box.
pub fn extract_features(boxes: &[Vec<BoundingBox>], frame_count: usize) -> Vec<ScenarioFrame> {
    let n = frame_count.max(boxes.len());
    (0..n)
        .map(|f| {
            let Some(list) = boxes.get(f).filter(|l| !l.is_empty()) else {
                return ScenarioFrame::EMPTY;
            };
            let nearest = list
                .iter()
                .reduce(|best, b| {
                    if b.ground_distance() < best.ground_distance() {
                        b
                    } else {
                        best
                    }
                })
                .expect("non-empty");
            ScenarioFrame {
                number: list.len(),
                distance: nearest.ground_distance(),
                object_type: Some(nearest.object_type),
                angle: nearest.observation_angle,
                nearest_id: nearest.track_id,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub t: f64,
    pub cluster_id: usize,
    pub level: Level,
    pub coarse: Coarse,
    pub scene: ScenarioFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTimeline {
    pub records: Vec<RiskRecord>,
}

impl RiskTimeline {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `t,cluster_id,level,coarse,number,distance,type,angle`; an absent
    /// distance is an empty field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,cluster_id,level,coarse,number,distance,type,angle\n");
        for r in &self.records {
            let distance = if r.scene.distance.is_finite() {
                r.scene.distance.to_string()
            } else {
                String::new()
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.t,
                r.cluster_id,
                r.level.as_str(),
                r.coarse.as_str(),
                r.scene.number,
                distance,
                r.scene.type_name(),
                r.scene.angle
            );
        }
        out
    }
}

/// Joins labels, ranking and scene features frame by frame.
pub fn build_risk_timeline(
    series: &DrivingSeries,
    labels: &[usize],
    ranking: &UrgencyRanking,
    frames: &[ScenarioFrame],
) -> Result<RiskTimeline, ScenarioError> {
    if labels.len() != frames.len() {
        return Err(ScenarioError::LengthMismatch {
            labels: labels.len(),
            frames: frames.len(),
        });
    }
    if labels.len() != series.len() {
        return Err(ScenarioError::LengthMismatch {
            labels: labels.len(),
            frames: series.len(),
        });
    }
    let lookup: BTreeMap<usize, (Level, Coarse)> = ranking
        .order
        .iter()
        .map(|a| (a.cluster_id, (a.level, a.coarse)))
        .collect();
    let records = labels
        .iter()
        .zip(frames)
        .zip(series.timestamps())
        .map(|((&z, scene), &t)| {
            let &(level, coarse) = lookup.get(&z).ok_or(ScenarioError::UnknownCluster(z))?;
            Ok(RiskRecord {
                t,
                cluster_id: z,
                level,
                coarse,
                scene: *scene,
            })
        })
        .collect::<Result<_, ScenarioError>>()?;
    Ok(RiskTimeline { records })
}

/// Why a coefficient is null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationFlag {
    InsufficientData,
    InsufficientVariance,
}

/// Fewer usable pairs than this gives `InsufficientData`.
pub const MIN_CORRELATION_PAIRS: usize = 3;

/// Pearson coefficient clamped to `[-1, 1]`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, CorrelationFlag> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < MIN_CORRELATION_PAIRS {
        return Err(CorrelationFlag::InsufficientData);
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let denom = (sxx * syy).sqrt();
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(CorrelationFlag::InsufficientVariance);
    }
    Ok((sxy / denom).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman coefficient: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, CorrelationFlag> {
    assert_eq!(x.len(), y.len());
    if x.len() < MIN_CORRELATION_PAIRS {
        return Err(CorrelationFlag::InsufficientData);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// The four `v_f` coefficients for one subset of frames. Null coefficients
/// carry their reason in `flags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSet {
    pub frames: usize,
    pub pearson_vf_number: Option<f64>,
    pub pearson_vf_distance: Option<f64>,
    pub spearman_vf_number: Option<f64>,
    pub spearman_vf_distance: Option<f64>,
    pub flags: BTreeMap<String, CorrelationFlag>,
}

impl CorrelationSet {
    fn compute(v_f: &[f64], scenes: &[&ScenarioFrame]) -> Self {
        let number: Vec<f64> = scenes.iter().map(|s| s.number as f64).collect();
        let (vd, dist): (Vec<f64>, Vec<f64>) = v_f
            .iter()
            .zip(scenes)
            .filter(|(_, s)| s.number > 0)
            .map(|(&v, s)| (v, s.distance))
            .unzip();
        let mut flags = BTreeMap::new();
        let mut keep = |name: &str, r: Result<f64, CorrelationFlag>| match r {
            Ok(v) => Some(v),
            Err(flag) => {
                flags.insert(name.to_string(), flag);
                None
            }
        };
        let pearson_vf_number = keep("pearson_vf_number", pearson(v_f, &number));
        let pearson_vf_distance = keep("pearson_vf_distance", pearson(&vd, &dist));
        let spearman_vf_number = keep("spearman_vf_number", spearman(v_f, &number));
        let spearman_vf_distance = keep("spearman_vf_distance", spearman(&vd, &dist));
        Self {
            frames: scenes.len(),
            pearson_vf_number,
            pearson_vf_distance,
            spearman_vf_number,
            spearman_vf_distance,
            flags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub frames: usize,
    pub mean_number: Option<f64>,
    /// Over frames with at least one box.
    pub mean_distance: Option<f64>,
    /// Nearest-object type counts; frames without boxes count as `none`.
    pub type_frequency: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub global: CorrelationSet,
    pub per_cluster: BTreeMap<usize, CorrelationSet>,
    pub per_level: BTreeMap<String, LevelStats>,
    pub type_frequency: BTreeMap<String, usize>,
    /// Adjacent frame pairs whose nearest tracked object differs.
    pub nearest_changes: usize,
}

/// Count of `t` where frames `t-1` and `t` both have a nearest track id and
/// the ids differ.
pub fn nearest_changes(frames: &[ScenarioFrame]) -> usize {
    frames
        .windows(2)
        .filter(|w| matches!((w[0].nearest_id, w[1].nearest_id), (Some(a), Some(b)) if a != b))
        .count()
}

fn type_counts<'a>(scenes: impl Iterator<Item = &'a ScenarioFrame>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in scenes {
        *out.entry(s.type_name().to_string()).or_insert(0) += 1;
    }
    out
}

pub fn correlation_report(series: &DrivingSeries, timeline: &RiskTimeline) -> Result<Report, ScenarioError> {
    if series.len() != timeline.len() {
        return Err(ScenarioError::LengthMismatch {
            labels: timeline.len(),
            frames: series.len(),
        });
    }
    let v_f = series.v_f();
    let scenes: Vec<&ScenarioFrame> = timeline.records.iter().map(|r| &r.scene).collect();
    let global = CorrelationSet::compute(&v_f, &scenes);

    let mut by_cluster: BTreeMap<usize, (Vec<f64>, Vec<&ScenarioFrame>)> = BTreeMap::new();
    for (r, &v) in timeline.records.iter().zip(&v_f) {
        let e = by_cluster.entry(r.cluster_id).or_default();
        e.0.push(v);
        e.1.push(&r.scene);
    }
    let per_cluster = by_cluster
        .into_iter()
        .map(|(id, (v, s))| (id, CorrelationSet::compute(&v, &s)))
        .collect();

    let mut per_level = BTreeMap::new();
    for coarse in Coarse::ALL {
        let members: Vec<&ScenarioFrame> = timeline
            .records
            .iter()
            .filter(|r| r.coarse == coarse)
            .map(|r| &r.scene)
            .collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        let with_boxes: Vec<f64> = members.iter().filter(|s| s.number > 0).map(|s| s.distance).collect();
        per_level.insert(
            coarse.as_str().to_string(),
            LevelStats {
                frames: members.len(),
                mean_number: Some(members.iter().map(|s| s.number as f64).sum::<f64>() / n),
                mean_distance: (!with_boxes.is_empty())
                    .then(|| with_boxes.iter().sum::<f64>() / with_boxes.len() as f64),
                type_frequency: type_counts(members.iter().copied()),
            },
        );
    }

    let plain: Vec<ScenarioFrame> = scenes.iter().map(|s| **s).collect();
    Ok(Report {
        global,
        per_cluster,
        per_level,
        type_frequency: type_counts(scenes.iter().copied()),
        nearest_changes: nearest_changes(&plain),
    })
}
