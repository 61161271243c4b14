//! JSON form of a [`Solution`]. Infinite values are written as the string `"inf"`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::Vec3;
use crate::kinematics::WindowId;
use crate::orchestrator::{Solution, SolveStats, SolveStatus};
use crate::trajopt::{Segment, Trajectory};

pub const FORMAT_VERSION: u32 = 1;

mod maybe_inf {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            x => s.serialize_f64(x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TourStop {
    pub window: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRow {
    /// `[t, x, y, z]`
    pub start: [f64; 4],
    pub end: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub format_version: u32,
    pub status: SolveStatus,
    #[serde(with = "maybe_inf")]
    pub t_f: f64,
    #[serde(with = "maybe_inf")]
    pub lb: f64,
    pub w: f64,
    pub tour: Vec<TourStop>,
    pub trajectory: Vec<SegmentRow>,
    pub stats: SolveStats,
}

impl From<&Solution> for SolutionFile {
    fn from(s: &Solution) -> Self {
        let row = |t: f64, p: Vec3| [t, p.x, p.y, p.z];
        Self {
            format_version: FORMAT_VERSION,
            status: s.status,
            t_f: s.t_f,
            lb: s.lb_at_termination,
            w: s.w,
            tour: s.tour.iter().zip(&s.intercepts).map(|(w, &time)| TourStop { window: w.0, time }).collect(),
            trajectory: s
                .trajectory
                .segments
                .iter()
                .map(|g| SegmentRow { start: row(g.t_start, g.p_start), end: row(g.t_end, g.p_end) })
                .collect(),
            stats: s.stats.clone(),
        }
    }
}

impl From<&SolutionFile> for Solution {
    fn from(f: &SolutionFile) -> Self {
        let point = |r: &[f64; 4]| Vec3::new(r[1], r[2], r[3]);
        Self {
            status: f.status,
            tour: f.tour.iter().map(|s| WindowId(s.window)).collect(),
            intercepts: f.tour.iter().map(|s| s.time).collect(),
            trajectory: Trajectory {
                segments: f
                    .trajectory
                    .iter()
                    .map(|r| Segment { p_start: point(&r.start), t_start: r.start[0], p_end: point(&r.end), t_end: r.end[0] })
                    .collect(),
            },
            t_f: f.t_f,
            lb_at_termination: f.lb,
            w: f.w,
            stats: f.stats.clone(),
        }
    }
}

impl SolutionFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("solution files always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
