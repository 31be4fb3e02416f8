//! Azimuth sweeps with the directional antenna and bearing estimation from
//! the per-angle correlation scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Drive;
use crate::error::{invalid, Error, Result};
use crate::seed;
use crate::sim::TrialRunner;
use crate::DETECT_BITS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub angles_deg: Vec<f64>,
    pub distance_m: f64,
    /// True direction of the tag.
    pub tag_azimuth_deg: f64,
    pub trials_per_angle: usize,
    /// Codebook entry that transmits.
    pub tag_index: usize,
    pub rng_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            angles_deg: (-9..=9).map(|k| k as f64 * 10.0).collect(),
            distance_m: 50.0,
            tag_azimuth_deg: 0.0,
            trials_per_angle: 5,
            tag_index: 0,
            rng_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.angles_deg.is_empty() {
            return invalid("sweep needs at least one angle");
        }
        if self.angles_deg.iter().any(|a| !a.is_finite()) {
            return invalid("sweep angles must be finite");
        }
        if self.angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("sweep angles must be strictly increasing");
        }
        if self.trials_per_angle == 0 {
            return invalid("at least one trial per angle is needed");
        }
        if !(self.distance_m > 0.0 && self.distance_m.is_finite()) {
            return invalid("distance must be positive");
        }
        if !self.tag_azimuth_deg.is_finite() {
            return invalid("tag azimuth must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub angle_deg: f64,
    /// Best score over the trials at this angle, 0 when nothing was detected.
    pub best_score: u32,
    pub mean_score: f64,
    pub detection_rate: f64,
    /// Mean received level of the detected frames, dBFS.
    pub mean_rssi_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BearingMethod {
    /// Parabola through the peak score and its neighbours.
    ScoreParabola,
    /// Scores saturate at the ceiling around the peak; parabola through RSSI instead.
    RssiParabola,
    /// Peak at a grid edge or no usable neighbours: the grid angle itself.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingEstimate {
    pub bearing_deg: f64,
    /// Grid angle with the strongest response.
    pub peak_angle_deg: f64,
    pub method: BearingMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// `None` when no angle produced a detection.
    pub bearing: Option<BearingEstimate>,
}

impl SweepResult {
    /// Two-column `angle,correlation` table of best scores.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("angle,correlation\n");
        for p in &self.points {
            s.push_str(&format!("{},{}\n", p.angle_deg, p.best_score));
        }
        s
    }
}

pub fn run_sweep(config: &SweepConfig, runner: &TrialRunner) -> Result<SweepResult> {
    config.validate()?;
    let n = config.trials_per_angle;
    let outcomes = (0..config.angles_deg.len() * n)
        .into_par_iter()
        .map(|k| {
            let (a, t) = (k / n, k % n);
            let drive = Drive::Distance {
                distance_m: config.distance_m,
                azimuth_deg: config.angles_deg[a] - config.tag_azimuth_deg,
            };
            runner.run(config.tag_index, drive, seed::derive(seed::derive(config.rng_seed, a as u64), t as u64))
        })
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<SweepPoint> = config
        .angles_deg
        .iter()
        .zip(outcomes.chunks(n))
        .map(|(&angle_deg, trials)| {
            let detected: Vec<_> = trials.iter().filter(|o| o.detected).collect();
            let levels: Vec<f64> = detected.iter().filter_map(|o| o.rssi_db).map(|db| 10f64.powf(db / 10.0)).collect();
            SweepPoint {
                angle_deg,
                best_score: trials.iter().map(|o| o.best_score).max().unwrap_or(0),
                mean_score: trials.iter().map(|o| o.best_score as f64).sum::<f64>() / n as f64,
                detection_rate: detected.len() as f64 / n as f64,
                mean_rssi_db: (!levels.is_empty())
                    .then(|| 10.0 * (levels.iter().sum::<f64>() / levels.len() as f64).log10()),
            }
        })
        .collect();
    let threshold = runner.config().receiver.detector.threshold;
    let bearing = match estimate_bearing(&points, threshold) {
        Ok(b) => Some(b),
        Err(Error::NoBearing) => None,
        Err(e) => return Err(e),
    };
    Ok(SweepResult { points, bearing })
}

/// Vertex of the parabola through three points, clamped to their span.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curvature = (d2 - d1) / (x[2] - x[0]);
    if !(curvature < 0.0) {
        return None;
    }
    // y' = d1 + curvature * (2x - x0 - x1) = 0
    let v = (x[0] + x[1]) / 2.0 - d1 / (2.0 * curvature);
    Some(v.clamp(x[0], x[2]))
}

/// Bearing from the sweep points that reached `threshold`.
///
/// The peak is the highest best-score, ties broken by mean RSSI. The
/// estimate refines it with a parabola through the peak and its two grid
/// neighbours: over scores normally, over RSSI when the score triple sits
/// at the 256 ceiling. At a grid edge the peak angle is returned as is.
pub fn estimate_bearing(points: &[SweepPoint], threshold: u32) -> Result<BearingEstimate> {
    let key = |p: &SweepPoint| (p.best_score, p.mean_rssi_db.unwrap_or(f64::NEG_INFINITY));
    let peak = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.best_score >= threshold && p.best_score > 0)
        .max_by(|(_, a), (_, b)| {
            let (sa, ra) = key(a);
            let (sb, rb) = key(b);
            sa.cmp(&sb).then(ra.total_cmp(&rb))
        })
        .map(|(i, _)| i)
        .ok_or(Error::NoBearing)?;

    let at = points[peak].angle_deg;
    let grid = BearingEstimate { bearing_deg: at, peak_angle_deg: at, method: BearingMethod::Grid };
    if peak == 0 || peak + 1 == points.len() {
        return Ok(grid);
    }
    let tri = [&points[peak - 1], &points[peak], &points[peak + 1]];
    let x = tri.map(|p| p.angle_deg);
    let saturated = tri.iter().any(|p| p.best_score as usize >= DETECT_BITS);
    if !saturated {
        if let Some(v) = parabola_vertex(x, tri.map(|p| p.best_score as f64)) {
            return Ok(BearingEstimate { bearing_deg: v, method: BearingMethod::ScoreParabola, ..grid });
        }
    }
    if let [Some(a), Some(b), Some(c)] = tri.map(|p| p.mean_rssi_db) {
        if let Some(v) = parabola_vertex(x, [a, b, c]) {
            return Ok(BearingEstimate { bearing_deg: v, method: BearingMethod::RssiParabola, ..grid });
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pncode::build_codebook;
    use crate::sim::TrialConfig;
    use std::sync::OnceLock;

    fn runner() -> &'static TrialRunner {
        static R: OnceLock<TrialRunner> = OnceLock::new();
        R.get_or_init(|| TrialRunner::new(TrialConfig::new(build_codebook(2, 0, 192).unwrap())).unwrap())
    }

    fn pt(angle_deg: f64, best_score: u32, rssi: Option<f64>) -> SweepPoint {
        SweepPoint { angle_deg, best_score, mean_score: best_score as f64, detection_rate: 1.0, mean_rssi_db: rssi }
    }

    #[test]
    fn symmetric_scores_give_zero() {
        let pts: Vec<_> = [-20.0, -10.0, 0.0, 10.0, 20.0]
            .iter()
            .zip([200, 230, 250, 230, 200])
            .map(|(&a, s)| pt(a, s, None))
            .collect();
        let b = estimate_bearing(&pts, 192).unwrap();
        assert_eq!(b.bearing_deg, 0.0);
        assert_eq!(b.method, BearingMethod::ScoreParabola);
    }

    #[test]
    fn parabola_vertex_recovered() {
        // y = 250 - 0.05 (x - 12.5)^2 on a 10 degree grid
        let pts: Vec<_> = (-2..=4)
            .map(|k| {
                let x = k as f64 * 10.0;
                pt(x, 0, Some(-30.0 - 0.05 * (x - 12.5) * (x - 12.5)))
            })
            .map(|mut p| {
                p.best_score = 200;
                p
            })
            .collect();
        // flat scores: falls through to the RSSI parabola, exact for a parabola
        let b = estimate_bearing(&pts, 192).unwrap();
        assert!((b.bearing_deg - 12.5).abs() < 1e-9, "{b:?}");
        assert_eq!(b.method, BearingMethod::RssiParabola);
        let v = parabola_vertex([0.0, 10.0, 20.0], [0.0, 10.0, 20.0].map(|x: f64| 250.0 - 0.05 * (x - 12.5).powi(2)))
            .unwrap();
        assert!((v - 12.5).abs() < 1e-9);
    }

    #[test]
    fn saturated_scores_use_rssi() {
        let pts = vec![pt(-10.0, 256, Some(-21.0)), pt(0.0, 256, Some(-20.0)), pt(10.0, 256, Some(-21.0))];
        let b = estimate_bearing(&pts, 192).unwrap();
        assert_eq!((b.bearing_deg, b.method), (0.0, BearingMethod::RssiParabola));
    }

    #[test]
    fn edges_and_no_detection() {
        let pts = vec![pt(-10.0, 256, None), pt(0.0, 200, None), pt(10.0, 150, None)];
        let b = estimate_bearing(&pts, 192).unwrap();
        assert_eq!((b.bearing_deg, b.method), (-10.0, BearingMethod::Grid));
        let none = vec![pt(0.0, 0, None), pt(10.0, 0, None)];
        assert!(matches!(estimate_bearing(&none, 192), Err(Error::NoBearing)));
        let weak = vec![pt(0.0, 150, None)];
        assert!(matches!(estimate_bearing(&weak, 192), Err(Error::NoBearing)));
    }

    #[test]
    fn csv_layout() {
        let r = SweepResult { points: vec![pt(-10.0, 0, None), pt(12.5, 256, None)], bearing: None };
        assert_eq!(r.to_csv(), "angle,correlation\n-10,0\n12.5,256\n");
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::default().validate().is_ok());
        assert!(SweepConfig { angles_deg: vec![], ..Default::default() }.validate().is_err());
        assert!(SweepConfig { angles_deg: vec![0.0, 0.0], ..Default::default() }.validate().is_err());
        assert!(SweepConfig { trials_per_angle: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn short_sweep_peaks_at_tag() {
        let cfg = SweepConfig {
            angles_deg: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            tag_azimuth_deg: 30.0,
            trials_per_angle: 2,
            ..Default::default()
        };
        let r = run_sweep(&cfg, runner()).unwrap();
        assert_eq!(r.points.len(), 5);
        let b = r.bearing.unwrap();
        assert_eq!(b.peak_angle_deg, 30.0);
        assert!((b.bearing_deg - 30.0).abs() < 2.0, "{b:?}");
        assert!(r.points.iter().all(|p| p.best_score <= 256));
        assert_eq!(run_sweep(&cfg, runner()).unwrap(), r);
    }

    #[test]
    fn far_tag_has_no_bearing() {
        let cfg = SweepConfig {
            angles_deg: vec![-10.0, 0.0, 10.0],
            distance_m: 30_000.0,
            trials_per_angle: 2,
            ..Default::default()
        };
        let r = run_sweep(&cfg, runner()).unwrap();
        assert!(r.bearing.is_none());
        assert!(r.points.iter().all(|p| p.best_score == 0));
    }
}
