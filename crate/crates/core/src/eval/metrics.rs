//! Evaluation metrics and box statistics.

use serde::{Deserialize, Serialize};

use crate::envs::mre_reward;
use crate::error::{Error, Result};

use super::trajectory::Trajectory;

/// Mean zero-discount task reward, recomputed from the logged signals.
pub fn mean_task_reward(traj: &Trajectory) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::config("empty trajectory"));
    }
    let m = traj.channels;
    let sum: f64 = (0..traj.len())
        .map(|k| {
            mre_reward(
                &traj.reference[k * m..(k + 1) * m],
                &traj.measurement[k * m..(k + 1) * m],
                traj.limit,
                0.0,
            )
        })
        .sum();
    Ok(sum / traj.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// Mean reward of each segment after the skipped transient.
    pub segments: Vec<f64>,
    pub mean: f64,
    /// Steps that entered the average.
    pub evaluated_steps: usize,
}

/// Per-segment means of `rewards` with the first `skip` steps of every
/// `segment`-step block dropped.
pub fn steady_state_metric(rewards: &[f64], segment: usize, skip: usize) -> Result<SteadyState> {
    if segment == 0 || skip >= segment {
        return Err(Error::config("skip must be shorter than the segment"));
    }
    if rewards.is_empty() || rewards.len() % segment != 0 {
        return Err(Error::dim("trajectory length (multiple of the segment)", segment, rewards.len()));
    }
    let segments: Vec<f64> = rewards
        .chunks(segment)
        .map(|c| c[skip..].iter().sum::<f64>() / (segment - skip) as f64)
        .collect();
    let mean = segments.iter().sum::<f64>() / segments.len() as f64;
    Ok(SteadyState {
        evaluated_steps: segments.len() * (segment - skip),
        segments,
        mean,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Whisker ends at 1.5 IQR, clamped to the data.
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Labelled values beyond the whiskers; kept, never dropped.
    pub outliers: Vec<Outlier>,
}

impl BoxStats {
    pub fn from_labelled(values: &[(String, f64)]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("box statistics of an empty sample"));
        }
        if values.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::config("box statistics of non-finite values"));
        }
        let mut sorted: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile(&sorted, 0.25);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = sorted.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
        Ok(BoxStats {
            n: sorted.len(),
            min: sorted[0],
            q1,
            median: quantile(&sorted, 0.5),
            q3,
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            whisker_low: inside.first().copied().unwrap_or(q1),
            whisker_high: inside.last().copied().unwrap_or(q3),
            outliers: values
                .iter()
                .filter(|(_, v)| !(lo..=hi).contains(v))
                .map(|(l, v)| Outlier {
                    label: l.clone(),
                    value: *v,
                })
                .collect(),
        })
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        let labelled: Vec<(String, f64)> = values.iter().enumerate().map(|(i, v)| (i.to_string(), *v)).collect();
        Self::from_labelled(&labelled)
    }
}

/// Relative improvement of `candidate` over `baseline` for non-positive
/// rewards: `(baseline - candidate) / baseline`, positive when better.
pub fn relative_improvement(candidate: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (baseline - candidate) / baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;

    fn constant_error_grid(err: f64, steps: usize) -> Trajectory {
        let mut t = Trajectory::new(EnvKind::Grid, 10.0);
        for _ in 0..steps {
            t.push(&[1.0, 0.0, 0.0], &[1.0 - err, 0.0, 0.0], &[0.0; 3], &[0.0; 3], &[0.0; 3], &[], 0.0, false)
                .unwrap();
        }
        t
    }

    #[test]
    fn perfect_tracking_is_zero() {
        assert_eq!(mean_task_reward(&constant_error_grid(0.0, 10)).unwrap(), 0.0);
    }

    #[test]
    fn full_scale_d_error_is_minus_one_third() {
        let r = mean_task_reward(&constant_error_grid(10.0, 10)).unwrap();
        assert!((r + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn transient_only_errors_are_masked() {
        let mut rewards = vec![0.0; 10_000];
        for seg in 0..20 {
            for k in 0..100 {
                rewards[seg * 500 + k] = -0.3;
            }
        }
        let ss = steady_state_metric(&rewards, 500, 100).unwrap();
        assert_eq!(ss.segments, vec![0.0; 20]);
        assert_eq!(ss.mean, 0.0);
        assert_eq!(ss.evaluated_steps, 20 * 400);
        assert!(steady_state_metric(&rewards[..9_999], 500, 100).is_err());
        assert!(steady_state_metric(&rewards, 500, 500).is_err());
    }

    #[test]
    fn box_stats_quartiles() {
        let b = BoxStats::from_values(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        assert_eq!(b.outliers.len(), 1);
        assert_eq!(b.outliers[0].value, 100.0);
        assert_eq!(b.whisker_high, 4.0);
    }

    #[test]
    fn improvement_sign() {
        assert_eq!(relative_improvement(-0.0273, -0.0546), Some(0.5));
        assert!(relative_improvement(-0.06, -0.05).unwrap() < 0.0);
        assert_eq!(relative_improvement(0.0, 0.0), None);
    }
}
