//! Continuation on the penalized smoothed objective.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ascent::{local_maximize_gr, AscentOptions};
use super::{AlgorithmTag, RecoveryTrace, DEGENERATE_NORM};
use crate::error::{Error, Result};
use crate::linalg::normalized;
use crate::objective::PenalizedObjective;
use crate::tensor::Tensor3;

/// Smoothing radii `t_0 > t_1 > ... > t_m = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HomotopySchedule {
    t_values: Vec<f64>,
}

impl HomotopySchedule {
    pub fn new(t_values: Vec<f64>) -> Result<Self> {
        match t_values.last() {
            None => return Err(Error::invalid("schedule is empty")),
            Some(&last) if last != 0.0 => {
                return Err(Error::invalid(format!("schedule must end at 0, ends at {last}")))
            }
            _ => {}
        }
        if t_values.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("schedule values must be finite and >= 0"));
        }
        if t_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("schedule must be strictly decreasing"));
        }
        Ok(Self { t_values })
    }

    /// `count` geometrically spaced radii from `start` down to `end`, then 0.
    pub fn geometric(start: f64, end: f64, count: usize) -> Result<Self> {
        if !(start > 0.0 && end > 0.0 && end <= start) || count == 0 {
            return Err(Error::invalid(format!(
                "geometric schedule needs start >= end > 0 and count >= 1, got ({start}, {end}, {count})"
            )));
        }
        if count == 1 && end != start {
            return Err(Error::invalid("a single radius needs start == end"));
        }
        let mut t_values: Vec<f64> = if count == 1 {
            vec![start]
        } else {
            let ratio = (end / start).ln() / (count - 1) as f64;
            (0..count).map(|k| start * (ratio * k as f64).exp()).collect()
        };
        t_values.push(0.0);
        Self::new(t_values)
    }

    /// Twelve radii from `10/n` down to `1/(100 n)`, then 0.
    pub fn default_for(n: usize) -> Self {
        let n = n.max(1) as f64;
        Self::geometric(10.0 / n, 0.01 / n, 12).expect("valid default schedule")
    }

    pub fn t_values(&self) -> &[f64] {
        &self.t_values
    }

    pub fn len(&self) -> usize {
        self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_values.is_empty()
    }
}

impl TryFrom<Vec<f64>> for HomotopySchedule {
    type Error = Error;

    fn try_from(t_values: Vec<f64>) -> Result<Self> {
        Self::new(t_values)
    }
}

impl From<HomotopySchedule> for Vec<f64> {
    fn from(s: HomotopySchedule) -> Self {
        s.t_values
    }
}

/// What to do when an inner solve stalls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StallPolicy {
    #[default]
    Fail,
    /// Keep the best point of the stalled stage and move on.
    Continue,
}

/// Result of the inner solve at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    /// `g_r` after every accepted step of this stage.
    pub values: Vec<f64>,
}

/// Runs the continuation from `z / (3 τ̂ (n + 2))`, one local ascent per
/// radius, each warm-started at the previous stage's point.
pub fn homotopy_stages(
    obj: &PenalizedObjective<'_>,
    schedule: &HomotopySchedule,
    opts: &AscentOptions,
    policy: StallPolicy,
) -> Result<Vec<StageOutcome>> {
    let mut x = obj.x_dagger();
    let mut stages = Vec::with_capacity(schedule.len());
    for (stage, &t) in schedule.t_values().iter().enumerate() {
        let outcome = match local_maximize_gr(obj, &x, t, opts) {
            Ok(out) => StageOutcome {
                stage,
                t,
                x: out.x,
                value: out.value,
                grad_norm: out.grad_norm,
                iterations: out.iterations,
                converged: out.converged,
                stalled: false,
                values: out.values,
            },
            Err(Error::Stalled {
                iterations,
                grad_norm,
                best,
                ..
            }) => {
                if policy == StallPolicy::Fail {
                    return Err(Error::Stalled {
                        stage: Some(stage),
                        iterations,
                        grad_norm,
                        best,
                    });
                }
                log::warn!("stage {stage} (t = {t:e}) stalled; continuing from best point");
                let value = obj.value(&best, t)?;
                StageOutcome {
                    stage,
                    t,
                    x: best,
                    value,
                    grad_norm,
                    iterations,
                    converged: false,
                    stalled: true,
                    values: vec![value],
                }
            }
            Err(e) => return Err(e),
        };
        x = outcome.x.clone();
        stages.push(outcome);
    }
    Ok(stages)
}

/// Full homotopy continuation. The trace holds the normalized stage
/// solutions; the last one is the `t = 0` answer.
pub fn homotopy_full(
    t: &Tensor3,
    schedule: &HomotopySchedule,
    tau_hat: f64,
    opts: &AscentOptions,
) -> Result<RecoveryTrace> {
    let start = Instant::now();
    let obj = PenalizedObjective::new(t, tau_hat)?;
    let stages = homotopy_stages(&obj, schedule, opts, StallPolicy::Fail)?;
    let last = stages.last().expect("schedule is nonempty");
    let final_x = normalized(&last.x, DEGENERATE_NORM).ok_or_else(|| {
        Error::Degenerate("continuation ended at the origin".into())
    })?;
    let mut iterates: Vec<Vec<f64>> = stages[..stages.len() - 1]
        .iter()
        .filter_map(|s| normalized(&s.x, DEGENERATE_NORM))
        .collect();
    iterates.push(final_x);
    Ok(RecoveryTrace {
        algorithm: AlgorithmTag::FullHomotopy,
        iterates,
        correlations: None,
        converged: last.converged,
        iterations_used: stages.len(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}
