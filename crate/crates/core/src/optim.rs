//! Parameter update rules and learning-rate schedules.
//!
//! Updates operate on [`ParamGroup`]s: a mutable parameter slice, its
//! gradient, and whether weight decay applies. Biases and activation
//! parameters are registered with `decay: false`; decaying the ErfAct scale
//! towards zero would drive the unit towards the zero function.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("parameter group {group} has {values} values but {grads} gradients")]
    GradLength {
        group: usize,
        values: usize,
        grads: usize,
    },
    #[error("expected {expected} parameter groups, got {found}")]
    GroupCount { expected: usize, found: usize },
    #[error("parameter group {group} changed length from {expected} to {found}")]
    BufferShape {
        group: usize,
        expected: usize,
        found: usize,
    },
    #[error("optimizer holds {held} state but {requested} was requested")]
    RuleMismatch {
        held: &'static str,
        requested: &'static str,
    },
    #[error("step {step} outside schedule range 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(&'static str),
}

pub struct ParamGroup<'a> {
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
    pub decay: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Sgd { momentum: f64, weight_decay: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Rule {
    fn name(&self) -> &'static str {
        match self {
            Rule::Sgd { .. } => "sgd",
            Rule::Adam { .. } => "adam",
        }
    }
}

/// Optimizer state: the rule plus per-group moment buffers, allocated on the
/// first step to mirror the parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    rule: Rule,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(rule: Rule) -> Self {
        Self {
            rule,
            first: Vec::new(),
            second: Vec::new(),
            step_count: 0,
        }
    }

    /// SGD with momentum 0.9 and weight decay 5e-4.
    pub fn sgd_default() -> Self {
        Self::new(Rule::Sgd {
            momentum: 0.9,
            weight_decay: 5e-4,
        })
    }

    pub fn adam_default() -> Self {
        Self::new(Rule::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Velocity (SGD) or first moment (Adam) buffers.
    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    /// Allocates buffers for `lengths` and hands them out for seeding.
    pub fn first_moments_mut(&mut self, lengths: &[usize]) -> &mut [Vec<f64>] {
        if self.first.is_empty() {
            self.allocate(lengths);
        }
        &mut self.first
    }

    pub fn step(&mut self, groups: &mut [ParamGroup<'_>], lr: f64) -> Result<(), OptimError> {
        match self.rule {
            Rule::Sgd { .. } => sgd_step(groups, self, lr),
            Rule::Adam { .. } => adam_step(groups, self, lr),
        }
    }

    fn allocate(&mut self, lengths: &[usize]) {
        self.first = lengths.iter().map(|&n| vec![0.0; n]).collect();
        if matches!(self.rule, Rule::Adam { .. }) {
            self.second = lengths.iter().map(|&n| vec![0.0; n]).collect();
        }
    }

    fn prepare(&mut self, groups: &[ParamGroup<'_>]) -> Result<(), OptimError> {
        for (i, g) in groups.iter().enumerate() {
            if g.values.len() != g.grads.len() {
                return Err(OptimError::GradLength {
                    group: i,
                    values: g.values.len(),
                    grads: g.grads.len(),
                });
            }
        }
        if self.first.is_empty() {
            let lengths: Vec<usize> = groups.iter().map(|g| g.values.len()).collect();
            self.allocate(&lengths);
        }
        if self.first.len() != groups.len() {
            return Err(OptimError::GroupCount {
                expected: self.first.len(),
                found: groups.len(),
            });
        }
        for (i, (buf, g)) in self.first.iter().zip(groups).enumerate() {
            if buf.len() != g.values.len() {
                return Err(OptimError::BufferShape {
                    group: i,
                    expected: buf.len(),
                    found: g.values.len(),
                });
            }
        }
        Ok(())
    }
}

/// `g += wd * w` (decayed groups only), `v = momentum * v + g`, `w -= lr * v`.
pub fn sgd_step(
    groups: &mut [ParamGroup<'_>],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<(), OptimError> {
    let Rule::Sgd {
        momentum,
        weight_decay,
    } = state.rule
    else {
        return Err(OptimError::RuleMismatch {
            held: state.rule.name(),
            requested: "sgd",
        });
    };
    state.prepare(groups)?;
    for (group, vel) in groups.iter_mut().zip(state.first.iter_mut()) {
        let wd = if group.decay { weight_decay } else { 0.0 };
        for ((w, &g), v) in group.values.iter_mut().zip(group.grads).zip(vel.iter_mut()) {
            let g = if wd != 0.0 { g + wd * *w } else { g };
            *v = momentum * *v + g;
            *w -= lr * *v;
        }
    }
    state.step_count += 1;
    Ok(())
}

/// Bias-corrected Adam.
pub fn adam_step(
    groups: &mut [ParamGroup<'_>],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<(), OptimError> {
    let Rule::Adam { beta1, beta2, eps } = state.rule else {
        return Err(OptimError::RuleMismatch {
            held: state.rule.name(),
            requested: "adam",
        });
    };
    state.prepare(groups)?;
    let t = (state.step_count + 1) as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((group, m), v) in groups
        .iter_mut()
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for (((w, &g), m), v) in group
            .values
            .iter_mut()
            .zip(group.grads)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.step_count += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// `lr0 * (1 + cos(pi t / total_steps)) / 2`, stepped once per epoch.
    CosineAnnealing {
        lr0: f64,
        total_steps: usize,
    },
    /// `lr0 * factor^floor(t / every)`.
    StepDecay {
        lr0: f64,
        factor: f64,
        every: usize,
    },
}

impl LrSchedule {
    pub fn initial(&self) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::CosineAnnealing { lr0, .. } | LrSchedule::StepDecay { lr0, .. } => lr0,
        }
    }

    pub fn lr_at(&self, step: usize) -> Result<f64, OptimError> {
        match *self {
            LrSchedule::Constant(lr) => Ok(lr),
            LrSchedule::CosineAnnealing { lr0, total_steps } => {
                if total_steps == 0 {
                    return Err(OptimError::InvalidSchedule(
                        "cosine annealing needs total_steps >= 1",
                    ));
                }
                if step > total_steps {
                    return Err(OptimError::StepOutOfRange {
                        step,
                        total: total_steps,
                    });
                }
                let phase = std::f64::consts::PI * step as f64 / total_steps as f64;
                Ok(lr0 * (1.0 + phase.cos()) / 2.0)
            }
            LrSchedule::StepDecay { lr0, factor, every } => {
                if every == 0 {
                    return Err(OptimError::InvalidSchedule("step decay needs every >= 1"));
                }
                Ok(lr0 * factor.powi((step / every) as i32))
            }
        }
    }
}

/// Shorthand for [`LrSchedule::lr_at`].
pub fn lr_at(schedule: &LrSchedule, step: usize) -> Result<f64, OptimError> {
    schedule.lr_at(step)
}
