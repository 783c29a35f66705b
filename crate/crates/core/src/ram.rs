//! Random-walk Metropolis for interval-bounded range parameters, with
//! robust adaptive Metropolis (RAM) scaling of the proposal.
//!
//! A parameter on `(l, u)` is moved on the logit axis
//! `z = log((phi - l) / (u - phi))`, so every proposal lands strictly inside
//! the interval. The proposal is symmetric in `z`, and the acceptance ratio
//! picks up the Jacobian of the back-transform.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SvcError};

pub const DEFAULT_TARGET_ACCEPT: f64 = 0.234;
pub const DEFAULT_DECAY: f64 = 2.0 / 3.0;
pub const DEFAULT_PROPOSAL_SD: f64 = 1.0;

const MIN_SD: f64 = 1e-6;
const MAX_SD: f64 = 1e6;

/// A value constrained to the open interval `(lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedParam {
    value: f64,
    lower: f64,
    upper: f64,
}

impl BoundedParam {
    pub fn new(value: f64, lower: f64, upper: f64) -> Result<Self> {
        check_bounds(lower, upper)?;
        if !(value > lower && value < upper) {
            return Err(SvcError::Domain(format!(
                "value {value} is not strictly inside ({lower}, {upper})"
            )));
        }
        Ok(BoundedParam {
            value,
            lower,
            upper,
        })
    }

    /// The interval midpoint, the default starting value.
    pub fn midpoint(lower: f64, upper: f64) -> Result<Self> {
        check_bounds(lower, upper)?;
        BoundedParam::new(lower + 0.5 * (upper - lower), lower, upper)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `log((phi - l) / (u - phi))`.
    pub fn to_unbounded(&self) -> Result<f64> {
        let below = self.value - self.lower;
        let above = self.upper - self.value;
        if !(below > 0.0 && above > 0.0) {
            return Err(SvcError::Domain(format!(
                "value {} is on or outside ({}, {})",
                self.value, self.lower, self.upper
            )));
        }
        Ok(below.ln() - above.ln())
    }

    /// Inverse of [`BoundedParam::to_unbounded`]:
    /// `l + (u - l) / (1 + exp(-z))`.
    ///
    /// Saturates toward the bounds for large `|z|` but always returns a
    /// value strictly inside the interval.
    pub fn from_unbounded(z: f64, lower: f64, upper: f64) -> BoundedParam {
        debug_assert!(lower < upper);
        let width = upper - lower;
        // Evaluate from the nearer bound to keep precision in the tails.
        let mut value = if z >= 0.0 {
            let e = (-z).exp();
            upper - width * e / (1.0 + e)
        } else {
            let e = z.exp();
            lower + width * e / (1.0 + e)
        };
        if value >= upper {
            value = upper.next_down();
        }
        if value <= lower {
            value = lower.next_up();
        }
        BoundedParam {
            value,
            lower,
            upper,
        }
    }

    /// `d phi / d z = (phi - l)(u - phi) / (u - l)`.
    pub fn transform_derivative(&self) -> f64 {
        (self.value - self.lower) * (self.upper - self.value) / (self.upper - self.lower)
    }

    fn log_span(&self) -> Result<f64> {
        let below = self.value - self.lower;
        let above = self.upper - self.value;
        if !(below > 0.0 && above > 0.0) {
            return Err(SvcError::Domain(format!(
                "value {} is on or outside ({}, {})",
                self.value, self.lower, self.upper
            )));
        }
        Ok(below.ln() + above.ln())
    }
}

fn check_bounds(lower: f64, upper: f64) -> Result<()> {
    if !(lower.is_finite() && upper.is_finite() && lower < upper) {
        return Err(SvcError::Domain(format!(
            "invalid bounds ({lower}, {upper}): need finite lower < upper"
        )));
    }
    Ok(())
}

/// Scalar RAM adaptation state for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamState {
    proposal_sd: f64,
    iteration: u64,
    target: f64,
    decay: f64,
}

impl Default for RamState {
    fn default() -> Self {
        RamState {
            proposal_sd: DEFAULT_PROPOSAL_SD,
            iteration: 0,
            target: DEFAULT_TARGET_ACCEPT,
            decay: DEFAULT_DECAY,
        }
    }
}

impl RamState {
    pub fn new(proposal_sd: f64, target: f64, decay: f64) -> Result<Self> {
        if !(proposal_sd > 0.0 && proposal_sd.is_finite()) {
            return Err(SvcError::Config(format!(
                "proposal sd must be positive, got {proposal_sd}"
            )));
        }
        if !(target > 0.0 && target < 1.0) {
            return Err(SvcError::Config(format!(
                "target acceptance must be in (0, 1), got {target}"
            )));
        }
        if !(decay > 0.5 && decay <= 1.0) {
            return Err(SvcError::Config(format!(
                "adaptation decay must be in (0.5, 1], got {decay}"
            )));
        }
        Ok(RamState {
            proposal_sd: proposal_sd.clamp(MIN_SD, MAX_SD),
            iteration: 0,
            target,
            decay,
        })
    }

    pub fn proposal_sd(&self) -> f64 {
        self.proposal_sd
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// One RAM step: `sd^2 <- sd^2 (1 + t^-decay (accept_prob - target))`.
    pub fn adapt(&self, accept_prob: f64) -> RamState {
        let a = if accept_prob.is_nan() {
            0.0
        } else {
            accept_prob.clamp(0.0, 1.0)
        };
        let t = self.iteration + 1;
        let eta = (t as f64).powf(-self.decay);
        let var = self.proposal_sd * self.proposal_sd * (1.0 + eta * (a - self.target));
        RamState {
            proposal_sd: var.sqrt().clamp(MIN_SD, MAX_SD),
            iteration: t,
            ..*self
        }
    }
}

/// Moves `p` by `step` on the unbounded axis.
pub fn shift(p: &BoundedParam, step: f64) -> Result<BoundedParam> {
    let z = p.to_unbounded()?;
    if step == 0.0 {
        // The transform round trip is only exact to rounding.
        return Ok(*p);
    }
    Ok(BoundedParam::from_unbounded(z + step, p.lower, p.upper))
}

/// Draws `U ~ N(0, sd^2)` and returns the shifted parameter along with `U`.
pub fn propose<R: Rng + ?Sized>(
    p: &BoundedParam,
    s: &RamState,
    rng: &mut R,
) -> Result<(BoundedParam, f64)> {
    let u = s.proposal_sd * rng.sample::<f64, _>(StandardNormal);
    Ok((shift(p, u)?, u))
}

/// `log[(phi' - l)(u - phi')] - log[(phi - l)(u - phi)]`.
pub fn log_jacobian(current: &BoundedParam, proposal: &BoundedParam) -> Result<f64> {
    Ok(proposal.log_span()? - current.log_span()?)
}

/// Accept/reject on `log_alpha`. Returns the decision and `min(1, alpha)`.
pub fn metropolis_decision<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> (bool, f64) {
    if log_alpha.is_nan() {
        return (false, 0.0);
    }
    let prob = log_alpha.min(0.0).exp();
    let u: f64 = rng.random();
    (u < prob, prob)
}
