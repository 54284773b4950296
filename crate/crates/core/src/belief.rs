//! Network-side conditional distribution of the mobile's state.
//!
//! Between reports the network belief evolves by one transition step and is
//! then conditioned on "no page and no registration happened". Paging is
//! independent of the state, so only the registration decision trims mass.

use crate::error::{Error, Result};
use crate::model::{MotionModel, RegistrationRcl, STOCHASTIC_TOL};

/// Denominators at or below this are treated as an impossible no-report branch.
pub const ZERO_MASS_TOL: f64 = 1e-15;

/// A probability vector over states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidDistribution("belief has a negative or non-finite entry".into()));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidDistribution(format!("belief sums to {s}")));
        }
        Ok(Self(w))
    }

    pub fn point(n: usize, state: usize) -> Self {
        let mut w = vec![0.0; n];
        w[state] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, _)| i)
    }

    /// The state carrying all the mass, if this is a point mass.
    pub fn as_point(&self) -> Option<usize> {
        let mut it = self.support();
        match (it.next(), it.next()) {
            (Some(s), None) => Some(s),
            _ => None,
        }
    }

    pub fn sup_distance(&self, other: &Belief) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Normalizes a nonnegative survival vector, clamping round-off negatives.
fn normalize(mut v: Vec<f64>) -> Result<Belief> {
    for x in v.iter_mut() {
        if *x < 0.0 && *x > -ZERO_MASS_TOL {
            *x = 0.0;
        }
    }
    let total: f64 = v.iter().sum();
    if total <= ZERO_MASS_TOL {
        return Err(Error::ZeroSurvivalMass);
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(Belief(v))
}

/// `Φ(w, d)`: belief after one step given that no report occurred, when the
/// mobile registers in state `l` with probability `d[l]`.
pub fn phi_update(model: &MotionModel, w: &Belief, d: &[f64]) -> Result<Belief> {
    if d.len() != model.n_states() {
        return Err(Error::InvalidPolicy(format!(
            "decision vector has {} entries, expected {}",
            d.len(),
            model.n_states()
        )));
    }
    if d.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::InvalidPolicy("registration probabilities must lie in [0,1]".into()));
    }
    let mut q = model.propagate(w.as_slice());
    for (ql, dl) in q.iter_mut().zip(d) {
        *ql *= 1.0 - dl;
    }
    normalize(q)
}

/// [`phi_update`] for a binary decision vector.
pub fn phi_update_binary(model: &MotionModel, w: &Belief, d: &[bool]) -> Result<Belief> {
    let mut q = model.propagate(w.as_slice());
    for (ql, &dl) in q.iter_mut().zip(d) {
        if dl {
            *ql = 0.0;
        }
    }
    normalize(q)
}

/// Beliefs `w(i0, 0..)` within one reporting cycle.
#[derive(Debug, Clone)]
pub struct BeliefPath {
    /// `beliefs[k]` is `w(i0, k)`.
    pub beliefs: Vec<Belief>,
    /// First elapsed time at which a no-report outcome became impossible.
    pub truncated_at: Option<usize>,
}

/// Runs `w(i0, k) = Φ(w(i0, k-1), g(i0, k))` for `k = 1..=k_max`.
pub fn belief_recursion(model: &MotionModel, g: &RegistrationRcl, i0: usize) -> BeliefPath {
    let mut beliefs = vec![Belief::point(model.n_states(), i0)];
    for k in 1..=model.k_max() {
        match phi_update_binary(model, &beliefs[k - 1], g.decision(i0, k)) {
            Ok(w) => beliefs.push(w),
            Err(_) => return BeliefPath { beliefs, truncated_at: Some(k) },
        }
    }
    BeliefPath { beliefs, truncated_at: None }
}

/// Turns a belief-feedback registration law into an RCL by running the
/// belief recursion from every possible report state: `g(i0, k)` is the
/// feedback decision at `w(i0, k-1)`. Slots after a truncation stay zero.
pub fn rcl_from_feedback<F>(model: &MotionModel, mut feedback: F) -> Result<RegistrationRcl>
where
    F: FnMut(&Belief) -> Result<Vec<bool>>,
{
    let n = model.n_states();
    let mut g = RegistrationRcl::never(model);
    for i0 in 0..n {
        let mut w = Belief::point(n, i0);
        for k in 1..=model.k_max() {
            let d = feedback(&w)?;
            if d.len() != n {
                return Err(Error::InvalidPolicy("feedback decision has wrong length".into()));
            }
            g.decision_mut(i0, k).copy_from_slice(&d);
            match phi_update_binary(model, &w, &d) {
                Ok(next) => w = next,
                Err(Error::ZeroSurvivalMass) => break,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(g)
}
