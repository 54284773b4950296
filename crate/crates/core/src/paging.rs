//! Maximum-likelihood serial paging.
//!
//! For a fixed registration RCL the belief trajectories inside a reporting
//! cycle do not depend on the paging policy, so the optimal paging RCL pages
//! cells in order of decreasing probability under `w(i0, k-1) P` slot by slot.

use crate::belief::{phi_update_binary, Belief};
use crate::error::{Error, Result};
use crate::model::{MotionModel, PagingOrder, PagingRcl, RegistrationRcl, STOCHASTIC_TOL};

/// Probability of the mobile being in each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDistribution(Vec<f64>);

impl CellDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidDistribution("negative cell probability".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidDistribution(format!("cell probabilities sum to {s}")));
        }
        Ok(Self(p))
    }

    /// Aggregates a state distribution by cell.
    pub fn from_states(model: &MotionModel, q: &[f64]) -> Result<Self> {
        Self::new(model.cell_mass(q))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Cells sorted by decreasing probability, ties by ascending index.
    pub fn ml_cell_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        order.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]));
        order
    }
}

/// Paging order searching cells by decreasing probability.
pub fn ml_paging_order(model: &MotionModel, q: &CellDistribution) -> PagingOrder {
    PagingOrder::from_cell_order(model, &q.ml_cell_order()).expect("sorted cell indices form a permutation")
}

/// Mean number of cells searched under the maximum-likelihood order,
/// `Σ i · q_[i]` over the nonincreasing rearrangement.
pub fn guessing_entropy(q: &CellDistribution) -> f64 {
    let mut sorted = q.0.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().enumerate().map(|(i, &p)| (i + 1) as f64 * p).sum()
}

/// Expected pages when the state distribution is `q` and `order` is used.
pub fn expected_pages(order: &[u32], q: &[f64]) -> f64 {
    order.iter().zip(q).map(|(&r, &p)| r as f64 * p).sum()
}

/// Optimal paging RCL for a fixed registration RCL.
///
/// Once a cycle can no longer continue without a report, later slots are
/// unreachable; they get the ML order of the untrimmed evolution so that a
/// registration step that stops registering there starts from sensible pages.
pub fn derive_paging_rcl(model: &MotionModel, g: &RegistrationRcl) -> PagingRcl {
    let n = model.n_states();
    let mut f = PagingRcl::identity(model);
    let mut q = vec![0.0; n];
    for i0 in 0..n {
        let mut w = Belief::point(n, i0);
        for k in 1..=model.k_max() + 1 {
            model.propagate_into(w.as_slice(), &mut q);
            let cells = CellDistribution(model.cell_mass(&q));
            f.set(i0, k, &ml_paging_order(model, &cells));
            if k <= model.k_max() {
                w = phi_update_binary(model, &w, g.decision(i0, k))
                    .or_else(|_| phi_update_binary(model, &w, &vec![false; n]))
                    .expect("an untrimmed step keeps all mass");
            }
        }
    }
    f
}
