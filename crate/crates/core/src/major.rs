//! Majorization, rearrangements and the structural checks for symmetric
//! random walks: ping-pong paging and two-sided distance thresholds.

use serde::Serialize;

use crate::belief::belief_recursion;
use crate::error::{Error, Result};
use crate::model::{ModelKind, MotionModel, PagingRcl, RegistrationRcl, STOCHASTIC_TOL};
use crate::regdp::ping_pong_rank;

/// Slack on partial sums in majorization comparisons.
pub const MAJORIZATION_TOL: f64 = 1e-12;

/// Probabilities below this difference count as tied when checking orders.
pub const TIE_TOL: f64 = 1e-12;

/// A probability distribution on the integers with finite support, stored as
/// masses on the window `start, start + 1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    start: i64,
    masses: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(start: i64, masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidDistribution("empty support window".into()));
        }
        if masses.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidDistribution("negative or non-finite mass".into()));
        }
        let s: f64 = masses.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidDistribution(format!("masses sum to {s}")));
        }
        Ok(Self { start, masses })
    }

    /// Symmetric window `-h..=h` around the origin.
    pub fn centered(masses: Vec<f64>) -> Result<Self> {
        if masses.len() % 2 != 1 {
            return Err(Error::InvalidDistribution("centred window needs odd length".into()));
        }
        Self::new(-((masses.len() / 2) as i64), masses)
    }

    pub fn point(at: i64) -> Self {
        Self { start: at, masses: vec![1.0] }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    /// Last position of the window.
    pub fn end(&self) -> i64 {
        self.start + self.masses.len() as i64 - 1
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn at(&self, x: i64) -> f64 {
        if x < self.start || x > self.end() {
            0.0
        } else {
            self.masses[(x - self.start) as usize]
        }
    }
}

/// Masses sorted nonincreasing.
pub fn rearrange_nonincreasing(x: &FiniteDistribution) -> Vec<f64> {
    sorted_desc(&x.masses)
}

fn sorted_desc(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `x ≺ y` for nonnegative vectors of possibly different length (shorter one
/// padded with zeros): equal totals and dominated partial sums of the
/// nonincreasing rearrangements, both within `tol`.
pub fn majorized_by(x: &[f64], y: &[f64], tol: f64) -> bool {
    let xs = sorted_desc(x);
    let ys = sorted_desc(y);
    let len = xs.len().max(ys.len());
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..len {
        sx += xs.get(i).copied().unwrap_or(0.0);
        sy += ys.get(i).copied().unwrap_or(0.0);
        if sx > sy + tol {
            return false;
        }
    }
    (sx - sy).abs() <= tol
}

/// True iff `x ≺ y`, i.e. `y` majorizes `x`.
pub fn majorizes(x: &FiniteDistribution, y: &FiniteDistribution) -> bool {
    majorized_by(&x.masses, &y.masses, MAJORIZATION_TOL)
}

/// Positions in neat order: 0, 1, -1, 2, -2, ...
fn neat_positions(radius: i64) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=radius).flat_map(|r| [r, -r]))
}

/// `μ_0 ≥ μ_1 ≥ μ_{-1} ≥ μ_2 ≥ μ_{-2} ≥ ...`, up to `tol`.
pub fn is_neat_within(x: &FiniteDistribution, tol: f64) -> bool {
    let radius = x.start.abs().max(x.end().abs()) + 1;
    let chain: Vec<f64> = neat_positions(radius).map(|p| x.at(p)).collect();
    chain.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Exact neatness test.
pub fn is_neat(x: &FiniteDistribution) -> bool {
    is_neat_within(x, 0.0)
}

/// Neatness of an arbitrary function given by `values[center + j]` at `j`.
pub fn is_neat_function(values: &[f64], center: usize, tol: f64) -> bool {
    let at = |j: i64| {
        let idx = center as i64 + j;
        (0..values.len() as i64).contains(&idx).then(|| values[idx as usize])
    };
    let radius = center.max(values.len() - center) as i64;
    let chain: Vec<f64> = neat_positions(radius).map_while(at).collect();
    chain.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Removes mass `lambda` from the least likely positions (the boundary
/// position partially) and renormalizes by `1 - lambda`. Among equal
/// masses, positions further right are trimmed first.
pub fn min_likelihood_trim(mu: &FiniteDistribution, lambda: f64) -> Result<FiniteDistribution> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidDistribution(format!("trim mass must lie in [0,1), got {lambda}")));
    }
    let mut order: Vec<usize> = (0..mu.masses.len()).collect();
    order.sort_by(|&a, &b| mu.masses[a].total_cmp(&mu.masses[b]).then(b.cmp(&a)));
    let mut left = lambda;
    let mut out = mu.masses.clone();
    for i in order {
        if left <= 0.0 {
            break;
        }
        let take = out[i].min(left);
        out[i] -= take;
        left -= take;
    }
    out.iter_mut().for_each(|m| *m /= 1.0 - lambda);
    FiniteDistribution::new(mu.start, out)
}

/// Convolution of two distributions on the integers.
pub fn convolve(x: &FiniteDistribution, b: &FiniteDistribution) -> FiniteDistribution {
    FiniteDistribution { start: x.start + b.start, masses: convolve_slices(&x.masses, &b.masses) }
}

/// Plain sequence convolution.
pub fn convolve_slices(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + y.len() - 1];
    for (i, &a) in x.iter().enumerate() {
        for (j, &c) in y.iter().enumerate() {
            out[i + j] += a * c;
        }
    }
    out
}

/// Outcome of [`check_walk_structure`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct WalkStructureReport {
    /// Every `f(i0, k)` orders reachable states by ping-pong rank, up to ties.
    pub ping_pong: bool,
    /// Every `g(i0, k)` registers exactly outside an interval around `i0`.
    pub threshold: bool,
    /// Some slot is only consistent with `d_l = d_r - 1` (extra cell on the right).
    pub right_extra: bool,
    /// Some slot is only consistent with `d_r = d_l - 1` (extra cell on the left).
    pub left_extra: bool,
    /// Report states far enough from the clamped edges to be checked.
    pub checked_report_states: Vec<usize>,
    pub first_failure: Option<String>,
}

impl WalkStructureReport {
    pub fn passes(&self) -> bool {
        self.ping_pong && self.threshold
    }

    fn fail(&mut self, msg: String) {
        if self.first_failure.is_none() {
            self.first_failure = Some(msg);
        }
    }
}

/// Whether ranks agree with `key` order on the given states, ignoring ties in `q`.
fn order_consistent(states: &[usize], ranks: &[u32], q: &[f64], key: impl Fn(usize) -> u64) -> bool {
    for &a in states {
        for &b in states {
            if key(a) < key(b) && ranks[a] > ranks[b] && (q[a] - q[b]).abs() > TIE_TOL {
                return false;
            }
        }
    }
    true
}

/// Inclusive integer interval, unbounded above when `hi` is `None`.
#[derive(Clone, Copy)]
struct Range {
    lo: i64,
    hi: Option<i64>,
}

impl Range {
    fn intersects(self, other: Range) -> bool {
        let lo = self.lo.max(other.lo);
        match (self.hi, other.hi) {
            (Some(a), Some(b)) => lo <= a.min(b),
            (Some(a), None) | (None, Some(a)) => lo <= a,
            (None, None) => true,
        }
    }

    fn widen_up(self) -> Range {
        Range { lo: self.lo, hi: self.hi.map(|h| h + 1) }
    }
}

/// Feasible thresholds for one decision vector: silent iff `-d_l < x < d_r`.
/// Returns `None` when the silent displacements are not contiguous.
fn threshold_ranges(displacements: &[(i64, bool)]) -> Option<(Range, Range)> {
    let silent: Vec<i64> = displacements.iter().filter(|(_, r)| !r).map(|&(x, _)| x).collect();
    let (Some(&min_s), Some(&max_s)) = (silent.iter().min(), silent.iter().max()) else {
        return Some((Range { lo: i64::MIN / 4, hi: None }, Range { lo: i64::MIN / 4, hi: None }));
    };
    let mut right = Range { lo: max_s + 1, hi: None };
    let mut left = Range { lo: 1 - min_s, hi: None };
    for &(x, reg) in displacements {
        if !reg {
            continue;
        }
        if x > max_s {
            right.hi = Some(right.hi.map_or(x, |h| h.min(x)));
        } else if x < min_s {
            left.hi = Some(left.hi.map_or(-x, |h| h.min(-x)));
        } else {
            return None;
        }
    }
    Some((left, right))
}

/// Checks that `f` pages reachable states in ping-pong order around the last
/// report and that `g` registers outside `[-d_l + 1, d_r - 1]` with
/// `|d_l - d_r| <= 1`, on every slot reachable from a report state whose
/// cycle cannot touch the clamped edges.
pub fn check_walk_structure(model: &MotionModel, f: &PagingRcl, g: &RegistrationRcl) -> Result<WalkStructureReport> {
    let m = match model.kind() {
        ModelKind::Walk { kernel, .. } => (kernel.len() / 2) as i64,
        _ => return Err(Error::InvalidModel("structure check needs a symmetric-walk model".into())),
    };
    f.validate(model)?;
    g.validate(model)?;
    let n = model.n_states() as i64;
    let reach = (model.k_max() as i64 + 1) * m;
    let mut report = WalkStructureReport { ping_pong: true, threshold: true, ..Default::default() };
    let mut q = vec![0.0; model.n_states()];
    for i0 in 0..n {
        if i0 - reach < 0 || i0 + reach > n - 1 {
            continue;
        }
        let center = i0 as usize;
        report.checked_report_states.push(center);
        let path = belief_recursion(model, g, center);
        for (km1, w) in path.beliefs.iter().enumerate() {
            let k = km1 + 1;
            model.propagate_into(w.as_slice(), &mut q);
            let support: Vec<usize> = (0..model.n_states()).filter(|&l| q[l] > 0.0).collect();
            let ranks = f.order(center, k);
            let plus = order_consistent(&support, ranks, &q, |l| ping_pong_rank(l as i64 - i0));
            let minus = order_consistent(&support, ranks, &q, |l| ping_pong_rank(i0 - l as i64));
            if !plus && !minus {
                report.ping_pong = false;
                report.fail(format!("paging at report state {center}, elapsed {k} is not ping-pong"));
            }
            if k > model.k_max() {
                continue;
            }
            let decision = g.decision(center, k);
            let disp: Vec<(i64, bool)> = support.iter().map(|&l| (l as i64 - i0, decision[l])).collect();
            match threshold_ranges(&disp) {
                None => {
                    report.threshold = false;
                    report.fail(format!("registration at report state {center}, elapsed {k} has a hole"));
                }
                Some((left, right)) => {
                    // d_l ∈ {d_r, d_r - 1}  ⇔  d_r ∈ [d_l, d_l + 1]
                    let right_side = right.intersects(left.widen_up());
                    let left_side = left.intersects(right.widen_up());
                    let equal = left.intersects(right);
                    if !right_side && !left_side {
                        report.threshold = false;
                        report.fail(format!("registration thresholds at report state {center}, elapsed {k} differ by more than one"));
                    } else if !equal {
                        if right_side {
                            report.right_extra = true;
                        } else {
                            report.left_extra = true;
                        }
                    }
                }
            }
        }
    }
    if report.checked_report_states.is_empty() {
        return Err(Error::InvalidModel("walk is too narrow for any report state to avoid the edges".into()));
    }
    Ok(report)
}

/// Registration RCL registering at displacements `>= d_right` or `<= -d_left`.
pub fn walk_threshold_rcl(model: &MotionModel, d_left: usize, d_right: usize) -> RegistrationRcl {
    let mut g = RegistrationRcl::never(model);
    let n = model.n_states();
    for i0 in 0..n {
        for k in 1..=model.k_max() {
            for (l, bit) in g.decision_mut(i0, k).iter_mut().enumerate() {
                let x = l as i64 - i0 as i64;
                *bit = x >= d_right as i64 || x <= -(d_left as i64);
            }
        }
    }
    g
}

/// Paging RCL searching states in ping-pong order around the last report.
pub fn ping_pong_rcl(model: &MotionModel) -> Result<PagingRcl> {
    let n = model.n_states();
    let mut f = PagingRcl::identity(model);
    for i0 in 0..n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&l| ping_pong_rank(l as i64 - i0 as i64));
        let cells: Vec<usize> = order.iter().map(|&s| model.cell_of(s)).collect();
        let po = crate::model::PagingOrder::from_cell_order(model, &cells)?;
        for k in 1..=model.k_max() + 1 {
            f.set(i0, k, &po);
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_symmetric_walk, CostParams};

    fn d(start: i64, m: &[f64]) -> FiniteDistribution {
        FiniteDistribution::new(start, m.to_vec()).unwrap()
    }

    #[test]
    fn rearrangement() {
        assert_eq!(rearrange_nonincreasing(&d(0, &[0.2, 0.5, 0.3])), vec![0.5, 0.3, 0.2]);
        assert_eq!(rearrange_nonincreasing(&d(0, &[0.5, 0.3, 0.2])), vec![0.5, 0.3, 0.2]);
        assert_eq!(rearrange_nonincreasing(&d(0, &[0.25; 4])), vec![0.25; 4]);
    }

    #[test]
    fn majorization_examples() {
        let x = d(0, &[0.2, 0.3, 0.5]);
        let y = d(0, &[0.1, 0.4, 0.5]);
        assert!(majorizes(&x, &x));
        assert!(majorizes(&x, &y));
        assert!(!majorizes(&y, &x));
        assert!(majorizes(&d(0, &[0.25; 4]), &FiniteDistribution::point(3)));
        assert!(!majorizes(&FiniteDistribution::point(3), &d(0, &[0.25; 4])));
    }

    #[test]
    fn neatness_examples() {
        assert!(is_neat(&FiniteDistribution::point(0)));
        assert!(is_neat(&d(-1, &[0.25, 0.5, 0.25])));
        assert!(!is_neat(&d(-1, &[0.5, 0.3, 0.2])));
        assert!(!is_neat(&FiniteDistribution::point(1)));
        assert!(is_neat(&d(0, &[0.6, 0.4])));
        assert!(!is_neat(&d(-1, &[0.4, 0.6])));
    }

    #[test]
    fn trimming_examples() {
        let mu = d(0, &[0.5, 0.3, 0.2]);
        assert_eq!(min_likelihood_trim(&mu, 0.0).unwrap(), mu);
        let nu = min_likelihood_trim(&mu, 0.2).unwrap();
        let expect = [0.625, 0.375, 0.0];
        for (a, b) in nu.masses().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let u = d(0, &[0.2; 5]);
        let t = min_likelihood_trim(&u, 0.4).unwrap();
        let mut sorted = rearrange_nonincreasing(&t);
        sorted.retain(|&x| x > 1e-15);
        assert_eq!(sorted.len(), 3);
        assert!(sorted.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(min_likelihood_trim(&u, 1.0).is_err());
    }

    #[test]
    fn convolution_examples() {
        let x = d(-2, &[0.1, 0.6, 0.3]);
        assert_eq!(convolve(&x, &FiniteDistribution::point(0)), x);
        assert_eq!(convolve(&FiniteDistribution::point(2), &FiniteDistribution::point(-5)), FiniteDistribution::point(-3));
        let half = d(0, &[0.5, 0.5]);
        assert_eq!(convolve(&half, &half), d(0, &[0.25, 0.5, 0.25]));
    }

    fn walk() -> MotionModel {
        let p = CostParams { lambda_p: 0.1, page_cost: 1.0, reg_cost: 0.5, beta: 0.9, k_max: 5 };
        build_symmetric_walk(14, &[0.25, 0.5, 0.25], p).unwrap()
    }

    #[test]
    fn ping_pong_with_thresholds_passes() {
        let m = walk();
        let f = ping_pong_rcl(&m).unwrap();
        let g = walk_threshold_rcl(&m, 3, 3);
        let r = check_walk_structure(&m, &f, &g).unwrap();
        assert!(r.passes(), "{r:?}");
        assert!(!r.left_extra && !r.right_extra);
        let g = walk_threshold_rcl(&m, 2, 3);
        let r = check_walk_structure(&m, &f, &g).unwrap();
        assert!(r.passes(), "{r:?}");
        assert!(r.right_extra && !r.left_extra);
    }

    #[test]
    fn hole_fails() {
        let p = CostParams { lambda_p: 0.1, page_cost: 1.0, reg_cost: 0.5, beta: 0.9, k_max: 5 };
        let m = build_symmetric_walk(14, &[0.2; 5], p).unwrap();
        let f = ping_pong_rcl(&m).unwrap();
        let mut g = walk_threshold_rcl(&m, 3, 3);
        // register at +3 but not at +4
        for i0 in 0..m.n_states() {
            for k in 1..=m.k_max() {
                if i0 + 4 < m.n_states() {
                    g.decision_mut(i0, k)[i0 + 4] = false;
                }
            }
        }
        let r = check_walk_structure(&m, &f, &g).unwrap();
        assert!(!r.threshold);
        assert!(r.first_failure.is_some());
    }

    #[test]
    fn lopsided_thresholds_fail() {
        let m = walk();
        let f = ping_pong_rcl(&m).unwrap();
        let r = check_walk_structure(&m, &f, &walk_threshold_rcl(&m, 1, 4)).unwrap();
        assert!(!r.threshold);
    }

    #[test]
    fn reversed_paging_fails() {
        let m = walk();
        let mut f = ping_pong_rcl(&m).unwrap();
        let n = m.n_states();
        for i0 in 0..n {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&l| std::cmp::Reverse(ping_pong_rank(l as i64 - i0 as i64)));
            let po = crate::model::PagingOrder::from_cell_order(&m, &order).unwrap();
            f.set(i0, 1, &po);
        }
        let r = check_walk_structure(&m, &f, &walk_threshold_rcl(&m, 3, 3)).unwrap();
        assert!(!r.ping_pong);
    }
}
