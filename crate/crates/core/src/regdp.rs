//! Optimal registration for a fixed paging RCL.
//!
//! Dynamic programming runs over augmented states `(i0, k, j)`: last report
//! in `i0`, `k` steps ago, mobile now in `j`. One sweep solves every
//! reporting cycle exactly against the previous sweep's report-state values
//! `V(l, 0, l)`, walking `k` down from `k_max` to 0. Level `k_max + 1` is the
//! forced-registration sentinel and never enters arithmetic.

use crate::error::{Error, Result};
use crate::model::{ModelKind, MotionModel, PagingRcl, RegistrationRcl};

/// Default absolute sup-norm stopping threshold.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Cost-to-go over augmented states, levels `k = 0..=k_max`.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    n_states: usize,
    k_max: usize,
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(n_states: usize, k_max: usize) -> Self {
        Self { n_states, k_max, values: vec![0.0; n_states * (k_max + 1) * n_states] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    fn offset(&self, i0: usize, k: usize) -> usize {
        (i0 * (self.k_max + 1) + k) * self.n_states
    }

    /// `V(i0, k, j)`; the sentinel level `k_max + 1` reads as `+∞`.
    pub fn value(&self, i0: usize, k: usize, j: usize) -> f64 {
        if k == self.k_max + 1 {
            return f64::INFINITY;
        }
        self.values[self.offset(i0, k) + j]
    }

    /// Cost-to-go right after a report in `l`.
    pub fn report_value(&self, l: usize) -> f64 {
        self.values[self.offset(l, 0) + l]
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn report_values(&self) -> Vec<f64> {
        (0..self.n_states).map(|l| self.report_value(l)).collect()
    }
}

/// Result of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub value: ValueFunction,
    /// `sup |V_m - V_{m-1}|` for every sweep `m = 1, 2, ...`.
    pub diffs: Vec<f64>,
}

impl ValueIteration {
    pub fn sweeps(&self) -> usize {
        self.diffs.len()
    }

    /// Worst ratio of successive sweep differences, ignoring pairs whose
    /// earlier difference is at the round-off floor `floor`.
    pub fn worst_contraction_ratio(&self, floor: f64) -> f64 {
        self.diffs
            .windows(2)
            .filter(|w| w[0] > floor)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

/// The registration DP for one model and one paging RCL.
pub struct RegistrationDp<'a> {
    model: &'a MotionModel,
    paging: &'a PagingRcl,
}

impl<'a> RegistrationDp<'a> {
    pub fn new(model: &'a MotionModel, paging: &'a PagingRcl) -> Result<Self> {
        paging.validate(model)?;
        Ok(Self { model, paging })
    }

    /// Iteration cap derived from the value bound `β(λ_p 𝒫 |C| + ℛ)/(1-β)`.
    pub fn sweep_cap(&self, tol: f64) -> usize {
        let p = self.model.params();
        let bound = p.beta * (p.lambda_p * p.page_cost * self.model.n_cells() as f64 + p.reg_cost) / (1.0 - p.beta);
        let needed = ((tol * (1.0 - p.beta) / bound).ln() / p.beta.ln()).ceil().max(1.0);
        needed as usize + 50
    }

    /// Expected continuation value at elapsed `k + 1` for each arrival state.
    fn arrival_values(&self, v: &ValueFunction, report: &[f64], i0: usize, k: usize, y: &mut [f64]) {
        let p = self.model.params();
        let order = self.paging.order(i0, k + 1);
        for (l, yl) in y.iter_mut().enumerate() {
            let reset = report[l];
            let page = p.lambda_p * (p.page_cost * order[l] as f64 + reset);
            let cont = if k < self.model.k_max() {
                v.value(i0, k + 1, l).min(p.reg_cost + reset)
            } else {
                p.reg_cost + reset
            };
            *yl = page + (1.0 - p.lambda_p) * cont;
        }
    }

    /// One sweep `V_m = T(V_{m-1})` in place; returns the sup-norm change.
    pub fn sweep(&self, v: &mut ValueFunction) -> f64 {
        let n = self.model.n_states();
        let beta = self.model.params().beta;
        let report = v.report_values();
        let mut y = vec![0.0; n];
        let mut diff: f64 = 0.0;
        for i0 in 0..n {
            for k in (0..=self.model.k_max()).rev() {
                self.arrival_values(v, &report, i0, k, &mut y);
                let o = v.offset(i0, k);
                for j in 0..n {
                    let new = beta * self.model.row(j).iter().map(|&(l, pr)| pr * y[l]).sum::<f64>();
                    diff = diff.max((new - v.values[o + j]).abs());
                    v.values[o + j] = new;
                }
            }
        }
        diff
    }

    /// `sup |T(V) - V|` for the limiting equation with `V` on both sides.
    pub fn fixed_point_residual(&self, v: &ValueFunction) -> f64 {
        let n = self.model.n_states();
        let beta = self.model.params().beta;
        let report = v.report_values();
        let mut y = vec![0.0; n];
        let mut worst: f64 = 0.0;
        for i0 in 0..n {
            for k in 0..=self.model.k_max() {
                self.arrival_values(v, &report, i0, k, &mut y);
                for j in 0..n {
                    let t = beta * self.model.row(j).iter().map(|&(l, pr)| pr * y[l]).sum::<f64>();
                    worst = worst.max((t - v.value(i0, k, j)).abs());
                }
            }
        }
        worst
    }
}

/// Value iteration from `V_0 ≡ 0` until successive sweeps differ by less than `tol`.
pub fn value_iteration(model: &MotionModel, paging: &PagingRcl, tol: f64) -> Result<ValueIteration> {
    if !(tol > 0.0) {
        return Err(Error::InvalidPolicy(format!("tolerance must be positive, got {tol}")));
    }
    let dp = RegistrationDp::new(model, paging)?;
    let cap = dp.sweep_cap(tol);
    let mut value = ValueFunction::zeros(model.n_states(), model.k_max());
    let mut diffs = Vec::new();
    loop {
        let d = dp.sweep(&mut value);
        diffs.push(d);
        if d < tol {
            return Ok(ValueIteration { value, diffs });
        }
        if diffs.len() >= cap {
            return Err(Error::NonConvergence { iterations: diffs.len(), residual: d });
        }
    }
}

/// Optimal registration RCL from a converged value function.
///
/// The mobile stays silent on ties: `g_l(i0, k) = 0` iff
/// `V(i0, k, l) <= ℛ + V(l, 0, l)`.
pub fn extract_registration(model: &MotionModel, v: &ValueFunction) -> RegistrationRcl {
    let n = model.n_states();
    let reg = model.params().reg_cost;
    let mut g = RegistrationRcl::never(model);
    for i0 in 0..n {
        for k in 1..=model.k_max() {
            let row = g.decision_mut(i0, k);
            for (l, bit) in row.iter_mut().enumerate() {
                *bit = !(v.value(i0, k, l) <= reg + v.report_value(l));
            }
        }
    }
    g
}

/// Ping-pong search rank for displacement `x`: 0, +1, -1, +2, -2, ...
pub fn ping_pong_rank(x: i64) -> u64 {
    match x {
        0 => 1,
        x if x > 0 => 2 * x as u64,
        x => 2 * x.unsigned_abs() + 1,
    }
}

/// Translation-invariant registration DP for a symmetric walk.
#[derive(Debug, Clone)]
pub struct WalkSolution {
    pub half_width: usize,
    /// `values[j + half_width]` is `V(j)` for displacement `j`.
    pub values: Vec<f64>,
    /// Registration decision per displacement.
    pub registers: Vec<bool>,
    /// Mobile registers at displacements `<= -d_left`.
    pub d_left: usize,
    /// Mobile registers at displacements `>= d_right`.
    pub d_right: usize,
    pub diffs: Vec<f64>,
}

impl WalkSolution {
    pub fn value(&self, j: i64) -> f64 {
        self.values[(j + self.half_width as i64) as usize]
    }

    pub fn register_set_is_interval_complement(&self) -> bool {
        let h = self.half_width as i64;
        (-h..=h).all(|j| self.registers[(j + h) as usize] == (j >= self.d_right as i64 || j <= -(self.d_left as i64)))
    }
}

/// Value iteration for `V(j)`, `j` the displacement from the last report,
/// under a fixed translation-invariant paging rank `f_star`.
///
/// Displacements beyond the model's half-width are treated as forced
/// registration, which is exact as long as both thresholds fall inside.
pub fn walk_value_iteration<F>(model: &MotionModel, f_star: F, tol: f64) -> Result<WalkSolution>
where
    F: Fn(i64) -> u64,
{
    let (half_width, kernel) = match model.kind() {
        ModelKind::Walk { half_width, kernel } => (*half_width, kernel.clone()),
        _ => return Err(Error::InvalidModel("walk DP needs a symmetric-walk model".into())),
    };
    let p = *model.params();
    let h = half_width as i64;
    let m = (kernel.len() / 2) as i64;
    let len = 2 * half_width + 1;
    let page_term: Vec<f64> = (-h - m..=h + m).map(|x| p.page_cost * f_star(x) as f64).collect();
    let bound = p.beta * (p.lambda_p * p.page_cost * (len as f64 + 2.0 * m as f64) + p.reg_cost) / (1.0 - p.beta);
    let cap = ((tol * (1.0 - p.beta) / bound).ln() / p.beta.ln()).ceil().max(1.0) as usize + 50;

    let mut v = vec![0.0; len];
    let mut diffs = Vec::new();
    loop {
        let v0 = v[half_width];
        let arrival = |l: i64| -> f64 {
            let page = p.lambda_p * (page_term[(l + h + m) as usize] + v0);
            let cont = if l.abs() <= h { v[(l + h) as usize].min(p.reg_cost + v0) } else { p.reg_cost + v0 };
            page + (1.0 - p.lambda_p) * cont
        };
        let next: Vec<f64> = (-h..=h)
            .map(|j| {
                p.beta * kernel.iter().enumerate().map(|(t, &b)| b * arrival(j + t as i64 - m)).sum::<f64>()
            })
            .collect();
        let d = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        diffs.push(d);
        if d < tol {
            break;
        }
        if diffs.len() >= cap {
            return Err(Error::NonConvergence { iterations: diffs.len(), residual: d });
        }
    }
    let v0 = v[half_width];
    let registers: Vec<bool> = v.iter().map(|&x| x >= p.reg_cost + v0).collect();
    let first = |sign: i64| (1..=h).find(|&x| registers[(sign * x + h) as usize]).map(|x| x as usize);
    let (d_left, d_right) = match (first(-1), first(1)) {
        (Some(l), Some(r)) => (l, r),
        _ => {
            return Err(Error::InvalidModel(format!(
                "half_width {half_width} does not contain both registration thresholds"
            )))
        }
    };
    Ok(WalkSolution { half_width, values: v, registers, d_left, d_right, diffs })
}
