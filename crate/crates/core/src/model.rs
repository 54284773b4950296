//! Motion models, cell partitions and the reduced-complexity policy tables.
//!
//! A [`MotionModel`] is a finite Markov chain over states, a partition of the
//! states into cells (the paging unit), a known initial state and the event
//! and cost parameters. Policies are stored as reduced complexity laws
//! (RCLs): tables indexed by the last reported state `i0` and the elapsed
//! time `k` since that report.
//!
//! Index conventions used throughout the crate:
//!
//! * `PagingRcl::order(i0, k)` is the paging order used for a page that
//!   arrives `k` steps after the report, `1 <= k <= k_max + 1`.
//! * `RegistrationRcl::decision(i0, k)` is the registration vector applied
//!   when the mobile arrives at elapsed time `k` without being paged,
//!   `1 <= k <= k_max`. At `k = k_max + 1` registration is forced.

use crate::error::{Error, Result};

/// Tolerance on row sums and probability totals.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Event and cost parameters shared by every model family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    /// Probability of a page at each step.
    pub lambda_p: f64,
    /// Cost of searching one cell.
    pub page_cost: f64,
    /// Cost of one registration.
    pub reg_cost: f64,
    /// Discount factor.
    pub beta: f64,
    /// Registration is forced once `k_max + 1` steps elapse without a report.
    pub k_max: usize,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidModel(format!("beta must lie in (0,1), got {}", self.beta)));
        }
        if !(self.lambda_p >= 0.0 && self.lambda_p < 1.0) {
            return Err(Error::InvalidModel(format!(
                "lambda_p must lie in [0,1), got {}",
                self.lambda_p
            )));
        }
        if !(self.page_cost > 0.0) || !self.page_cost.is_finite() {
            return Err(Error::InvalidModel(format!("page cost must be positive, got {}", self.page_cost)));
        }
        if !(self.reg_cost > 0.0) || !self.reg_cost.is_finite() {
            return Err(Error::InvalidModel(format!(
                "registration cost must be positive, got {}",
                self.reg_cost
            )));
        }
        if self.k_max < 1 {
            return Err(Error::InvalidModel("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which builder produced a model. Kept so that solvers specialised to a
/// geometry (the translation-invariant walk DP) can recover it.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Torus { i_max: usize, j_max: usize },
    Simple,
    /// Displacement kernel `kernel[x + m]` for `x` in `-m..=m`.
    Walk { half_width: usize, kernel: Vec<f64> },
    Explicit,
}

/// A finite-state mobility model with its cell partition and cost parameters.
#[derive(Debug, Clone)]
pub struct MotionModel {
    kind: ModelKind,
    n_states: usize,
    cell_of: Vec<usize>,
    cells: Vec<Vec<usize>>,
    rows: Vec<Vec<(usize, f64)>>,
    x0: usize,
    params: CostParams,
}

impl MotionModel {
    /// Builds a model from a dense row-stochastic matrix.
    pub fn new(
        kind: ModelKind,
        cells: Vec<Vec<usize>>,
        p: Vec<Vec<f64>>,
        x0: usize,
        params: CostParams,
    ) -> Result<Self> {
        params.validate()?;
        let n = p.len();
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one state".into()));
        }
        let mut rows = Vec::with_capacity(n);
        for (i, row) in p.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!("row {i} has length {}, expected {n}", row.len())));
            }
            let mut sum = 0.0;
            let mut sparse = Vec::new();
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidModel(format!("P[{i}][{j}] = {v} is not a probability")));
                }
                sum += v;
                if v > 0.0 {
                    sparse.push((j, v));
                }
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidModel(format!("row {i} sums to {sum}")));
            }
            rows.push(sparse);
        }
        let mut cell_of = vec![usize::MAX; n];
        for (c, members) in cells.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidModel(format!("cell {c} is empty")));
            }
            for &s in members {
                if s >= n {
                    return Err(Error::InvalidModel(format!("cell {c} references state {s} >= {n}")));
                }
                if cell_of[s] != usize::MAX {
                    return Err(Error::InvalidModel(format!("state {s} belongs to more than one cell")));
                }
                cell_of[s] = c;
            }
        }
        if let Some(s) = cell_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidModel(format!("state {s} is not in any cell")));
        }
        if x0 >= n {
            return Err(Error::InvalidModel(format!("initial state {x0} out of range")));
        }
        Ok(Self { kind, n_states: n, cell_of, cells, rows, x0, params })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell_of(&self, state: usize) -> usize {
        self.cell_of[state]
    }

    pub fn x0(&self) -> usize {
        self.x0
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn k_max(&self) -> usize {
        self.params.k_max
    }

    /// Nonzero entries of row `i` of the transition matrix.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|&&(l, _)| l == j).map_or(0.0, |&(_, p)| p)
    }

    pub fn dense_matrix(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n_states]; self.n_states];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[i][j] += p;
            }
        }
        m
    }

    /// Row vector times transition matrix.
    pub fn propagate(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        self.propagate_into(w, &mut out);
        out
    }

    pub fn propagate_into(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            for &(l, p) in &self.rows[j] {
                out[l] += wj * p;
            }
        }
    }

    /// Aggregates a state vector into per-cell mass.
    pub fn cell_mass(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cells.len()];
        for (s, &v) in q.iter().enumerate() {
            out[self.cell_of[s]] += v;
        }
        out
    }

    /// Copy of the model with different cost parameters.
    pub fn with_params(&self, params: CostParams) -> Result<Self> {
        params.validate()?;
        let mut m = self.clone();
        m.params = params;
        Ok(m)
    }
}

/// Builds a one-state-per-cell torus with stay/up/down/left/right moves.
///
/// State `(i, j)` has index `i * j_max + j`; `i` is the horizontal axis.
#[allow(clippy::too_many_arguments)]
pub fn build_torus(
    i_max: usize,
    j_max: usize,
    p_stay: f64,
    p_up: f64,
    p_down: f64,
    p_left: f64,
    p_right: f64,
    x0: (usize, usize),
    params: CostParams,
) -> Result<MotionModel> {
    if i_max < 2 || j_max < 2 {
        return Err(Error::InvalidModel(format!("torus needs both dimensions >= 2, got {i_max}x{j_max}")));
    }
    let probs = [p_stay, p_up, p_down, p_left, p_right];
    if probs.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidModel("torus move probabilities must be nonnegative".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("torus move probabilities sum to {total}")));
    }
    if x0.0 >= i_max || x0.1 >= j_max {
        return Err(Error::InvalidModel(format!("initial cell {x0:?} outside the grid")));
    }
    let n = i_max * j_max;
    let idx = |i: usize, j: usize| i * j_max + j;
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..i_max {
        for j in 0..j_max {
            let s = idx(i, j);
            p[s][s] += p_stay;
            p[s][idx(i, (j + 1) % j_max)] += p_up;
            p[s][idx(i, (j + j_max - 1) % j_max)] += p_down;
            p[s][idx((i + i_max - 1) % i_max, j)] += p_left;
            p[s][idx((i + 1) % i_max, j)] += p_right;
        }
    }
    let cells = (0..n).map(|s| vec![s]).collect();
    MotionModel::new(ModelKind::Torus { i_max, j_max }, cells, p, idx(x0.0, x0.1), params)
}

/// Smallest multiple of three for which forced registration in the simple
/// example perturbs any discounted cost by less than about `1e-13`.
pub fn simple_example_k_max(beta: f64) -> usize {
    let steps = ((1e-13 * (1.0 - beta)).ln() / beta.ln()).ceil().max(3.0) as usize;
    steps.div_ceil(3) * 3
}

/// The five-state, three-cell example with a 0.4/0.6 branch out of state 0
/// and deterministic return paths 1→2→0 and 3→4→0.
pub fn build_simple_example(params: CostParams) -> Result<MotionModel> {
    let mut p = vec![vec![0.0; 5]; 5];
    p[0][1] = 0.4;
    p[0][3] = 0.6;
    p[1][2] = 1.0;
    p[2][0] = 1.0;
    p[3][4] = 1.0;
    p[4][0] = 1.0;
    let cells = vec![vec![0], vec![1, 2], vec![3, 4]];
    MotionModel::new(ModelKind::Simple, cells, p, 0, params)
}

/// Symmetric random walk truncated to `-half_width..=half_width`.
///
/// `kernel` holds the displacement distribution on `-m..=m` (odd length). It
/// must be symmetric and nonincreasing in `|x|`. Moves past either end clamp
/// to the edge state; `half_width >= k_max * m` keeps that clamping out of
/// reach within a reporting cycle from the centre.
pub fn build_symmetric_walk(half_width: usize, kernel: &[f64], params: CostParams) -> Result<MotionModel> {
    if kernel.len() % 2 != 1 {
        return Err(Error::InvalidModel("walk kernel must have odd length".into()));
    }
    let m = kernel.len() / 2;
    let total: f64 = kernel.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL || kernel.iter().any(|&b| !(b >= 0.0)) {
        return Err(Error::InvalidModel(format!("walk kernel is not a distribution (sum {total})")));
    }
    for x in 1..=m {
        if (kernel[m + x] - kernel[m - x]).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidModel(format!("walk kernel is not symmetric at displacement {x}")));
        }
        if kernel[m + x] > kernel[m + x - 1] + STOCHASTIC_TOL {
            return Err(Error::InvalidModel(format!("walk kernel increases at displacement {x}")));
        }
    }
    params.validate()?;
    if half_width < params.k_max * m {
        return Err(Error::InvalidModel(format!(
            "half_width {half_width} < k_max * m = {}",
            params.k_max * m
        )));
    }
    let n = 2 * half_width + 1;
    let mut p = vec![vec![0.0; n]; n];
    for (i, row) in p.iter_mut().enumerate() {
        for (t, &b) in kernel.iter().enumerate() {
            let j = (i as i64 + t as i64 - m as i64).clamp(0, n as i64 - 1) as usize;
            row[j] += b;
        }
    }
    let cells = (0..n).map(|s| vec![s]).collect();
    MotionModel::new(
        ModelKind::Walk { half_width, kernel: kernel.to_vec() },
        cells,
        p,
        half_width,
        params,
    )
}

/// A paging order vector: `rank[s]` is the number of cells searched until the
/// cell containing state `s` is reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PagingOrder(Vec<u32>);

impl PagingOrder {
    /// Expands a cell permutation (first searched first) into per-state ranks.
    pub fn from_cell_order(model: &MotionModel, order: &[usize]) -> Result<Self> {
        let nc = model.n_cells();
        if order.len() != nc {
            return Err(Error::InvalidPolicy(format!("cell order has {} entries, expected {nc}", order.len())));
        }
        let mut cell_rank = vec![0u32; nc];
        for (pos, &c) in order.iter().enumerate() {
            if c >= nc || cell_rank[c] != 0 {
                return Err(Error::InvalidPolicy(format!("cell order {order:?} is not a permutation")));
            }
            cell_rank[c] = pos as u32 + 1;
        }
        Ok(Self((0..model.n_states()).map(|s| cell_rank[model.cell_of(s)]).collect()))
    }

    /// Validates raw per-state ranks against the model's cells.
    pub fn from_ranks(model: &MotionModel, ranks: Vec<u32>) -> Result<Self> {
        validate_ranks(model, &ranks)?;
        Ok(Self(ranks))
    }

    pub fn ranks(&self) -> &[u32] {
        &self.0
    }

    pub fn rank(&self, state: usize) -> u32 {
        self.0[state]
    }
}

fn validate_ranks(model: &MotionModel, ranks: &[u32]) -> Result<()> {
    if ranks.len() != model.n_states() {
        return Err(Error::InvalidPolicy(format!(
            "order vector has {} entries, expected {}",
            ranks.len(),
            model.n_states()
        )));
    }
    let nc = model.n_cells();
    let mut seen = vec![false; nc];
    for (c, members) in model.cells().iter().enumerate() {
        let r = ranks[members[0]];
        if members.iter().any(|&s| ranks[s] != r) {
            return Err(Error::InvalidPolicy(format!("order vector is not constant on cell {c}")));
        }
        if r == 0 || r as usize > nc || seen[r as usize - 1] {
            return Err(Error::InvalidPolicy(format!("cell ranks are not a permutation of 1..={nc}")));
        }
        seen[r as usize - 1] = true;
    }
    Ok(())
}

/// Paging RCL `f(i0, k)` for `k = 1..=k_max+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PagingRcl {
    n_states: usize,
    k_max: usize,
    ranks: Vec<u32>,
}

impl PagingRcl {
    /// Every slot filled with the identity cell order.
    pub fn identity(model: &MotionModel) -> Self {
        let n = model.n_states();
        let k_max = model.k_max();
        let base: Vec<u32> = (0..n).map(|s| model.cell_of(s) as u32 + 1).collect();
        let mut ranks = Vec::with_capacity(n * (k_max + 1) * n);
        for _ in 0..n * (k_max + 1) {
            ranks.extend_from_slice(&base);
        }
        Self { n_states: n, k_max, ranks }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    fn offset(&self, i0: usize, k: usize) -> usize {
        assert!((1..=self.k_max + 1).contains(&k), "paging elapsed time {k} out of range");
        (i0 * (self.k_max + 1) + (k - 1)) * self.n_states
    }

    pub fn order(&self, i0: usize, k: usize) -> &[u32] {
        let o = self.offset(i0, k);
        &self.ranks[o..o + self.n_states]
    }

    pub fn set(&mut self, i0: usize, k: usize, order: &PagingOrder) {
        let o = self.offset(i0, k);
        self.ranks[o..o + self.n_states].copy_from_slice(order.ranks());
    }

    /// Checks dimensions and that every slot is a valid order vector.
    pub fn validate(&self, model: &MotionModel) -> Result<()> {
        if self.n_states != model.n_states() || self.k_max != model.k_max() {
            return Err(Error::InvalidPolicy(format!(
                "paging RCL is {}x{}, model is {}x{}",
                self.n_states,
                self.k_max,
                model.n_states(),
                model.k_max()
            )));
        }
        for i0 in 0..self.n_states {
            for k in 1..=self.k_max + 1 {
                validate_ranks(model, self.order(i0, k))?;
            }
        }
        Ok(())
    }
}

/// Registration RCL `g(i0, k)` for `k = 1..=k_max`; all-ones at `k_max + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationRcl {
    n_states: usize,
    k_max: usize,
    bits: Vec<bool>,
}

impl RegistrationRcl {
    pub fn filled(n_states: usize, k_max: usize, value: bool) -> Self {
        Self { n_states, k_max, bits: vec![value; n_states * k_max * n_states] }
    }

    /// Never registers voluntarily.
    pub fn never(model: &MotionModel) -> Self {
        Self::filled(model.n_states(), model.k_max(), false)
    }

    /// Registers at every step that is not a page.
    pub fn always(model: &MotionModel) -> Self {
        Self::filled(model.n_states(), model.k_max(), true)
    }

    /// Registers once the hop distance from the last report (in the
    /// transition graph) reaches `d`.
    pub fn hop_threshold(model: &MotionModel, d: usize) -> Self {
        let n = model.n_states();
        let mut g = Self::never(model);
        for i0 in 0..n {
            let dist = hop_distances(model, i0);
            for k in 1..=model.k_max() {
                let row = g.decision_mut(i0, k);
                for (l, bit) in row.iter_mut().enumerate() {
                    *bit = dist[l] >= d;
                }
            }
        }
        g
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    fn offset(&self, i0: usize, k: usize) -> usize {
        assert!((1..=self.k_max).contains(&k), "registration elapsed time {k} out of range");
        (i0 * self.k_max + (k - 1)) * self.n_states
    }

    pub fn decision(&self, i0: usize, k: usize) -> &[bool] {
        let o = self.offset(i0, k);
        &self.bits[o..o + self.n_states]
    }

    pub fn decision_mut(&mut self, i0: usize, k: usize) -> &mut [bool] {
        let o = self.offset(i0, k);
        &mut self.bits[o..o + self.n_states]
    }

    /// Whether the mobile registers on arriving in `l` at elapsed time `k`.
    pub fn registers(&self, i0: usize, k: usize, l: usize) -> bool {
        k > self.k_max || self.bits[self.offset(i0, k) + l]
    }

    pub fn validate(&self, model: &MotionModel) -> Result<()> {
        if self.n_states != model.n_states() || self.k_max != model.k_max() {
            return Err(Error::InvalidPolicy(format!(
                "registration RCL is {}x{}, model is {}x{}",
                self.n_states,
                self.k_max,
                model.n_states(),
                model.k_max()
            )));
        }
        Ok(())
    }
}

/// Breadth-first hop distance from `from` along positive transitions.
pub fn hop_distances(model: &MotionModel, from: usize) -> Vec<usize> {
    let n = model.n_states();
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    dist[from] = 0;
    queue.push_back(from);
    while let Some(s) = queue.pop_front() {
        for &(l, _) in model.row(s) {
            if dist[l] == usize::MAX {
                dist[l] = dist[s] + 1;
                queue.push_back(l);
            }
        }
    }
    dist
}

/// The four registration choices at belief `δ(0)` in the simple example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplePolicy {
    /// Never register.
    A,
    /// Register after entering state 1.
    B,
    /// Register after entering state 3.
    C,
    /// Register after entering state 1 or 3.
    D,
}

impl SimplePolicy {
    pub const ALL: [SimplePolicy; 4] = [SimplePolicy::A, SimplePolicy::B, SimplePolicy::C, SimplePolicy::D];

    /// Decision vector applied when the network belief is `δ(0)`.
    pub fn decision_at_origin(self) -> [bool; 5] {
        match self {
            SimplePolicy::A => [false; 5],
            SimplePolicy::B => [false, true, false, false, false],
            SimplePolicy::C => [false, false, false, true, false],
            SimplePolicy::D => [false, true, false, true, false],
        }
    }

    /// `P[R_1 | no page at 1]` under this policy.
    pub fn registration_probability(self) -> f64 {
        match self {
            SimplePolicy::A => 0.0,
            SimplePolicy::B => 0.4,
            SimplePolicy::C => 0.6,
            SimplePolicy::D => 1.0,
        }
    }

    /// `P[N_2 = 2 | no page at 1, page at 2]` under this policy.
    pub fn second_page_probability(self) -> f64 {
        match self {
            SimplePolicy::A => 0.4,
            _ => 0.0,
        }
    }

    /// Closed-form discounted cost of the belief-feedback pair with
    /// maximum-likelihood paging, by renewal over the period-3 cycle.
    pub fn closed_form_cost(self, params: &CostParams) -> f64 {
        let CostParams { lambda_p, page_cost, reg_cost, beta, .. } = *params;
        let denom = 1.0 - beta.powi(3);
        let registration = reg_cost * beta * (1.0 - lambda_p) * self.registration_probability();
        let paging = lambda_p
            * page_cost
            * (1.4 * beta
                + beta.powi(2)
                + beta.powi(2) * (1.0 - lambda_p) * self.second_page_probability()
                + beta.powi(3));
        (registration + paging) / denom
    }
}
