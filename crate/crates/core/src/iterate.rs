//! Alternating optimization of paging and registration, and an exact joint
//! dynamic program over finite sets of reachable beliefs.

use serde::Serialize;

use crate::belief::{phi_update_binary, rcl_from_feedback, Belief};
use crate::cost::policy_cost;
use crate::error::{Error, Result};
use crate::model::{MotionModel, PagingRcl, RegistrationRcl, SimplePolicy};
use crate::paging::derive_paging_rcl;
use crate::regdp::{extract_registration, value_iteration};

/// Two beliefs closer than this in sup norm are the same chain node.
pub const BELIEF_DEDUP_TOL: f64 = 1e-9;

/// Default cost tolerance for declaring the alternation converged.
pub const DEFAULT_COST_TOL: f64 = 1e-12;

/// Largest post-transition support for which all trims are enumerated.
pub const MAX_TRIM_SUPPORT: usize = 20;

#[derive(Debug, Clone, Copy)]
pub struct IterationOptions {
    /// Stop once a registration step improves the cost by less than this.
    pub tol: f64,
    /// Sup-norm threshold of the inner value iteration.
    pub vi_tol: f64,
    pub max_rounds: usize,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_COST_TOL, vi_tol: 1e-12, max_rounds: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRound {
    pub round: usize,
    /// `C(f^r, g^r)` with `f^r` the ML paging RCL for `g^r`.
    pub cost_after_paging_step: f64,
    /// `C(f^r, g^{r+1})` with `g^{r+1}` optimal for `f^r`.
    pub cost_after_registration_step: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationLog {
    pub rounds: Vec<IterationRound>,
    pub converged: bool,
    pub final_cost: f64,
    #[serde(skip)]
    pub paging: PagingRcl,
    #[serde(skip)]
    pub registration: RegistrationRcl,
}

impl IterationLog {
    /// Costs in the order they were produced.
    pub fn cost_sequence(&self) -> Vec<f64> {
        self.rounds
            .iter()
            .flat_map(|r| [r.cost_after_paging_step, r.cost_after_registration_step])
            .collect()
    }

    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        self.cost_sequence().windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// Alternates ML paging and DP registration from `g0` until a registration
/// step no longer lowers the cost. Returns the pair `(f, g)` with `f` derived
/// from `g`.
pub fn individually_optimal(model: &MotionModel, g0: &RegistrationRcl, opts: IterationOptions) -> Result<IterationLog> {
    g0.validate(model)?;
    let mut g = g0.clone();
    let mut rounds = Vec::new();
    let mut last_gap = f64::INFINITY;
    for round in 1..=opts.max_rounds {
        let f = derive_paging_rcl(model, &g);
        let c1 = policy_cost(model, &f, &g)?.total;
        let vi = value_iteration(model, &f, opts.vi_tol)?;
        let g_next = extract_registration(model, &vi.value);
        let c2 = policy_cost(model, &f, &g_next)?.total;
        rounds.push(IterationRound { round, cost_after_paging_step: c1, cost_after_registration_step: c2 });
        last_gap = c1 - c2;
        if last_gap < opts.tol {
            return Ok(IterationLog { rounds, converged: true, final_cost: c1, paging: f, registration: g });
        }
        g = g_next;
    }
    Err(Error::NonConvergence { iterations: opts.max_rounds, residual: last_gap })
}

/// Cost reductions available from one more half-step at `(f, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityGap {
    pub cost: f64,
    /// `C(f, g) - C(ML paging for g, g)`.
    pub paging: f64,
    /// `C(f, g) - C(f, DP registration for f)`.
    pub registration: f64,
}

impl OptimalityGap {
    pub fn passes(&self, tol: f64) -> bool {
        self.paging.abs() < tol && self.registration.abs() < tol
    }
}

/// Re-runs both half-steps at `(f, g)` and reports the cost changes.
pub fn optimality_gap(model: &MotionModel, f: &PagingRcl, g: &RegistrationRcl, vi_tol: f64) -> Result<OptimalityGap> {
    let cost = policy_cost(model, f, g)?.total;
    let f_ml = derive_paging_rcl(model, g);
    let paging = cost - policy_cost(model, &f_ml, g)?.total;
    let vi = value_iteration(model, f, vi_tol)?;
    let g_dp = extract_registration(model, &vi.value);
    let registration = cost - policy_cost(model, f, &g_dp)?.total;
    Ok(OptimalityGap { cost, paging, registration })
}

/// One binary registration choice over a node's post-transition support.
#[derive(Debug, Clone)]
pub struct TrimOption {
    /// `register[i]` applies to `support[i]` of the owning node.
    pub register: Vec<bool>,
    /// Node reached when no report occurs; `None` if every state registers.
    pub successor: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ChainNode {
    pub belief: Belief,
    /// States with positive mass under `wP`.
    pub support: Vec<usize>,
    /// `(wP)_l` for each support state.
    pub arrival: Vec<f64>,
    /// Node of the point mass `δ(l)` for each support state.
    pub report_node: Vec<usize>,
    pub options: Vec<TrimOption>,
}

/// A finite set of beliefs closed under reports and no-report updates.
#[derive(Debug, Clone)]
pub struct BeliefChain {
    pub nodes: Vec<ChainNode>,
}

impl BeliefChain {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn find(&self, w: &Belief) -> Option<usize> {
        self.nodes.iter().position(|n| n.belief.sup_distance(w) <= BELIEF_DEDUP_TOL)
    }

    /// Closure of `roots` under report collapse and every binary trim.
    pub fn from_roots(model: &MotionModel, roots: Vec<Belief>, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::InvalidPolicy("belief cap must be at least 1".into()));
        }
        let n = model.n_states();
        let mut beliefs: Vec<Belief> = Vec::new();
        let intern = |w: Belief, beliefs: &mut Vec<Belief>| -> Result<usize> {
            if let Some(i) = beliefs.iter().position(|b| b.sup_distance(&w) <= BELIEF_DEDUP_TOL) {
                return Ok(i);
            }
            if beliefs.len() >= cap {
                return Err(Error::CapExceeded { cap });
            }
            beliefs.push(w);
            Ok(beliefs.len() - 1)
        };
        for w in roots {
            intern(w, &mut beliefs)?;
        }
        let mut nodes = Vec::new();
        let mut next = 0;
        while next < beliefs.len() {
            let w = beliefs[next].clone();
            let q = model.propagate(w.as_slice());
            let support: Vec<usize> = (0..n).filter(|&l| q[l] > 0.0).collect();
            if support.len() > MAX_TRIM_SUPPORT {
                return Err(Error::InvalidModel(format!(
                    "post-transition support of {} states is too large to enumerate trims",
                    support.len()
                )));
            }
            let arrival = support.iter().map(|&l| q[l]).collect();
            let mut report_node = Vec::with_capacity(support.len());
            for &l in &support {
                report_node.push(intern(Belief::point(n, l), &mut beliefs)?);
            }
            // fewest registrations first, so argmin ties keep the mobile silent
            let mut masks: Vec<u32> = (0..1u32 << support.len()).collect();
            masks.sort_by_key(|m| (m.count_ones(), *m));
            let mut options = Vec::with_capacity(masks.len());
            for mask in masks {
                let register: Vec<bool> = (0..support.len()).map(|i| mask >> i & 1 == 1).collect();
                let mut d = vec![false; n];
                for (&l, &r) in support.iter().zip(&register) {
                    d[l] = r;
                }
                let successor = match phi_update_binary(model, &w, &d) {
                    Ok(v) => Some(intern(v, &mut beliefs)?),
                    Err(Error::ZeroSurvivalMass) => None,
                    Err(e) => return Err(e),
                };
                options.push(TrimOption { register, successor });
            }
            nodes.push(ChainNode { belief: w, support, arrival, report_node, options });
            next += 1;
        }
        Ok(Self { nodes })
    }
}

/// Breadth-first closure of `δ(x0)` under reports and every binary trim.
pub fn reachable_beliefs(model: &MotionModel, cap: usize) -> Result<BeliefChain> {
    BeliefChain::from_roots(model, vec![Belief::point(model.n_states(), model.x0())], cap)
}

/// Jointly optimal feedback policy on a belief chain.
#[derive(Debug, Clone)]
pub struct JointSolution {
    pub chain: BeliefChain,
    /// Optimal cost-to-go per node.
    pub values: Vec<f64>,
    /// Index into the node's `options` of the optimal trim.
    pub choice: Vec<usize>,
    pub sweeps: usize,
}

impl JointSolution {
    /// Full-length registration vector chosen at node `i`.
    pub fn decision(&self, model: &MotionModel, i: usize) -> Vec<bool> {
        let node = &self.chain.nodes[i];
        let mut d = vec![false; model.n_states()];
        for (&l, &r) in node.support.iter().zip(&node.options[self.choice[i]].register) {
            d[l] = r;
        }
        d
    }

    pub fn value_at(&self, w: &Belief) -> Option<f64> {
        self.chain.find(w).map(|i| self.values[i])
    }

    /// Registration RCL realizing the feedback policy. Beliefs outside the
    /// chain are unreachable from its roots and never register.
    pub fn registration_rcl(&self, model: &MotionModel) -> Result<RegistrationRcl> {
        rcl_from_feedback(model, |w| {
            Ok(match self.chain.find(w) {
                Some(i) => self.decision(model, i),
                None => vec![false; model.n_states()],
            })
        })
    }

    /// RCL pair `(ML paging, registration)` realizing the feedback policy.
    pub fn rcl_pair(&self, model: &MotionModel) -> Result<(PagingRcl, RegistrationRcl)> {
        let g = self.registration_rcl(model)?;
        Ok((derive_paging_rcl(model, &g), g))
    }
}

/// Evaluates every trim at one node against `u`; returns (value, best option).
fn node_backup(model: &MotionModel, node: &ChainNode, u: &[f64]) -> (f64, usize) {
    let p = model.params();
    let mut q = vec![0.0; model.n_states()];
    for (&l, &a) in node.support.iter().zip(&node.arrival) {
        q[l] = a;
    }
    let mut cells = model.cell_mass(&q);
    cells.sort_by(|a, b| b.total_cmp(a));
    let searched: f64 = cells.iter().enumerate().map(|(i, &m)| (i + 1) as f64 * m).sum();
    let page_reset: f64 = node.arrival.iter().zip(&node.report_node).map(|(&a, &r)| a * u[r]).sum();
    let base = p.beta * p.lambda_p * (p.page_cost * searched + page_reset);
    let mut best = (f64::INFINITY, 0);
    for (idx, opt) in node.options.iter().enumerate() {
        let mut reg = 0.0;
        let mut survive = 0.0;
        for ((&a, &r), &bit) in node.arrival.iter().zip(&node.report_node).zip(&opt.register) {
            if bit {
                reg += a * (p.reg_cost + u[r]);
            } else {
                survive += a;
            }
        }
        let cont = match opt.successor {
            Some(s) => survive * u[s],
            None => 0.0,
        };
        let v = base + p.beta * (1.0 - p.lambda_p) * (reg + cont);
        // strict improvement beyond round-off, so earlier (fewer-registration) options win ties
        if v < best.0 - 1e-13 * v.abs().max(1.0) {
            best = (v, idx);
        }
    }
    best
}

/// Value iteration of the belief-space dynamic program restricted to `chain`.
pub fn joint_dp(model: &MotionModel, chain: BeliefChain, tol: f64) -> Result<JointSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidPolicy(format!("tolerance must be positive, got {tol}")));
    }
    let p = model.params();
    let bound = (p.page_cost * model.n_cells() as f64 + p.reg_cost) / (1.0 - p.beta);
    let cap = ((tol * (1.0 - p.beta) / bound).ln() / p.beta.ln()).ceil().max(1.0) as usize + 50;
    let mut u = vec![0.0; chain.len()];
    let mut sweeps = 0;
    loop {
        let next: Vec<f64> = chain.nodes.iter().map(|node| node_backup(model, node, &u).0).collect();
        let diff = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        u = next;
        sweeps += 1;
        if diff < tol {
            break;
        }
        if sweeps >= cap {
            return Err(Error::NonConvergence { iterations: sweeps, residual: diff });
        }
    }
    let choice = chain.nodes.iter().map(|node| node_backup(model, node, &u).1).collect();
    Ok(JointSolution { chain, values: u, choice, sweeps })
}

/// Registration RCL of one of the four simple-example policies: the listed
/// decision at `δ(0)` and silence everywhere else.
pub fn simple_policy_rcl(model: &MotionModel, policy: SimplePolicy) -> Result<RegistrationRcl> {
    if model.n_states() != 5 {
        return Err(Error::InvalidModel("simple-example policies need the five-state model".into()));
    }
    rcl_from_feedback(model, |w| {
        Ok(match w.as_point() {
            Some(0) => policy.decision_at_origin().to_vec(),
            _ => vec![false; 5],
        })
    })
}

/// Which simple-example policy a feedback solution applies at `δ(0)`.
pub fn classify_simple_policy(model: &MotionModel, sol: &JointSolution) -> Option<SimplePolicy> {
    let origin = sol.chain.find(&Belief::point(model.n_states(), 0))?;
    let d = sol.decision(model, origin);
    SimplePolicy::ALL.into_iter().find(|p| p.decision_at_origin().as_slice() == d.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_simple_example, simple_example_k_max, CostParams, ModelKind};

    fn simple(lambda_p: f64, reg_cost: f64, beta: f64) -> MotionModel {
        let k_max = simple_example_k_max(beta);
        build_simple_example(CostParams { lambda_p, page_cost: 1.0, reg_cost, beta, k_max }).unwrap()
    }

    #[test]
    fn simple_chain_has_seven_beliefs() {
        let m = simple(0.05, 0.04, 0.9);
        let chain = reachable_beliefs(&m, 100).unwrap();
        assert_eq!(chain.len(), 7);
        for s in 0..5 {
            assert!(chain.find(&Belief::point(5, s)).is_some());
        }
        assert!(chain.find(&Belief::new(vec![0.0, 0.4, 0.0, 0.6, 0.0]).unwrap()).is_some());
        assert!(chain.find(&Belief::new(vec![0.0, 0.0, 0.4, 0.0, 0.6]).unwrap()).is_some());
    }

    #[test]
    fn cap_is_enforced() {
        let m = simple(0.05, 0.04, 0.9);
        assert!(matches!(reachable_beliefs(&m, 6), Err(Error::CapExceeded { cap: 6 })));
    }

    #[test]
    fn permutation_model_has_only_point_masses() {
        let n = 4;
        let p = (0..n).map(|i| (0..n).map(|j| if j == (i + 1) % n { 1.0 } else { 0.0 }).collect()).collect();
        let params = CostParams { lambda_p: 0.1, page_cost: 1.0, reg_cost: 0.3, beta: 0.8, k_max: 4 };
        let m = MotionModel::new(ModelKind::Explicit, (0..n).map(|s| vec![s]).collect(), p, 0, params).unwrap();
        let chain = reachable_beliefs(&m, 50).unwrap();
        assert_eq!(chain.len(), n);
        assert!(chain.nodes.iter().all(|node| node.belief.as_point().is_some()));
    }

    #[test]
    fn joint_policy_switches_at_boundary() {
        // boundary ℛ = λ_p 𝒫 β = 0.045
        let a = simple(0.05, 0.06, 0.9);
        let sol = joint_dp(&a, reachable_beliefs(&a, 100).unwrap(), 1e-12).unwrap();
        assert_eq!(classify_simple_policy(&a, &sol), Some(SimplePolicy::A));
        let b = simple(0.05, 0.03, 0.9);
        let sol = joint_dp(&b, reachable_beliefs(&b, 100).unwrap(), 1e-12).unwrap();
        assert_eq!(classify_simple_policy(&b, &sol), Some(SimplePolicy::B));
        for s in 1..5 {
            let i = sol.chain.find(&Belief::point(5, s)).unwrap();
            assert!(sol.decision(&b, i).iter().all(|&x| !x));
        }
        let origin = sol.value_at(&Belief::point(5, 0)).unwrap();
        assert!((origin - SimplePolicy::B.closed_form_cost(b.params())).abs() < 1e-9);
    }

    #[test]
    fn seeded_at_c_is_a_fixed_point() {
        let m = simple(0.05, 0.03, 0.9);
        let g_c = simple_policy_rcl(&m, SimplePolicy::C).unwrap();
        let log = individually_optimal(&m, &g_c, IterationOptions::default()).unwrap();
        assert_eq!(log.rounds.len(), 1);
        assert!((log.final_cost - SimplePolicy::C.closed_form_cost(m.params())).abs() < 1e-9);
        assert!(log.is_nonincreasing(1e-12));
    }

    #[test]
    fn rerun_from_output_is_immediate() {
        let m = simple(0.05, 0.03, 0.9);
        let first = individually_optimal(&m, &RegistrationRcl::always(&m), IterationOptions::default()).unwrap();
        let again = individually_optimal(&m, &first.registration, IterationOptions::default()).unwrap();
        assert_eq!(again.rounds.len(), 1);
        assert!((again.final_cost - first.final_cost).abs() < 1e-12);
        let c_cost = SimplePolicy::C.closed_form_cost(m.params());
        assert!(first.final_cost <= c_cost + 1e-12);
    }
}
