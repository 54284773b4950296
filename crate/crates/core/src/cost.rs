//! Discounted cost of an RCL pair.
//!
//! Every report restarts the process from a point mass, so the cost splits
//! into reporting cycles. For each report state `i0` the cycle is propagated
//! exactly (page, then registration, within each step) to get the expected
//! discounted cycle cost `c(i0)` and the discounted next-report mass
//! `M(i0, l)`. The total cost solves `C = c + M C`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::{phi_update_binary, Belief};
use crate::error::{Error, Result};
use crate::model::{ModelKind, MotionModel, PagingRcl, RegistrationRcl};

/// Name of the generator recorded alongside seeds.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha), stream = replication index";

/// Per-cycle report statistics, indexed by `(i0, k)` for `k = 1..=k_max+1`.
#[derive(Debug, Clone, Serialize)]
pub struct CycleStats {
    pub n_states: usize,
    pub k_max: usize,
    /// Probability the cycle ends at `k` with a page.
    pub alpha_p: Vec<f64>,
    /// Probability the cycle ends at `k` with a registration.
    pub alpha_r: Vec<f64>,
    /// Mean cells searched given a page at `k`.
    pub expected_pages: Vec<f64>,
    /// Undiscounted distribution of the next report state, per `i0`.
    pub next_report_mass: Vec<Vec<f64>>,
}

impl CycleStats {
    fn index(&self, i0: usize, k: usize) -> usize {
        i0 * (self.k_max + 1) + (k - 1)
    }

    pub fn alpha_p(&self, i0: usize, k: usize) -> f64 {
        self.alpha_p[self.index(i0, k)]
    }

    pub fn alpha_r(&self, i0: usize, k: usize) -> f64 {
        self.alpha_r[self.index(i0, k)]
    }

    pub fn expected_pages(&self, i0: usize, k: usize) -> f64 {
        self.expected_pages[self.index(i0, k)]
    }

    /// `Σ_k (α_p + α_r)` for one report state; 1 up to round-off.
    pub fn total_report_probability(&self, i0: usize) -> f64 {
        (1..=self.k_max + 1).map(|k| self.alpha_p(i0, k) + self.alpha_r(i0, k)).sum()
    }
}

/// Exact discounted cost of a policy pair.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    /// `C(f, g)` starting from the model's initial state.
    pub total: f64,
    /// Cost-to-go right after a report in each state.
    pub per_report_state: Vec<f64>,
    /// Expected discounted cost of one cycle from each report state.
    pub cycle_cost: Vec<f64>,
    pub cycle_stats: CycleStats,
}

/// Exact cost of `(f, g)` by cycle propagation and a linear solve.
pub fn policy_cost(model: &MotionModel, f: &PagingRcl, g: &RegistrationRcl) -> Result<CostReport> {
    f.validate(model)?;
    g.validate(model)?;
    let n = model.n_states();
    let k_max = model.k_max();
    let p = *model.params();
    let slots = n * (k_max + 1);
    let mut stats = CycleStats {
        n_states: n,
        k_max,
        alpha_p: vec![0.0; slots],
        alpha_r: vec![0.0; slots],
        expected_pages: vec![0.0; slots],
        next_report_mass: vec![vec![0.0; n]; n],
    };
    let mut cycle_cost = vec![0.0; n];
    let mut discounted_next = DMatrix::<f64>::zeros(n, n);
    let mut alive = vec![0.0; n];
    let mut arrived = vec![0.0; n];

    for i0 in 0..n {
        alive.iter_mut().for_each(|x| *x = 0.0);
        alive[i0] = 1.0;
        let mut disc = 1.0;
        for k in 1..=k_max + 1 {
            disc *= p.beta;
            model.propagate_into(&alive, &mut arrived);
            let mass: f64 = arrived.iter().sum();
            if mass <= 0.0 {
                break;
            }
            let order = f.order(i0, k);
            let mut pages = 0.0;
            let mut reg_mass = 0.0;
            for l in 0..n {
                let a = arrived[l];
                if a == 0.0 {
                    alive[l] = 0.0;
                    continue;
                }
                pages += a * order[l] as f64;
                let reg = g.registers(i0, k, l);
                let reported = p.lambda_p * a + if reg { (1.0 - p.lambda_p) * a } else { 0.0 };
                if reg {
                    reg_mass += a;
                }
                stats.next_report_mass[i0][l] += reported;
                discounted_next[(i0, l)] += disc * reported;
                alive[l] = if reg { 0.0 } else { (1.0 - p.lambda_p) * a };
            }
            let slot = stats.index(i0, k);
            stats.alpha_p[slot] = p.lambda_p * mass;
            stats.alpha_r[slot] = (1.0 - p.lambda_p) * reg_mass;
            stats.expected_pages[slot] = pages / mass;
            cycle_cost[i0] += disc * (p.lambda_p * p.page_cost * pages + (1.0 - p.lambda_p) * p.reg_cost * reg_mass);
        }
    }

    let system = DMatrix::<f64>::identity(n, n) - &discounted_next;
    let rhs = DVector::from_vec(cycle_cost.clone());
    let lu = system.lu();
    let mut solution = lu
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidModel("renewal system is singular".into()))?;
    // one step of iterative refinement
    let residual = &rhs - (DMatrix::<f64>::identity(n, n) - &discounted_next) * &solution;
    if let Some(correction) = lu.solve(&residual) {
        solution += correction;
    }
    let per_report_state: Vec<f64> = solution.iter().copied().collect();
    Ok(CostReport { total: per_report_state[model.x0()], per_report_state, cycle_cost, cycle_stats: stats })
}

/// Monte-Carlo settings.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloOptions {
    pub seed: u64,
    /// Number of independent replications from the initial state.
    pub n_cycles: usize,
    /// Replications stop once the discounted tail bound drops below this.
    pub horizon_eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replications: usize,
}

fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

fn sample_row<R: Rng>(model: &MotionModel, x: usize, rng: &mut R) -> usize {
    let row = model.row(x);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(l, p) in row {
        acc += p;
        if u < acc {
            return l;
        }
    }
    row.last().map(|&(l, _)| l).unwrap_or(x)
}

/// Outcome of one simulated step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StepEvent {
    Paged(u32),
    Registered,
    Silent,
}

/// Mobile and network state advanced one step at a time.
struct Simulator<'a> {
    model: &'a MotionModel,
    f: &'a PagingRcl,
    g: &'a RegistrationRcl,
    x: usize,
    i0: usize,
    k: usize,
}

impl<'a> Simulator<'a> {
    fn new(model: &'a MotionModel, f: &'a PagingRcl, g: &'a RegistrationRcl) -> Self {
        let x0 = model.x0();
        Self { model, f, g, x: x0, i0: x0, k: 0 }
    }

    /// Move, then page with probability λ_p, then register per `g`.
    fn step<R: Rng>(&mut self, rng: &mut R) -> StepEvent {
        self.k += 1;
        self.x = sample_row(self.model, self.x, rng);
        let paged = rng.gen::<f64>() < self.model.params().lambda_p;
        let event = if paged {
            StepEvent::Paged(self.f.order(self.i0, self.k)[self.x])
        } else if self.g.registers(self.i0, self.k, self.x) {
            StepEvent::Registered
        } else {
            StepEvent::Silent
        };
        if event != StepEvent::Silent {
            self.i0 = self.x;
            self.k = 0;
        }
        event
    }
}

/// Seeded Monte-Carlo estimate of `C(f, g)` with its standard error.
pub fn monte_carlo_cost(
    model: &MotionModel,
    f: &PagingRcl,
    g: &RegistrationRcl,
    opts: MonteCarloOptions,
) -> Result<MonteCarloEstimate> {
    f.validate(model)?;
    g.validate(model)?;
    if opts.n_cycles == 0 {
        return Err(Error::InvalidPolicy("Monte-Carlo needs at least one replication".into()));
    }
    let p = *model.params();
    let tail_scale = (p.page_cost * model.n_cells() as f64 + p.reg_cost) / (1.0 - p.beta);
    let mut samples = Vec::with_capacity(opts.n_cycles);
    for rep in 0..opts.n_cycles {
        let mut rng = replication_rng(opts.seed, rep as u64);
        let mut sim = Simulator::new(model, f, g);
        let mut disc = 1.0;
        let mut total = 0.0;
        loop {
            disc *= p.beta;
            if disc * tail_scale < opts.horizon_eps {
                break;
            }
            match sim.step(&mut rng) {
                StepEvent::Paged(pages) => total += disc * p.page_cost * pages as f64,
                StepEvent::Registered => total += disc * p.reg_cost,
                StepEvent::Silent => {}
            }
        }
        samples.push(total);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(MonteCarloEstimate { mean, std_error: (var / n).sqrt(), replications: samples.len() })
}

/// One time step of a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    pub x: usize,
    pub paged: bool,
    pub pages_used: u32,
    pub registered: bool,
    /// Elapsed time since the last report before this step's events.
    pub elapsed: usize,
    /// Last report state before this step's events.
    pub last_report: usize,
    /// Network belief after this step's events.
    pub belief: Belief,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
}

/// Simulates `t_end` steps and records the network belief along the way.
pub fn export_trace(
    model: &MotionModel,
    f: &PagingRcl,
    g: &RegistrationRcl,
    seed: u64,
    t_end: usize,
) -> Result<Trace> {
    f.validate(model)?;
    g.validate(model)?;
    if t_end == 0 {
        return Err(Error::InvalidPolicy("trace needs t_end >= 1".into()));
    }
    let n = model.n_states();
    let mut rng = replication_rng(seed, 0);
    let mut sim = Simulator::new(model, f, g);
    let mut w = Belief::point(n, model.x0());
    let mut records = Vec::with_capacity(t_end);
    for t in 1..=t_end {
        let (i0, k) = (sim.i0, sim.k + 1);
        let event = sim.step(&mut rng);
        w = match event {
            StepEvent::Silent => phi_update_binary(model, &w, g.decision(i0, k))?,
            _ => Belief::point(n, sim.x),
        };
        records.push(TraceRecord {
            t,
            x: sim.x,
            paged: matches!(event, StepEvent::Paged(_)),
            pages_used: if let StepEvent::Paged(r) = event { r } else { 0 },
            registered: event == StepEvent::Registered,
            elapsed: k,
            last_report: i0,
            belief: w.clone(),
        });
    }
    Ok(Trace { seed, records })
}

impl Serialize for Belief {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&sparse_belief(self))
    }
}

/// `index:mass` pairs for the nonzero entries, comma separated.
pub fn sparse_belief(w: &Belief) -> String {
    w.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, m)| format!("{i}:{m}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Plot coordinates of a state for the model's geometry.
pub fn state_coordinates(model: &MotionModel, s: usize) -> (i64, i64) {
    match model.kind() {
        ModelKind::Torus { j_max, .. } => ((s / j_max) as i64, (s % j_max) as i64),
        ModelKind::Walk { half_width, .. } => (s as i64 - *half_width as i64, 0),
        _ => (s as i64, 0),
    }
}

impl Trace {
    /// Tab-separated step records with a header naming seed and generator.
    pub fn write_records<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# seed={} rng={}", self.seed, RNG_ALGORITHM)?;
        writeln!(out, "t\tx\tpaged\tpages_used\tregistered\tbelief")?;
        for r in &self.records {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.t,
                r.x,
                r.paged as u8,
                r.pages_used,
                r.registered as u8,
                sparse_belief(&r.belief)
            )?;
        }
        Ok(())
    }

    /// One row per belief atom per step, plus the mobile's position, for plotting.
    pub fn write_plot_table<W: Write>(&self, model: &MotionModel, mut out: W) -> Result<()> {
        writeln!(out, "t\tkind\tu\tv\tmass")?;
        for r in &self.records {
            let (u, v) = state_coordinates(model, r.x);
            writeln!(out, "{}\tposition\t{u}\t{v}\t1", r.t)?;
            for (s, &m) in r.belief.as_slice().iter().enumerate() {
                if m > 0.0 {
                    let (u, v) = state_coordinates(model, s);
                    writeln!(out, "{}\tbelief\t{u}\t{v}\t{m}", r.t)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::belief_recursion;
    use crate::model::{build_simple_example, build_torus, CostParams, SimplePolicy};
    use crate::paging::derive_paging_rcl;

    fn params(k_max: usize) -> CostParams {
        CostParams { lambda_p: 0.05, page_cost: 1.0, reg_cost: 0.04, beta: 0.9, k_max }
    }

    #[test]
    fn deterministic_renewal_without_paging() {
        let mut p = params(4);
        p.lambda_p = 0.0;
        let m = build_simple_example(p).unwrap();
        let g = RegistrationRcl::never(&m);
        let f = derive_paging_rcl(&m, &g);
        let report = policy_cost(&m, &f, &g).unwrap();
        let b5 = 0.9f64.powi(5);
        let expect = b5 * 0.04 / (1.0 - b5);
        assert!((report.total - expect).abs() < 1e-14, "{} vs {expect}", report.total);
        for i0 in 0..5 {
            assert!((report.cycle_stats.total_report_probability(i0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cycle_mass_is_conserved() {
        let m = build_simple_example(params(5)).unwrap();
        let g = RegistrationRcl::hop_threshold(&m, 2);
        let f = derive_paging_rcl(&m, &g);
        let report = policy_cost(&m, &f, &g).unwrap();
        for i0 in 0..5 {
            let s = &report.cycle_stats;
            assert!((s.total_report_probability(i0) - 1.0).abs() < 1e-12);
            let next: f64 = s.next_report_mass[i0].iter().sum();
            assert!((next - s.total_report_probability(i0)).abs() < 1e-12);
        }
        assert_eq!(report.total, report.per_report_state[m.x0()]);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let m = build_simple_example(params(6)).unwrap();
        let g = RegistrationRcl::never(&m);
        let f = derive_paging_rcl(&m, &g);
        let opts = MonteCarloOptions { seed: 7, n_cycles: 500, horizon_eps: 1e-8 };
        let a = monte_carlo_cost(&m, &f, &g, opts).unwrap();
        let b = monte_carlo_cost(&m, &f, &g, opts).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        let c = monte_carlo_cost(&m, &f, &g, MonteCarloOptions { seed: 8, ..opts }).unwrap();
        assert_ne!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn monte_carlo_deterministic_case() {
        let mut p = params(2);
        p.lambda_p = 0.0;
        let m = build_simple_example(p).unwrap();
        let g = RegistrationRcl::never(&m);
        let f = derive_paging_rcl(&m, &g);
        let eps = 1e-10;
        let est = monte_carlo_cost(&m, &f, &g, MonteCarloOptions { seed: 1, n_cycles: 20, horizon_eps: eps }).unwrap();
        let exact = policy_cost(&m, &f, &g).unwrap().total;
        assert!((est.mean - exact).abs() <= eps);
        assert!(est.std_error < 1e-12);
    }

    #[test]
    fn trace_beliefs_follow_recursion() {
        let p = CostParams { lambda_p: 0.1, page_cost: 1.0, reg_cost: 0.5, beta: 0.9, k_max: 8 };
        let m = build_torus(5, 5, 0.4, 0.1, 0.1, 0.1, 0.3, (2, 2), p).unwrap();
        let g = RegistrationRcl::hop_threshold(&m, 2);
        let f = derive_paging_rcl(&m, &g);
        let trace = export_trace(&m, &f, &g, 11, 200).unwrap();
        let mut reports = 0;
        for r in &trace.records {
            let total: f64 = r.belief.as_slice().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            if r.paged || r.registered {
                reports += 1;
                assert_eq!(r.belief.as_point(), Some(r.x));
            } else {
                let path = belief_recursion(&m, &g, r.last_report);
                assert!(path.beliefs[r.elapsed].sup_distance(&r.belief) < 1e-12);
            }
        }
        assert!(reports > 0);
        let mut buf = Vec::new();
        trace.write_records(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# seed=11"));
        assert_eq!(text.lines().count(), 202);
    }

    #[test]
    fn simple_policy_ordering_from_cost() {
        // sanity check of the closed form against a short-horizon RCL pair
        let m = build_simple_example(params(3)).unwrap();
        let g = RegistrationRcl::always(&m);
        let f = derive_paging_rcl(&m, &g);
        let c = policy_cost(&m, &f, &g).unwrap().total;
        assert!(c > SimplePolicy::B.closed_form_cost(m.params()));
    }
}
