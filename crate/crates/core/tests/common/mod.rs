//! Shared generators and oracles for the integration tests.
#![allow(dead_code)]

use pagereg::cost::policy_cost;
use pagereg::model::{CostParams, ModelKind, MotionModel, PagingRcl, RegistrationRcl};
use rand::seq::SliceRandom;
use rand::Rng;

/// Explicit model with sparse random rows and a random cell partition.
pub fn random_model<R: Rng>(rng: &mut R, n: usize, max_row_support: usize, params: CostParams) -> MotionModel {
    let mut p = vec![vec![0.0; n]; n];
    for row in p.iter_mut() {
        let support = rng.gen_range(1..=max_row_support.min(n));
        let mut targets: Vec<usize> = (0..n).collect();
        targets.shuffle(rng);
        let weights: Vec<f64> = (0..support).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (&t, w) in targets.iter().zip(&weights) {
            row[t] = w / total;
        }
        // absorb rounding so the row sums to one
        let s: f64 = row.iter().sum();
        row[targets[0]] += 1.0 - s;
    }
    let n_cells = rng.gen_range(1..=n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut cells = vec![Vec::new(); n_cells];
    for (i, &s) in order.iter().enumerate() {
        let c = if i < n_cells { i } else { rng.gen_range(0..n_cells) };
        cells[c].push(s);
    }
    let x0 = rng.gen_range(0..n);
    MotionModel::new(ModelKind::Explicit, cells, p, x0, params).expect("generated model is valid")
}

pub fn random_params<R: Rng>(rng: &mut R, k_max: usize) -> CostParams {
    CostParams {
        lambda_p: rng.gen_range(0.0..0.5),
        page_cost: rng.gen_range(0.2..2.0),
        reg_cost: rng.gen_range(0.05..3.0),
        beta: rng.gen_range(0.5..0.95),
        k_max,
    }
}

pub fn random_registration<R: Rng>(rng: &mut R, model: &MotionModel, density: f64) -> RegistrationRcl {
    let mut g = RegistrationRcl::never(model);
    for i0 in 0..model.n_states() {
        for k in 1..=model.k_max() {
            for bit in g.decision_mut(i0, k) {
                *bit = rng.gen_bool(density);
            }
        }
    }
    g
}

/// Slots `(i0, k, l)` where `l` can be occupied exactly `k` steps after a
/// report in `i0`, over report states reachable from `x0`.
pub fn reachable_slots(model: &MotionModel) -> Vec<(usize, usize, usize)> {
    let n = model.n_states();
    let mut reach = vec![false; n];
    reach[model.x0()] = true;
    let mut stack = vec![model.x0()];
    while let Some(s) = stack.pop() {
        for &(l, _) in model.row(s) {
            if !reach[l] {
                reach[l] = true;
                stack.push(l);
            }
        }
    }
    let mut slots = Vec::new();
    for i0 in (0..n).filter(|&s| reach[s]) {
        let mut at = vec![false; n];
        at[i0] = true;
        for k in 1..=model.k_max() {
            let mut next = vec![false; n];
            for s in (0..n).filter(|&s| at[s]) {
                for &(l, _) in model.row(s) {
                    next[l] = true;
                }
            }
            for l in (0..n).filter(|&l| next[l]) {
                slots.push((i0, k, l));
            }
            at = next;
        }
    }
    slots
}

/// Minimum of `C(f, g)` over every binary assignment of the given slots,
/// other slots silent.
pub fn brute_force_min(model: &MotionModel, f: &PagingRcl, slots: &[(usize, usize, usize)]) -> f64 {
    assert!(slots.len() <= 24, "{} slots is too many to enumerate", slots.len());
    let mut best = f64::INFINITY;
    for mask in 0u64..1 << slots.len() {
        let mut g = RegistrationRcl::never(model);
        for (b, &(i0, k, l)) in slots.iter().enumerate() {
            g.decision_mut(i0, k)[l] = mask >> b & 1 == 1;
        }
        best = best.min(policy_cost(model, f, &g).unwrap().total);
    }
    best
}

/// Random distribution on `n` points.
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(2)).collect();
    let total: f64 = raw.iter().sum::<f64>().max(1e-300);
    let mut v: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let s: f64 = v.iter().sum();
    v[0] += 1.0 - s;
    v
}

/// Applies random T-transforms; the result is majorized by the input.
pub fn t_transforms<R: Rng>(rng: &mut R, v: &[f64], count: usize) -> Vec<f64> {
    let mut x = v.to_vec();
    if x.len() < 2 {
        return x;
    }
    for _ in 0..count {
        let i = rng.gen_range(0..x.len());
        let j = rng.gen_range(0..x.len());
        let t: f64 = rng.gen();
        let (a, b) = (x[i], x[j]);
        x[i] = t * a + (1.0 - t) * b;
        x[j] = t * b + (1.0 - t) * a;
    }
    x
}

/// Random neat distribution on the centred window of radius `r`.
pub fn random_neat<R: Rng>(rng: &mut R, r: usize) -> Vec<f64> {
    let mut masses = random_distribution(rng, 2 * r + 1);
    masses.sort_by(|a, b| b.total_cmp(a));
    let mut out = vec![0.0; 2 * r + 1];
    let positions = std::iter::once(0i64).chain((1..=r as i64).flat_map(|x| [x, -x]));
    for (m, p) in masses.into_iter().zip(positions) {
        out[(p + r as i64) as usize] = m;
    }
    out
}

/// Random symmetric distribution, nonincreasing in `|x|`, on radius `r`.
pub fn random_symmetric_unimodal<R: Rng>(rng: &mut R, r: usize) -> Vec<f64> {
    let mut half: Vec<f64> = (0..=r).map(|_| rng.gen::<f64>()).collect();
    half.sort_by(|a, b| b.total_cmp(a));
    let mut full: Vec<f64> = half.iter().rev().chain(half.iter().skip(1)).copied().collect();
    let total: f64 = full.iter().sum();
    full.iter_mut().for_each(|x| *x /= total);
    full
}
