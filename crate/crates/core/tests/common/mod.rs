//! Shared fixtures for integration tests: the published experiment grid and
//! synthetic record generators.

#![allow(dead_code)]

use moe_planner::accounting::{total_params, Gran, ModelDims};
use moe_planner::regression::ExperimentRecord;
use num_traits::ToPrimitive;

/// The seven (l, d) core dimensions of the main experiment family.
pub const MAIN_GRID: [(u64, u64); 7] =
    [(6, 288), (6, 384), (8, 384), (8, 512), (10, 640), (14, 768), (16, 1024)];

/// The nine (n_exp, n_topk) combinations crossed with MAIN_GRID.
pub const EXPERT_CONFIGS: [(u64, u64); 9] =
    [(32, 2), (64, 2), (64, 4), (128, 2), (128, 8), (256, 2), (256, 4), (256, 8), (256, 16)];

pub fn grid_dims() -> Vec<ModelDims> {
    let mut out = Vec::new();
    for &(l, d) in &MAIN_GRID {
        for &(ne, nk) in &EXPERT_CONFIGS {
            out.push(ModelDims::new(l, d, Gran::new(4, 1), ne, nk).unwrap());
        }
    }
    out
}

/// Noiseless records over the 63-point grid with
/// L = C · N_total^e1 · n_exp^e2 · n_topk^e3 and constant token count.
pub fn power_law_records(c: f64, e1: f64, e2: f64, e3: f64, tokens: u64) -> Vec<ExperimentRecord> {
    grid_dims()
        .into_iter()
        .map(|dims| {
            let nt = total_params(&dims).to_f64().unwrap();
            let loss = c
                * nt.powf(e1)
                * (dims.n_exp as f64).powf(e2)
                * (dims.n_topk as f64).powf(e3);
            ExperimentRecord::new(dims, tokens, loss).unwrap()
        })
        .collect()
}

/// The exponent triple of the selected scaling law.
pub const LAW_EXPONENTS: (f64, f64, f64) = (-0.052, 0.023, -0.018);
