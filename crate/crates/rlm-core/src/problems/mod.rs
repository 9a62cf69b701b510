//! Benchmark problem generators with known ground truth, plus the shared
//! descriptor format used to serialize instances (parameters and seed only;
//! data is regenerated, never stored).

mod completion;
mod cp;
mod sphere_ls;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use completion::{
    completion_random_start, gen_completion, omega_size, CompletionInstance, CompletionProblem,
};
pub use cp::{cp_random_start, gen_cp, reconstruct as cp_reconstruct, CpInstance, CpProblem,
    MAX_TENSOR_ENTRIES};
pub use sphere_ls::{gen_sphere_ls, SphereLsInstance, SphereLsProblem};

use crate::baselines::{rsd_run, SdConfig};
use crate::error::Result;
use crate::manifold::Point;
use crate::problem::ResidualProblem;

/// Serializable recipe for an instance; regenerating from it reproduces the
/// data byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceDescriptor {
    Completion {
        m: usize,
        n: usize,
        k: usize,
        rs: f64,
        seed: u64,
    },
    Cp {
        dims: (usize, usize, usize),
        rank: usize,
        noise_exp: Option<f64>,
        seed: u64,
    },
    SphereLs {
        d: usize,
        m: usize,
        residual_exp: Option<f64>,
        seed: u64,
    },
}

impl InstanceDescriptor {
    pub fn with_seed(&self, seed: u64) -> InstanceDescriptor {
        let mut out = self.clone();
        match &mut out {
            InstanceDescriptor::Completion { seed: s, .. }
            | InstanceDescriptor::Cp { seed: s, .. }
            | InstanceDescriptor::SphereLs { seed: s, .. } => *s = seed,
        }
        out
    }

    pub fn seed(&self) -> u64 {
        match self {
            InstanceDescriptor::Completion { seed, .. }
            | InstanceDescriptor::Cp { seed, .. }
            | InstanceDescriptor::SphereLs { seed, .. } => *seed,
        }
    }

    /// Compact label used in report rows and file names.
    pub fn label(&self) -> String {
        match self {
            InstanceDescriptor::Completion { m, n, k, rs, .. } => {
                format!("completion-m{m}-n{n}-k{k}-rs{rs}")
            }
            InstanceDescriptor::Cp {
                dims, rank, noise_exp, ..
            } => match noise_exp {
                Some(p) => format!("cp-{}x{}x{}-r{rank}-p{p}", dims.0, dims.1, dims.2),
                None => format!("cp-{}x{}x{}-r{rank}-exact", dims.0, dims.1, dims.2),
            },
            InstanceDescriptor::SphereLs {
                d, m, residual_exp, ..
            } => match residual_exp {
                Some(p) => format!("sphere-d{d}-m{m}-p{p}"),
                None => format!("sphere-d{d}-m{m}-zero"),
            },
        }
    }

    pub fn generate(&self) -> Result<BenchProblem> {
        match *self {
            InstanceDescriptor::Completion { m, n, k, rs, seed } => {
                let (_, p) = gen_completion(m, n, k, rs, seed)?;
                Ok(BenchProblem::Completion(p))
            }
            InstanceDescriptor::Cp {
                dims,
                rank,
                noise_exp,
                seed,
            } => {
                let (_, p) = gen_cp(dims, rank, noise_exp, seed)?;
                Ok(BenchProblem::Cp(p))
            }
            InstanceDescriptor::SphereLs {
                d,
                m,
                residual_exp,
                seed,
            } => {
                let (_, p) = gen_sphere_ls(d, m, residual_exp, seed)?;
                Ok(BenchProblem::SphereLs(p))
            }
        }
    }
}

/// A generated benchmark problem of any supported kind.
pub enum BenchProblem {
    Completion(CompletionProblem),
    Cp(CpProblem),
    SphereLs(SphereLsProblem),
}

impl BenchProblem {
    pub fn as_residual(&self) -> &dyn ResidualProblem {
        match self {
            BenchProblem::Completion(p) => p,
            BenchProblem::Cp(p) => p,
            BenchProblem::SphereLs(p) => p,
        }
    }

    pub fn descriptor(&self) -> InstanceDescriptor {
        match self {
            BenchProblem::Completion(p) => {
                let i = p.instance();
                InstanceDescriptor::Completion {
                    m: i.m,
                    n: i.n,
                    k: i.k,
                    rs: i.rs,
                    seed: i.seed,
                }
            }
            BenchProblem::Cp(p) => {
                let i = p.instance();
                InstanceDescriptor::Cp {
                    dims: i.dims,
                    rank: i.rank,
                    noise_exp: i.noise_exp,
                    seed: i.seed,
                }
            }
            BenchProblem::SphereLs(p) => {
                let i = p.instance();
                InstanceDescriptor::SphereLs {
                    d: i.d,
                    m: i.m,
                    residual_exp: i.residual_exp,
                    seed: i.seed,
                }
            }
        }
    }

    /// Distance of `x` to the planted ground truth, in the problem's natural
    /// reconstruction norm.
    pub fn error_to_truth(&self, x: &Point) -> f64 {
        match self {
            BenchProblem::Completion(p) => p.instance().error_to_truth(p.fixed_rank(), x),
            BenchProblem::Cp(p) => p.instance().error_to_truth(x),
            BenchProblem::SphereLs(p) => p.instance().error_to_truth(x),
        }
    }

    /// Default starting point for solver comparisons: random rank-k
    /// completion starts are refined by steepest descent until
    /// `|grad f| <= 1e-3`, the other problems use plain random starts.
    pub fn default_start(&self, start_seed: u64) -> Result<Point> {
        match self {
            BenchProblem::Completion(p) => {
                let i = p.instance();
                let raw = completion_random_start(i.m, i.n, i.k, start_seed)?;
                refined_completion_start(p, raw)
            }
            BenchProblem::Cp(p) => {
                let i = p.instance();
                Ok(cp_random_start(i.dims, i.rank, start_seed))
            }
            BenchProblem::SphereLs(p) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(start_seed);
                Ok(p.manifold().random_point(&mut rng))
            }
        }
    }
}

/// Steepest-descent refinement of a completion start, run until the gradient
/// norm falls to 1e-3 (warm-start procedure of the benchmark protocol).
pub fn refined_completion_start(p: &CompletionProblem, x0: Point) -> Result<Point> {
    let cfg = SdConfig {
        grad_tol: 1e-3,
        max_iter: 20_000,
        ..SdConfig::default()
    };
    let summary = rsd_run(p, &x0, &cfg)?;
    Ok(summary.final_point.unwrap_or(x0))
}

/// Convenience wrapper matching the experiment generators to seeds derived
/// from the instance seed; starts never share a stream with instance data.
pub fn derive_start_seed(instance_seed: u64, run: u64) -> u64 {
    instance_seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(run)
        .wrapping_add(0xC0FFEE)
}

pub type ArcInstance<T> = Arc<T>;
