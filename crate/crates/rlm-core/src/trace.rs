//! Per-iteration trace records and their serialized forms: trace CSV and
//! summary JSON. Floats are written as shortest round-trip decimals.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One solver iteration, successful or not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    /// Damping lambda_k = mu_k |F(x_k)|^2, exactly as computed by the solver.
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub step_norm: f64,
    pub successful: bool,
    pub sub_iters: usize,
    /// Wall time elapsed since the solver loop started, at the end of this
    /// iteration.
    pub wall_ms: f64,
}

pub const TRACE_HEADER: &str = "iter,f,grad_norm,lambda,mu,rho,step_norm,successful,sub_iters,wall_ms";

/// Iteration log of a solver run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<IterRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Column values by CSV header name.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let get: fn(&IterRecord) -> f64 = match name {
            "iter" => |r| r.iter as f64,
            "f" => |r| r.f,
            "grad_norm" => |r| r.grad_norm,
            "lambda" => |r| r.lambda,
            "mu" => |r| r.mu,
            "rho" => |r| r.rho,
            "step_norm" => |r| r.step_norm,
            "successful" => |r| if r.successful { 1.0 } else { 0.0 },
            "sub_iters" => |r| r.sub_iters as f64,
            "wall_ms" => |r| r.wall_ms,
            _ => {
                return Err(Error::Parse(format!("unknown trace column `{name}`")));
            }
        };
        Ok(self.records.iter().map(get).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.iter,
                r.f,
                r.grad_norm,
                r.lambda,
                r.mu,
                r.rho,
                r.step_norm,
                r.successful,
                r.sub_iters,
                r.wall_ms
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Trace> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trace file".into()))?;
        if header.trim() != TRACE_HEADER {
            return Err(Error::Parse(format!(
                "unexpected trace header `{}`",
                header.trim()
            )));
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 10 {
                return Err(Error::Parse(format!(
                    "line {}: expected 10 columns, got {}",
                    lineno + 2,
                    cols.len()
                )));
            }
            let pf = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad float `{s}`", lineno + 2)))
            };
            records.push(IterRecord {
                iter: cols[0]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad iter", lineno + 2)))?,
                f: pf(cols[1])?,
                grad_norm: pf(cols[2])?,
                lambda: pf(cols[3])?,
                mu: pf(cols[4])?,
                rho: pf(cols[5])?,
                step_norm: pf(cols[6])?,
                successful: cols[7] == "true",
                sub_iters: cols[8]
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad sub_iters", lineno + 2)))?,
                wall_ms: pf(cols[9])?,
            });
        }
        Ok(Trace { records })
    }

    pub fn read_csv(path: &Path) -> Result<Trace> {
        Trace::from_csv(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        Trace {
            records: vec![
                IterRecord {
                    iter: 0,
                    f: 0.5,
                    grad_norm: 1.0,
                    lambda: 0.1,
                    mu: 0.1,
                    rho: 1.0909090909090908,
                    step_norm: 0.9090909090909091,
                    successful: true,
                    sub_iters: 0,
                    wall_ms: 0.125,
                },
                IterRecord {
                    iter: 1,
                    f: 0.0041322314049586775,
                    grad_norm: 0.09090909090909091,
                    lambda: f64::NAN,
                    mu: 0.1,
                    rho: f64::NAN,
                    step_norm: 0.0,
                    successful: false,
                    sub_iters: 3,
                    wall_ms: 0.25,
                },
            ],
        }
    }

    #[test]
    fn csv_round_trips_shortest_decimals() {
        let t = sample();
        let text = t.to_csv();
        assert!(text.starts_with(TRACE_HEADER));
        let back = Trace::from_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        // Shortest round-trip decimals reproduce the exact bits.
        assert_eq!(back.records[0].rho.to_bits(), t.records[0].rho.to_bits());
        assert_eq!(back.records[1].f.to_bits(), t.records[1].f.to_bits());
        assert!(back.records[1].rho.is_nan());
        assert!(!back.records[1].successful);
    }

    #[test]
    fn column_lookup() {
        let t = sample();
        assert_eq!(t.column("grad_norm").unwrap().len(), 2);
        assert!(t.column("nope").is_err());
    }
}
