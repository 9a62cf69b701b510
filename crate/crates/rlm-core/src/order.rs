//! Empirical convergence-order estimation from an error sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted model `e_{k+1} = c * e_k^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// Order q: ~2 for quadratic, ~1 for linear convergence.
    pub q: f64,
    /// Rate constant c; for q ~ 1 this is the contraction factor.
    pub c: f64,
}

/// Least-squares fit of `log e_{k+1} = q log e_k + log c` over the final
/// `window` values of the sequence.
///
/// Non-finite and non-positive entries are dropped first. At least 4 usable
/// values (3 consecutive pairs) are required.
pub fn estimate_order(errors: &[f64], window: usize) -> Result<OrderEstimate> {
    let usable: Vec<f64> = errors
        .iter()
        .copied()
        .filter(|e| e.is_finite() && *e > 0.0)
        .collect();
    let window = window.max(4);
    if usable.len() < 4 {
        return Err(Error::InsufficientData {
            need: 4,
            got: usable.len(),
        });
    }
    let tail = &usable[usable.len().saturating_sub(window)..];

    let mut xs = Vec::with_capacity(tail.len() - 1);
    let mut ys = Vec::with_capacity(tail.len() - 1);
    for pair in tail.windows(2) {
        xs.push(pair[0].ln());
        ys.push(pair[1].ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData {
            need: 4,
            got: tail.len(),
        });
    }
    let q = sxy / sxx;
    let c = (my - q * mx).exp();
    Ok(OrderEstimate { q, c })
}
