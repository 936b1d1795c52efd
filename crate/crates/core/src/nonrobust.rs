//! Bounds on the meta-level mean loss and loss survival function when
//! target clients come from the same meta-distribution as the source.

use crate::certificate::{merge_grid, named, validate_inputs, BoundKind, BoundParams, CdfCurve, CertStatus, CertifiedBound};
use crate::error::Result;

/// `√(ln((K+1)/δ) / (2 n_k))` for each client.
fn client_shifts(n: &[usize], delta: f64) -> Vec<f64> {
    let log = ((n.len() as f64 + 1.0) / delta).ln();
    n.iter().map(|&nk| (log / (2.0 * nk as f64)).sqrt()).collect()
}

pub fn mean_bound(qv: &[f64], n: &[usize], delta: f64) -> Result<CertifiedBound> {
    mean_bound_with(qv, n, delta, false)
}

/// With `zero_slack`, returns the bare sample mean (testing only).
pub fn mean_bound_with(qv: &[f64], n: &[usize], delta: f64, zero_slack: bool) -> Result<CertifiedBound> {
    validate_inputs(qv, n, delta)?;
    let k = qv.len() as f64;
    let mean = qv.iter().sum::<f64>() / k;
    let (meta, per_client) = if zero_slack {
        (0.0, 0.0)
    } else {
        let meta = (((k + 1.0) / delta).ln() / (2.0 * k)).sqrt();
        (meta, client_shifts(n, delta).iter().sum::<f64>() / k)
    };
    Ok(CertifiedBound::assemble(
        BoundKind::Mean,
        mean,
        vec![named("meta", meta), named("per-client", per_client)],
        BoundParams::new(n, delta),
        zero_slack,
    ))
}

pub fn cdf_bound(qv: &[f64], n: &[usize], delta: f64, grid: &[f64]) -> Result<CdfCurve> {
    cdf_bound_with(qv, n, delta, grid, false)
}

/// Evaluated on `grid` plus every breakpoint `qv_k + shift_k`, so the
/// returned step function is exact between consecutive points.
pub fn cdf_bound_with(qv: &[f64], n: &[usize], delta: f64, grid: &[f64], zero_slack: bool) -> Result<CdfCurve> {
    validate_inputs(qv, n, delta)?;
    let k = qv.len() as f64;
    let shifts = if zero_slack { vec![0.0; qv.len()] } else { client_shifts(n, delta) };
    let meta = if zero_slack { 0.0 } else { ((2.0 * (k + 1.0) / delta).ln() / (2.0 * k)).sqrt() };
    let lambda = merge_grid(grid, qv.iter().zip(&shifts).map(|(q, s)| q + s))?;
    let program: Vec<f64> = lambda
        .iter()
        .map(|&l| qv.iter().zip(&shifts).filter(|(q, s)| **q >= l - **s).count() as f64 / k)
        .collect();
    let bound = program.iter().map(|p| (p + meta).clamp(0.0, 1.0)).collect();
    Ok(CdfCurve {
        kind: BoundKind::CdfCurve,
        lambda,
        bound,
        program: Some(program),
        slack: vec![named("meta", meta), named("max-per-client-shift", shifts.iter().copied().fold(0.0, f64::max))],
        params: BoundParams::new(n, delta),
        status: CertStatus::Exact,
        zero_slack,
        notes: Vec::new(),
    })
}
