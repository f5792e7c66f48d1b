//! Recurrence detectors on quasi-solution traces: exact periods, almost
//! periods with their gap structure, and a compactness probe for
//! automorphic-style returns.
//!
//! All detectors compare trace values at a fixed path (section frame); they
//! measure recurrence of the coefficient time only. Offsets are restricted
//! to multiples of the trace spacing so every comparison is an exact index
//! lookup, never an interpolation.

use serde::Serialize;

use crate::closed_form::QuasiSolutionTrace;
use crate::error::{Error, Result};
use crate::numerics::fmt_g17;

/// Residual of one candidate offset: the sup of |v(tau + offset) - v(tau)|
/// over every covered tau.
fn offset_residual(values: &[f64], k: usize) -> f64 {
    values[k..]
        .iter()
        .zip(values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn offset_cells(trace: &QuasiSolutionTrace, offset: f64) -> Result<usize> {
    let d = trace.spacing();
    let k = (offset / d).round();
    if k < 1.0 || (offset - k * d).abs() > 1e-9 * offset.max(d) {
        return Err(Error::Misaligned { t: offset, step: d });
    }
    Ok(k as usize)
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodReport {
    pub period: f64,
    pub residual: f64,
    pub pairs: usize,
}

/// Residual of one candidate period; the trace must cover at least three
/// candidate lengths so a long transient cannot masquerade as periodicity.
pub fn check_period(trace: &QuasiSolutionTrace, period: f64) -> Result<PeriodReport> {
    let k = offset_cells(trace, period)?;
    let values = trace.values();
    if values.len() < 3 * k + 1 {
        return Err(Error::Coverage(format!(
            "period {period} needs coverage of three periods, trace has {}",
            trace.tau_max() - trace.tau_min()
        )));
    }
    Ok(PeriodReport {
        period: k as f64 * trace.spacing(),
        residual: offset_residual(values, k),
        pairs: values.len() - k,
    })
}

/// Scans every trace-aligned period in [lo, hi] and returns the residual
/// minimizer.
pub fn detect_period(trace: &QuasiSolutionTrace, lo: f64, hi: f64) -> Result<PeriodReport> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Config(format!("bad period search range [{lo}, {hi}]")));
    }
    let d = trace.spacing();
    let k_lo = (lo / d).ceil().max(1.0) as usize;
    let k_hi = (hi / d).floor() as usize;
    if k_lo > k_hi {
        return Err(Error::Config(format!(
            "period range [{lo}, {hi}] contains no multiple of the trace spacing {d}"
        )));
    }
    let mut best: Option<PeriodReport> = None;
    for k in k_lo..=k_hi {
        let report = check_period(trace, k as f64 * d)?;
        if best.as_ref().map_or(true, |b| report.residual < b.residual) {
            best = Some(report);
        }
    }
    Ok(best.expect("nonempty range"))
}

#[derive(Debug, Clone, Serialize)]
pub struct AlmostPeriodReport {
    pub epsilon: f64,
    pub window: (f64, f64),
    pub spacing: f64,
    /// Offsets in the window whose sup-residual is at most epsilon.
    pub hits: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Largest stretch of the window without a hit, with the window edges
    /// as sentinels; a relatively dense almost-period set keeps this small.
    pub max_gap: f64,
    /// Pairs entering each sup; constant across offsets by construction.
    pub pairs: usize,
}

/// Scans trace-aligned offsets t0 in [lo, hi] for epsilon-almost-periods:
/// sup_tau |v(tau + t0) - v(tau)| <= epsilon. The trace must extend at least
/// hi beyond the comparison span so every offset is judged on the same
/// number of pairs.
pub fn almost_period_scan(
    trace: &QuasiSolutionTrace,
    epsilon: f64,
    lo: f64,
    hi: f64,
) -> Result<AlmostPeriodReport> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::Config(format!("bad almost-period window [{lo}, {hi}]")));
    }
    let d = trace.spacing();
    let values = trace.values();
    let k_hi = (hi / d).floor() as usize;
    let k_lo = (lo / d).ceil().max(1.0) as usize;
    if values.len() <= 2 * k_hi {
        return Err(Error::Coverage(format!(
            "almost-period scan to {hi} needs a trace of length {}, have {}",
            2.0 * k_hi as f64 * d,
            trace.tau_max() - trace.tau_min()
        )));
    }
    let pairs = values.len() - k_hi;
    let mut hits = Vec::new();
    let mut residuals = Vec::with_capacity(k_hi - k_lo + 1);
    for k in k_lo..=k_hi {
        // judge every offset on the common pair count so sups are comparable
        let residual = values[k..k + pairs]
            .iter()
            .zip(values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        residuals.push(residual);
        if residual <= epsilon {
            hits.push(k as f64 * d);
        }
    }
    let mut max_gap: f64 = 0.0;
    let mut prev = lo;
    for &h in &hits {
        max_gap = max_gap.max(h - prev);
        prev = h;
    }
    max_gap = max_gap.max(hi - prev);
    Ok(AlmostPeriodReport {
        epsilon,
        window: (lo, hi),
        spacing: d,
        hits,
        residuals,
        max_gap,
        pairs,
    })
}

/// Writes `t0,residual` rows for an almost-period scan.
pub fn write_scan_csv<W: std::io::Write>(report: &AlmostPeriodReport, w: &mut W) -> Result<()> {
    writeln!(w, "t0,residual")?;
    let d = report.spacing;
    let k_lo = (report.window.0 / d).ceil().max(1.0) as usize;
    for (i, r) in report.residuals.iter().enumerate() {
        writeln!(w, "{},{}", fmt_g17((k_lo + i) as f64 * d), fmt_g17(*r))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVerdict {
    /// A convergent return subsequence exists and pulls back to the start.
    Consistent,
    /// Returns converge somewhere but do not come back; automorphic
    /// behaviour is ruled out at this tolerance.
    ReturnsDoNotInvert,
    /// No convergent subsequence showed up among the probes; nothing can be
    /// concluded from this shift sequence.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct AutomorphyReport {
    pub verdict: ProbeVerdict,
    /// Indices (into the shift sequence) of the largest probe cluster.
    pub cluster: Vec<usize>,
    pub forward_residual: f64,
    pub backward_residual: f64,
    pub tolerance: f64,
}

/// Compactness probe for automorphic returns of a time profile.
///
/// Evaluates the generator on probe_times shifted by each element of shifts,
/// greedily clusters the resulting vectors at the given tolerance, and takes
/// the largest cluster (at least three members) as an empirical convergent
/// subsequence tau_{n_1} < ... < tau_{n_M}. The forward residual is the
/// cluster diameter. The backward residual compares the generator at
/// p + tau_{n_M} - tau_{n_j} with its base values, which is the finite-data
/// surrogate for the return limit. Both must pass for a consistent verdict.
pub fn automorphy_probe<G>(
    mut generator: G,
    probe_times: &[f64],
    shifts: &[f64],
    tolerance: f64,
) -> Result<AutomorphyReport>
where
    G: FnMut(f64) -> Result<f64>,
{
    if probe_times.is_empty() || shifts.len() < 3 {
        return Err(Error::Config(
            "automorphy probe needs probe times and at least three shifts".into(),
        ));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tolerance}")));
    }
    let base: Vec<f64> = probe_times
        .iter()
        .map(|&p| generator(p))
        .collect::<Result<_>>()?;
    let vectors: Vec<Vec<f64>> = shifts
        .iter()
        .map(|&s| probe_times.iter().map(|&p| generator(p + s)).collect())
        .collect::<Result<_>>()?;

    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };

    // greedy clustering on first-seen representatives at half tolerance, so
    // any two members of one cluster are within tolerance of each other
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        match clusters
            .iter_mut()
            .find(|c| dist(&vectors[c[0]], v) <= 0.5 * tolerance)
        {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }
    let cluster = clusters
        .into_iter()
        .max_by_key(|c| c.len())
        .expect("at least one cluster");
    if cluster.len() < 3 {
        return Ok(AutomorphyReport {
            verdict: ProbeVerdict::Inconclusive,
            cluster,
            forward_residual: f64::INFINITY,
            backward_residual: f64::INFINITY,
            tolerance,
        });
    }
    let mut forward_residual = 0.0_f64;
    for &i in &cluster {
        for &j in &cluster {
            forward_residual = forward_residual.max(dist(&vectors[i], &vectors[j]));
        }
    }

    // return leg: shift the latest cluster member back by the earlier ones
    let last = *cluster.last().expect("nonempty");
    let n_back = cluster.len().min(4) - 1;
    let mut backward_residual = 0.0_f64;
    for &j in cluster.iter().take(n_back) {
        let back = shifts[last] - shifts[j];
        for (&p, &b) in probe_times.iter().zip(&base) {
            backward_residual = backward_residual.max((generator(p + back)? - b).abs());
        }
    }
    let verdict = if forward_residual <= tolerance && backward_residual <= tolerance {
        ProbeVerdict::Consistent
    } else {
        ProbeVerdict::ReturnsDoNotInvert
    };
    Ok(AutomorphyReport {
        verdict,
        cluster,
        forward_residual,
        backward_residual,
        tolerance,
    })
}

/// Generator backed by a section-frame trace, for probing sampled profiles.
pub fn trace_generator(trace: &QuasiSolutionTrace) -> impl Fn(f64) -> Result<f64> + '_ {
    move |t| trace.value_at(t)
}
