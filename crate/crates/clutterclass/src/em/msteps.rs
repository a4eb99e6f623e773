//! The three covariance M-steps and the clutter-rank estimator.

use super::{EmError, MosRule, Responsibilities, CLASS_COLLAPSE_TOL};
use crate::numerics::{
    hermitian_eig, inverse_and_logdet, quad_form, C64, CMatrix, EigenDecomposition,
    HermitianMatrix, SnapshotSet,
};

/// Per-class responsibility masses, failing on a collapsed class.
fn class_weights(q: &Responsibilities) -> Result<Vec<f64>, EmError> {
    let floor = CLASS_COLLAPSE_TOL * q.bins() as f64;
    (0..q.classes())
        .map(|l| {
            let w = q.class_weight(l);
            if w < floor {
                Err(EmError::ClassCollapse { class: l + 1, iteration: 0 })
            } else {
                Ok(w)
            }
        })
        .collect()
}

/// Weighted scatter `S_l = Σ_k q_k(l) z_k z_k†`.
fn weighted_scatter(z: &SnapshotSet, q: &Responsibilities, l: usize) -> HermitianMatrix {
    let n = z.channels();
    let mut s = CMatrix::zeros(n, n);
    let one = C64::new(1.0, 0.0);
    for k in 0..z.bins() {
        let col = z.matrix().column(k);
        s.gerc(C64::new(q.get(k, l), 0.0), &col, &col, one);
    }
    HermitianMatrix::symmetrized(s)
}

fn check_shapes(z: &SnapshotSet, q: &Responsibilities) -> Result<(), EmError> {
    if q.bins() != z.bins() {
        return Err(EmError::InvalidParams(format!(
            "responsibility table has {} rows for {} snapshots",
            q.bins(),
            z.bins()
        )));
    }
    Ok(())
}

/// Condition-based ridge: if the matrix is numerically singular, add
/// `ridge_eps · (trace/N) · I`. Returns the (possibly regularized) matrix and
/// whether the ridge fired.
fn ridge_if_singular(
    m: HermitianMatrix,
    ridge_eps: f64,
) -> Result<(HermitianMatrix, bool), EmError> {
    let eig = hermitian_eig(&m)?;
    let max = eig.eigenvalues[0];
    let min = *eig.eigenvalues.last().unwrap();
    if min > 0.0 && max / min <= 1.0 / ridge_eps {
        return Ok((m, false));
    }
    log::warn!("numerically singular M-step output (min eigenvalue {min:e}), applying ridge");
    let bump = ridge_eps * m.trace() / m.dim() as f64;
    Ok((m.add_scaled_identity(bump), true))
}

/// General-form M-step: per-class weighted sample covariance
/// `M̂_l = Σ_k q_k(l) z_k z_k† / Σ_k q_k(l)`.
///
/// Returns the covariances and the number of classes that needed ridge
/// regularization.
pub fn m_step_general(
    z: &SnapshotSet,
    q: &Responsibilities,
    ridge_eps: f64,
) -> Result<(Vec<HermitianMatrix>, usize), EmError> {
    check_shapes(z, q)?;
    let weights = class_weights(q)?;
    let mut covs = Vec::with_capacity(weights.len());
    let mut ridge_events = 0;
    for (l, &w) in weights.iter().enumerate() {
        let m = weighted_scatter(z, q, l).scaled(1.0 / w);
        let (m, ridged) = ridge_if_singular(m, ridge_eps)?;
        if ridged {
            ridge_events += 1;
        }
        covs.push(m);
    }
    Ok((covs, ridge_events))
}

/// Scaled-common M-step: alternate per-class power updates
/// `σ²_l = Σ_k q_k(l) z_k† M⁻¹ z_k / (N Σ_k q_k(l))` (the first pass using the
/// previous EM iteration's structure) with structure updates
/// `M = (1/K) Σ_k Σ_l q_k(l) z_k z_k† / σ²_l`, for `t_max` rounds.
///
/// Afterwards the scale gauge is fixed: `M` is rescaled to `trace(M) = N` and
/// every power is multiplied by `trace(M_raw)/N`, which leaves the products
/// `σ²_l M` (and hence the objective) unchanged.
pub fn m_step_scaled(
    z: &SnapshotSet,
    q: &Responsibilities,
    m_prev: &HermitianMatrix,
    t_max: usize,
    ridge_eps: f64,
) -> Result<(Vec<f64>, HermitianMatrix, usize), EmError> {
    check_shapes(z, q)?;
    if m_prev.dim() != z.channels() {
        return Err(EmError::InvalidParams(format!(
            "previous structure dimension {} does not match {} channels",
            m_prev.dim(),
            z.channels()
        )));
    }
    if t_max == 0 {
        return Err(EmError::InvalidConfig("t_max must be at least 1".into()));
    }
    let weights = class_weights(q)?;
    let (n, k, l_count) = (z.channels(), z.bins(), q.classes());
    let mut m = m_prev.clone();
    let mut powers = vec![0.0; l_count];
    let mut ridge_events = 0;

    for _t in 1..=t_max {
        let inv = match inverse_and_logdet(&m) {
            Ok((inv, _)) => inv,
            Err(crate::numerics::NumericsError::NotPositiveDefinite) => {
                log::warn!("structure went numerically indefinite mid-cycle, applying ridge");
                ridge_events += 1;
                m = m.add_scaled_identity(ridge_eps * m.trace() / n as f64);
                inverse_and_logdet(&m)?.0
            }
            Err(e) => return Err(e.into()),
        };
        let quads: Vec<f64> = (0..k)
            .map(|kk| quad_form(&z.column(kk), &inv))
            .collect::<Result<_, _>>()?;
        for (l, &w) in weights.iter().enumerate() {
            let num: f64 = (0..k).map(|kk| q.get(kk, l) * quads[kk]).sum();
            powers[l] = num / (n as f64 * w);
        }
        let mut accum = CMatrix::zeros(n, n);
        let one = C64::new(1.0, 0.0);
        for kk in 0..k {
            let coeff: f64 = (0..l_count).map(|l| q.get(kk, l) / powers[l]).sum();
            let col = z.matrix().column(kk);
            accum.gerc(C64::new(coeff / k as f64, 0.0), &col, &col, one);
        }
        m = HermitianMatrix::symmetrized(accum);
    }

    let scale = m.trace() / n as f64;
    let m_fixed = m.scaled(1.0 / scale);
    for p in &mut powers {
        *p *= scale;
    }
    Ok((powers, m_fixed, ridge_events))
}

/// Output of the low-rank M-step: noise power, clamped clutter estimates, and
/// the scatter eigendecompositions for reuse by [`estimate_ranks`].
#[derive(Debug, Clone)]
pub struct LowRankMStep {
    pub noise_power: f64,
    pub clutter: Vec<HermitianMatrix>,
    pub eigs: Vec<EigenDecomposition>,
    /// Whether the noise-power estimate hit the positivity floor.
    pub floored: bool,
}

/// Low-rank-plus-noise M-step.
///
/// Eigendecomposes each weighted scatter `S_l`, pools the trailing
/// eigenvalues into the noise-power estimate
/// `σ̂²_n = Σ_l Σ_{m>r_l} γ_{l,m} / Σ_l q(l)(N − r_l)`, and clamps the leading
/// eigenvalues into the clutter estimates
/// `R̂_l = U_l diag(max(γ_{l,m}/q(l) − σ̂²_n, 0), m ≤ r_l; 0 …) U_l†`.
pub fn m_step_lowrank(
    z: &SnapshotSet,
    q: &Responsibilities,
    ranks: &[usize],
) -> Result<LowRankMStep, EmError> {
    check_shapes(z, q)?;
    let n = z.channels();
    if ranks.len() != q.classes() {
        return Err(EmError::InvalidConfig(format!(
            "ranks length {} does not match {} classes",
            ranks.len(),
            q.classes()
        )));
    }
    if ranks.iter().any(|&r| r == 0 || r >= n) {
        return Err(EmError::InvalidConfig(format!(
            "ranks must lie in [1, {}], got {ranks:?}",
            n - 1
        )));
    }
    let weights = class_weights(q)?;
    let mut eigs = Vec::with_capacity(weights.len());
    let mut trace_total = 0.0;
    for l in 0..weights.len() {
        let s = weighted_scatter(z, q, l);
        trace_total += s.trace();
        eigs.push(hermitian_eig(&s)?);
    }

    let mut tail_sum = 0.0;
    let mut denom = 0.0;
    for ((eig, &r), &w) in eigs.iter().zip(ranks).zip(&weights) {
        tail_sum += eig.eigenvalues[r..].iter().sum::<f64>();
        denom += w * (n - r) as f64;
    }
    let mut noise_power = tail_sum / denom;
    let mut floored = false;
    if noise_power <= 0.0 || noise_power.is_nan() {
        noise_power = 1e-12 * trace_total / (z.bins() as f64 * n as f64);
        floored = true;
        log::warn!("noise power estimate was nonpositive, floored at {noise_power:e}");
    }

    let clutter = clamp_clutter(&eigs, q, noise_power, ranks);
    Ok(LowRankMStep { noise_power, clutter, eigs, floored })
}

/// Rebuild the clamped clutter estimates for a given rank vector from scatter
/// eigendecompositions already at hand.
pub fn clamp_clutter(
    eigs: &[EigenDecomposition],
    q: &Responsibilities,
    noise_power: f64,
    ranks: &[usize],
) -> Vec<HermitianMatrix> {
    let n = eigs[0].eigenvectors.nrows();
    eigs.iter()
        .zip(ranks)
        .enumerate()
        .map(|(l, (eig, &r))| {
            let w = q.class_weight(l);
            let mut m = CMatrix::zeros(n, n);
            let one = C64::new(1.0, 0.0);
            for i in 0..r {
                let lam = (eig.eigenvalues[i] / w - noise_power).max(0.0);
                if lam > 0.0 {
                    let u = eig.eigenvectors.column(i);
                    m.gerc(C64::new(lam, 0.0), &u, &u, one);
                }
            }
            HermitianMatrix::symmetrized(m)
        })
        .collect()
}

/// Select clutter ranks by minimizing the penalized-likelihood objective.
///
/// With the noise power held fixed the objective separates over classes, so
/// each rank is found by exhaustive search over `{1, …, N−1}`; exact ties go
/// to the smaller rank. The penalty per class is `[r(2N − r) + 1]·k_p` with
/// `k_p` given by the MOS rule.
pub fn estimate_ranks(
    eigs: &[EigenDecomposition],
    q: &Responsibilities,
    noise_power: f64,
    rule: MosRule,
    k_bins: usize,
    n: usize,
) -> Vec<usize> {
    let k_p = rule.penalty_weight(k_bins, n);
    eigs.iter()
        .enumerate()
        .map(|(l, eig)| {
            let w = q.class_weight(l);
            let mut best_r = 1;
            let mut best_obj = f64::INFINITY;
            for r in 1..n {
                let obj = rank_objective(&eig.eigenvalues, w, noise_power, r, n, k_p);
                if obj < best_obj {
                    best_obj = obj;
                    best_r = r;
                }
            }
            best_r
        })
        .collect()
}

/// One class's term of the rank-selection objective at rank `r`.
fn rank_objective(gammas: &[f64], w: f64, noise_power: f64, r: usize, n: usize, k_p: f64) -> f64 {
    let leading: f64 = gammas[..r]
        .iter()
        .map(|&g| (g / w).max(f64::MIN_POSITIVE).ln())
        .sum();
    let tail: f64 = gammas[r..].iter().sum();
    2.0 * w * leading
        + 2.0 * w * (n - r) as f64 * noise_power.ln()
        + 2.0 * r as f64 * w
        + 2.0 * tail / noise_power
        + (r as f64 * (2 * n - r) as f64 + 1.0) * k_p
}
