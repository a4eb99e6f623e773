//! Shared test oracles, independent of the library's solver paths.
//!
//! Everything here evaluates mixture M-step objectives with its own 2x2
//! complex arithmetic and optimizes them with generic methods (Nelder-Mead,
//! hierarchical grid search), so closed-form M-step outputs can be checked
//! against numerically found optima.

#![allow(dead_code)]

use nalgebra::Complex;

pub type C = Complex<f64>;

const LN_PI: f64 = 1.1447298858494002;

/// Plain 2x2 complex matrix with hand-coded determinant/inverse.
#[derive(Debug, Clone, Copy)]
pub struct Mat2(pub [[C; 2]; 2]);

impl Mat2 {
    pub fn zero() -> Self {
        Mat2([[C::new(0.0, 0.0); 2]; 2])
    }

    pub fn det(&self) -> C {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inv(&self) -> Mat2 {
        let d = self.det();
        Mat2([
            [self.0[1][1] / d, -self.0[0][1] / d],
            [-self.0[1][0] / d, self.0[0][0] / d],
        ])
    }

    /// Re Tr(self * other).
    pub fn trace_prod_re(&self, other: &Mat2) -> f64 {
        let mut t = C::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                t += self.0[i][j] * other.0[j][i];
            }
        }
        t.re
    }

    /// Hermitian matrix from lower-Cholesky parameters
    /// `[ln a, ln b, re c, im c]` with `L = [[a, 0], [c, b]]`, `M = L L†`.
    pub fn from_chol_params(p: &[f64]) -> Mat2 {
        let a = p[0].exp();
        let b = p[1].exp();
        let c = C::new(p[2], p[3]);
        Mat2([
            [C::new(a * a, 0.0), c.conj() * a],
            [c * a, C::new(c.norm_sqr() + b * b, 0.0)],
        ])
    }

    /// `σ² I + λ u u†` with `u = (cos α, e^{iφ} sin α)`.
    pub fn loaded_rank1(sigma2: f64, lambda: f64, alpha: f64, phi: f64) -> Mat2 {
        let (ca, sa) = (alpha.cos(), alpha.sin());
        let u0 = C::new(ca, 0.0);
        let u1 = C::new(sa * phi.cos(), sa * phi.sin());
        let mut m = Mat2::zero();
        let us = [u0, u1];
        for i in 0..2 {
            for j in 0..2 {
                m.0[i][j] = us[i] * us[j].conj() * lambda;
            }
            m.0[i][i] += C::new(sigma2, 0.0);
        }
        m
    }
}

/// `Σ_l [ −w_l (N lnπ + ln det M_l) − Tr(M_l⁻¹ S_l) ]` for N = 2: the
/// quantity the covariance M-steps maximize, up to nothing (constants
/// included).
pub fn weighted_gaussian_objective(ms: &[Mat2], scatters: &[Mat2], weights: &[f64]) -> f64 {
    ms.iter()
        .zip(scatters)
        .zip(weights)
        .map(|((m, s), &w)| {
            let det = m.det().re;
            -w * (2.0 * LN_PI + det.ln()) - m.inv().trace_prod_re(s)
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

/// Minimize `f` from `x0` with a standard Nelder-Mead simplex.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    step: f64,
    iters: usize,
) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }

    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();

        let reflect: Vec<f64> =
            (0..dim).map(|j| centroid[j] + (centroid[j] - worst.0[j])).collect();
        let f_reflect = f(&reflect);

        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> =
                (0..dim).map(|j| centroid[j] + 2.0 * (centroid[j] - worst.0[j])).collect();
            let f_expand = f(&expand);
            simplex[dim] = if f_expand < f_reflect {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
        } else if f_reflect < simplex[dim - 1].1 {
            simplex[dim] = (reflect, f_reflect);
        } else {
            let contract: Vec<f64> =
                (0..dim).map(|j| centroid[j] + 0.5 * (worst.0[j] - centroid[j])).collect();
            let f_contract = f(&contract);
            if f_contract < worst.1 {
                simplex[dim] = (contract, f_contract);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> =
                        (0..dim).map(|j| best[j] + 0.5 * (entry.0[j] - best[j])).collect();
                    let fx = f(&x);
                    *entry = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex[0].clone()
}

/// Maximize the general-covariance objective for one class over Hermitian
/// positive definite 2x2 matrices via Nelder-Mead in Cholesky coordinates,
/// with a few restarts. Returns the best objective value found.
pub fn maximize_general_class(scatter: &Mat2, weight: f64) -> f64 {
    let scale = (scatter.0[0][0].re + scatter.0[1][1].re) / (2.0 * weight);
    let neg = |p: &[f64]| {
        let m = Mat2::from_chol_params(p);
        -weighted_gaussian_objective(&[m], &[*scatter], &[weight])
    };
    let mut best = f64::INFINITY;
    for start_scale in [0.25, 1.0, 4.0] {
        let s = (scale * start_scale).max(1e-9);
        let x0 = vec![0.5 * s.ln(), 0.5 * s.ln(), 0.0, 0.0];
        let (_, value) = nelder_mead(&neg, &x0, 0.4, 4000);
        best = best.min(value);
    }
    -best
}

// ---------------------------------------------------------------------------
// Hierarchical grid search for the loaded rank-1 objective
// ---------------------------------------------------------------------------

/// Per-class objective term at `M = σ²I + λ u u†`, via the rank-1 identities
/// `det = σ²(σ² + λ)` and `Tr(M⁻¹S) = (tr S − λ u†Su/(σ²+λ))/σ²`.
fn loaded_rank1_term(scatter: &Mat2, w: f64, sigma2: f64, lambda: f64, alpha: f64, phi: f64) -> f64 {
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let s11 = scatter.0[0][0].re;
    let s22 = scatter.0[1][1].re;
    let s12 = scatter.0[0][1];
    let usu = ca * ca * s11
        + sa * sa * s22
        + 2.0 * ca * sa * (s12.re * phi.cos() - s12.im * phi.sin());
    let tr_s = s11 + s22;
    let logdet = sigma2.ln() + (sigma2 + lambda).ln();
    -w * (2.0 * LN_PI + logdet) - (tr_s - lambda * usu / (sigma2 + lambda)) / sigma2
}

/// Exhaustively maximize the 2x2 loaded rank-1 objective over
/// `(σ², {λ_l, u_l})` by iteratively refined grid search. For fixed σ² the
/// objective separates over classes, so each refinement round scans a
/// σ²-grid, and per class a (λ, α, φ)-grid.
pub fn grid_maximize_loaded_rank1(scatters: &[Mat2], weights: &[f64]) -> f64 {
    let l_count = scatters.len();
    let scales: Vec<f64> = scatters
        .iter()
        .zip(weights)
        .map(|(s, &w)| (s.0[0][0].re + s.0[1][1].re) / w)
        .collect();
    let scale_max = scales.iter().cloned().fold(0.0f64, f64::max);

    let mut sigma_range = (1e-4 * scale_max, 1.5 * scale_max);
    let mut lambda_range: Vec<(f64, f64)> = scales.iter().map(|&s| (0.0, 2.0 * s)).collect();
    let mut alpha_range = vec![(0.0, std::f64::consts::FRAC_PI_2); l_count];
    let mut phi_range = vec![(0.0, 2.0 * std::f64::consts::PI); l_count];

    const POINTS: usize = 21;
    let grid = |range: (f64, f64)| -> Vec<f64> {
        (0..POINTS)
            .map(|i| range.0 + (range.1 - range.0) * i as f64 / (POINTS - 1) as f64)
            .collect()
    };
    let shrink = |range: (f64, f64), center: f64, lo_floor: f64| -> (f64, f64) {
        let width = (range.1 - range.0) * 2.5 / (POINTS - 1) as f64;
        ((center - width).max(lo_floor), center + width)
    };

    let mut best_total = f64::NEG_INFINITY;
    for _round in 0..7 {
        let sigma_grid = grid(sigma_range);
        let mut round_best = f64::NEG_INFINITY;
        let mut round_args = (0.0, vec![(0.0, 0.0, 0.0); l_count]);
        for &sigma2 in &sigma_grid {
            if sigma2 <= 0.0 {
                continue;
            }
            let mut total = 0.0;
            let mut args = Vec::with_capacity(l_count);
            for l in 0..l_count {
                let mut class_best = f64::NEG_INFINITY;
                let mut class_args = (0.0, 0.0, 0.0);
                for &lambda in &grid(lambda_range[l]) {
                    for &alpha in &grid(alpha_range[l]) {
                        for &phi in &grid(phi_range[l]) {
                            let v = loaded_rank1_term(
                                &scatters[l], weights[l], sigma2, lambda.max(0.0), alpha, phi,
                            );
                            if v > class_best {
                                class_best = v;
                                class_args = (lambda.max(0.0), alpha, phi);
                            }
                        }
                    }
                }
                total += class_best;
                args.push(class_args);
            }
            if total > round_best {
                round_best = total;
                round_args = (sigma2, args);
            }
        }
        best_total = best_total.max(round_best);
        let (s_best, class_args) = round_args;
        sigma_range = shrink(sigma_range, s_best, 1e-9 * scale_max);
        for l in 0..l_count {
            lambda_range[l] = shrink(lambda_range[l], class_args[l].0, 0.0);
            alpha_range[l] = shrink(alpha_range[l], class_args[l].1, f64::NEG_INFINITY);
            phi_range[l] = shrink(phi_range[l], class_args[l].2, f64::NEG_INFINITY);
        }
    }
    best_total
}
