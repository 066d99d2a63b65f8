//! Assembly of the quantitative normal-approximation bounds: the univariate
//! Wasserstein bound, the generic exchangeable-pair plug-ins, the
//! multivariate quantity A with its two smooth-test-function bounds, and a
//! small Jacobi eigensolver for ‖V^{−1/2}‖_op.
//!
//! Mixed-order pairs use the exact τ_{i,k} in place of an unspecified
//! C_{i,k}·max(ρ²,ρ²) majorant: exact τ is computable at this scale and
//! never looser. Radicands in [−1e-9, 0) are clamped to 0 silently; anything
//! below −1e-9 clamps too but raises the report's `clamped` flag, separating
//! rounding noise from model bugs.

use crate::error::{Error, Result};
use crate::hoeffding::{DegenerateUStatistic, VectorModel};
use crate::moments::{cross_moments, fourth_moment_threaded, tau, CrossMoments};
use crate::pair::pair_quantities;
use crate::shadows::compute_cd;
use crate::space::{Budget, FiniteProductSpace};

pub const SQRT_2_OVER_PI: f64 = 0.7978845608028654; // √(2/π)
const TWO_SQRT2_OVER_3: f64 = 0.9428090415820634; // 2√2/3

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    /// Closed-form assembly from E\[W⁴\], ρ² and κ_d = C_d + 2d.
    CdRho,
    /// Plug-in with the exact pair ingredients Var((n/2d)E\[(W\'−W)²|X\]) and
    /// (n/4d)E\[(W\'−W)⁴\]; sharper than the CdRho assembly on every tested
    /// instance.
    Exact,
}

#[derive(Debug, Clone, Copy)]
pub struct ExactIngredients {
    /// Var((n/2d) E\[(W\'−W)² | X\]) = Σ a_M² Var(U_M).
    pub var_conditional: f64,
    /// (n/4d) E\[(W\'−W)⁴\].
    pub fourth_increment: f64,
    /// (2√2/3) √fourth_increment, the third-moment term.
    pub third_term: f64,
}

#[derive(Debug, Clone)]
pub struct UnivariateBoundReport {
    pub mode: BoundMode,
    pub order: usize,
    pub fourth_moment: f64,
    /// E\[W⁴\] − 3, the fourth cumulant gap.
    pub fourth_gap: f64,
    pub rho2: f64,
    pub c_d: f64,
    pub kappa: f64,
    /// √(2/π)-weighted variance term under the selected mode.
    pub term1: f64,
    /// Third-moment term under the selected mode.
    pub term2: f64,
    pub total: f64,
    /// The coarser closed form (√(2/π)+4/3)·√|gap| + √κ_d(√(2/π)+2√2/√3)·ρ.
    pub simplified: f64,
    pub clamped: bool,
    /// Present in `Exact` mode.
    pub exact: Option<ExactIngredients>,
}

fn clamp_radicand(x: f64, clamped: &mut bool) -> f64 {
    if x < -1e-9 {
        *clamped = true;
    }
    x.max(0.0)
}

/// Wasserstein bound for a normalized degenerate U-statistic.
pub fn univariate_bound(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    mode: BoundMode,
    budget: Budget,
) -> Result<UnivariateBoundReport> {
    univariate_bound_threaded(space, u, mode, budget, 1)
}

pub fn univariate_bound_threaded(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    mode: BoundMode,
    budget: Budget,
    threads: usize,
) -> Result<UnivariateBoundReport> {
    if !u.is_normalized(1e-8) {
        return Err(Error::Contract(format!(
            "bound requires unit variance, got {}",
            u.variance()
        )));
    }
    let d = u.order();
    let c_d = compute_cd(d)?;
    let kappa = c_d + 2.0 * d as f64;
    let m4 = fourth_moment_threaded(space, u, budget, threads)?;
    let gap = m4 - 3.0;
    let rho2 = u.rho_squared(space);
    let mut clamped = false;

    let (term1, term2, exact) = match mode {
        BoundMode::CdRho => {
            let t1 = SQRT_2_OVER_PI * clamp_radicand(gap + kappa * rho2, &mut clamped).sqrt();
            let t2 = TWO_SQRT2_OVER_3
                * clamp_radicand(2.0 * gap + 3.0 * kappa * rho2, &mut clamped).sqrt();
            (t1, t2, None)
        }
        BoundMode::Exact => {
            let pq = pair_quantities(space, u, budget)?;
            let t1 = SQRT_2_OVER_PI * clamp_radicand(pq.var_conditional, &mut clamped).sqrt();
            let t2 = TWO_SQRT2_OVER_3
                * clamp_radicand(pq.fourth_increment, &mut clamped).sqrt();
            (
                t1,
                t2,
                Some(ExactIngredients {
                    var_conditional: pq.var_conditional,
                    fourth_increment: pq.fourth_increment,
                    third_term: t2,
                }),
            )
        }
    };
    let simplified = (SQRT_2_OVER_PI + 4.0 / 3.0) * gap.abs().sqrt()
        + kappa.sqrt() * (SQRT_2_OVER_PI + 2.0 * 2.0f64.sqrt() / 3.0f64.sqrt()) * rho2.sqrt();

    Ok(UnivariateBoundReport {
        mode,
        order: d,
        fourth_moment: m4,
        fourth_gap: gap,
        rho2,
        c_d,
        kappa,
        term1,
        term2,
        total: term1 + term2,
        simplified,
        clamped,
        exact,
    })
}

/// Literal evaluation of the generic univariate plug-in bound
/// √(2/π)·√varTerm + thirdTerm.
pub fn plugin_univariate(var_term: f64, third_term: f64) -> Result<f64> {
    if var_term < 0.0 || third_term < 0.0 {
        return Err(Error::Contract("plug-in terms must be nonnegative".into()));
    }
    Ok(SQRT_2_OVER_PI * var_term.sqrt() + third_term)
}

/// Inputs of the generic multivariate plug-in. The de Jong pair has R = 0
/// identically, so `e_r_norm` is 0 in all internal uses.
#[derive(Debug, Clone, Copy)]
pub struct PluginMultivariate {
    pub op_lambda_inv: f64,
    pub e_r_norm: f64,
    pub e_s_hs: f64,
    pub e_dw3: f64,
    pub op_sigma_inv_sqrt: f64,
}

/// Smoothness constants of the test function; caller-supplied scalars.
#[derive(Debug, Clone, Copy, Default)]
pub struct Smoothness {
    pub m1: f64,
    pub m2: f64,
    pub m2_tilde: f64,
    pub m3: f64,
}

/// Literal evaluation of the two generic multivariate plug-in bounds:
/// the C³ variant (using M̃₂, M₃) and the C² variant (using M₁, M₂ and
/// ‖Σ^{−1/2}‖).
pub fn plugin_multivariate(p: PluginMultivariate, m: Smoothness) -> Result<(f64, f64)> {
    for v in [p.op_lambda_inv, p.e_r_norm, p.e_s_hs, p.e_dw3, p.op_sigma_inv_sqrt] {
        if v < 0.0 {
            return Err(Error::Contract("plug-in inputs must be nonnegative".into()));
        }
    }
    let a = p.op_lambda_inv
        * (m.m1 * p.e_r_norm + 0.25 * m.m2_tilde * p.e_s_hs + m.m3 / 18.0 * p.e_dw3);
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    let b = m.m1 * p.op_lambda_inv * (p.e_r_norm + p.op_sigma_inv_sqrt / sqrt_2pi * p.e_s_hs)
        + sqrt_2pi / 24.0 * m.m2 * p.op_lambda_inv * p.op_sigma_inv_sqrt * p.e_dw3;
    Ok((a, b))
}

#[derive(Debug, Clone, Copy)]
pub struct PairIngredients {
    pub i: usize,
    pub k: usize,
    pub e_w2w2: f64,
    /// E\[Z(i)²Z(k)²\] = 1 + 2 v_{ik}².
    pub e_z2z2: f64,
    pub v_ik: f64,
    pub s0_ik: f64,
    pub tau_ik: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ComponentIngredients {
    pub order: usize,
    pub fourth_moment: f64,
    pub rho2: f64,
    pub c_q: f64,
    pub kappa_q: f64,
    /// (2(E\[W⁴\]−3) + 3κ_q ρ²)^{1/2}, the component's share of the Σ-term.
    pub sum_term: f64,
}

#[derive(Debug, Clone)]
pub struct MultivariateBoundReport {
    pub r: usize,
    pub q1: usize,
    /// The quantity A.
    pub a_value: f64,
    pub pairs: Vec<PairIngredients>,
    pub per_component: Vec<ComponentIngredients>,
    /// Σ_l (q_l/q_1) Σ_{i ∈ block l} sum_term_i.
    pub sum_term: f64,
    pub covariance: Vec<Vec<f64>>,
    pub lambda_min: f64,
    /// λ_min^{−1/2} when V is numerically positive definite.
    pub op_v_inv_sqrt: Option<f64>,
    pub clamped: bool,
}

/// E\[Z(i)²Z(k)²\] for jointly Gaussian unit-variance Z with covariance v.
pub fn gaussian_square_cross_moment(v: f64) -> f64 {
    1.0 + 2.0 * v * v
}

/// Computes the quantity A of the multivariate bound with exact ingredients,
/// along with the per-pair and per-component tables.
pub fn multivariate_a(
    space: &FiniteProductSpace,
    model: &VectorModel,
    budget: Budget,
) -> Result<MultivariateBoundReport> {
    let r = model.r();
    for (idx, u) in model.components().iter().enumerate() {
        if !u.is_normalized(1e-8) {
            return Err(Error::Contract(format!(
                "component {idx} must have unit variance, got {}",
                u.variance()
            )));
        }
    }
    let blocks = model.blocks();
    let q1 = blocks[0].0;
    let mut clamped = false;

    // per-component ingredients
    let mut per_component = Vec::with_capacity(r);
    for u in model.components() {
        let q = u.order();
        let c_q = compute_cd(q)?;
        let kappa_q = c_q + 2.0 * q as f64;
        let m4 = fourth_moment_threaded(space, u, budget, 1)?;
        let rho2 = u.rho_squared(space);
        let sum_term =
            clamp_radicand(2.0 * (m4 - 3.0) + 3.0 * kappa_q * rho2, &mut clamped).sqrt();
        per_component.push(ComponentIngredients {
            order: q,
            fourth_moment: m4,
            rho2,
            c_q,
            kappa_q,
            sum_term,
        });
    }

    // per-pair ingredients for i <= k
    let mut table: Vec<Vec<Option<CrossMoments>>> = vec![vec![None; r]; r];
    let mut pairs = Vec::new();
    for i in 0..r {
        for k in i..r {
            let cm = cross_moments(space, model, i, k, budget)?;
            let cm = if i == k {
                // diagonal τ from the univariate definition (identical class)
                CrossMoments { tau_ik: tau(model.component(i)), ..cm }
            } else {
                cm
            };
            table[i][k] = Some(cm);
            pairs.push(PairIngredients {
                i,
                k,
                e_w2w2: cm.e_w2w2,
                e_z2z2: gaussian_square_cross_moment(cm.v_ik),
                v_ik: cm.v_ik,
                s0_ik: cm.s0_ik,
                tau_ik: cm.tau_ik,
            });
        }
    }
    let cm_at = |i: usize, k: usize| table[i.min(k)][i.max(k)].unwrap();

    // equal-order double sum
    let q1f = q1 as f64;
    let mut a_value = 0.0;
    for (q, range) in &blocks {
        let ql = *q as f64;
        let mut block_sum = 0.0;
        for i in range.clone() {
            for k in range.clone() {
                let cm = cm_at(i, k);
                let rho_i = per_component[i].rho2;
                let rho_k = per_component[k].rho2;
                block_sum += cm.e_w2w2 - gaussian_square_cross_moment(cm.v_ik)
                    + ql * rho_i.min(rho_k)
                    + ql * (rho_i * rho_k).sqrt()
                    + cm.tau_ik;
            }
        }
        a_value += 4.0 * (ql * ql) / (q1f * q1f) * block_sum;
    }
    // mixed-order double sum over block pairs l < m
    for (li, (ql, range_l)) in blocks.iter().enumerate() {
        for (qm, range_m) in blocks.iter().skip(li + 1) {
            let qlf = *ql as f64;
            let qmf = *qm as f64;
            let c_qm = per_component[range_m.start].c_q;
            let mut sum = 0.0;
            for i in range_l.clone() {
                for k in range_m.clone() {
                    let cm = cm_at(i, k);
                    let rho_i = per_component[i].rho2;
                    let rho_k = per_component[k].rho2;
                    let f_i =
                        clamp_radicand(per_component[i].fourth_moment - 1.0, &mut clamped).sqrt();
                    let f_k = clamp_radicand(
                        per_component[k].fourth_moment - 3.0 + (2.0 * qmf + c_qm) * rho_k,
                        &mut clamped,
                    )
                    .sqrt();
                    sum += f_i * f_k + (qlf * rho_k).min(qmf * rho_i) + cm.tau_ik;
                }
            }
            a_value += 2.0 * (qlf + qmf).powi(2) / (q1f * q1f) * sum;
        }
    }

    let sum_term: f64 = blocks
        .iter()
        .map(|(q, range)| {
            (*q as f64 / q1f)
                * range.clone().map(|i| per_component[i].sum_term).sum::<f64>()
        })
        .sum();

    // block-diagonal covariance matrix
    let mut covariance = vec![vec![0.0; r]; r];
    for i in 0..r {
        for k in 0..r {
            covariance[i][k] = cm_at(i, k).v_ik;
        }
    }
    let lambda_min = min_eigenvalue_sym(&covariance)?;
    let op_v_inv_sqrt = if lambda_min > 1e-10 { Some(lambda_min.sqrt().recip()) } else { None };

    Ok(MultivariateBoundReport {
        r,
        q1,
        a_value,
        pairs,
        per_component,
        sum_term,
        covariance,
        lambda_min,
        op_v_inv_sqrt,
        clamped,
    })
}

/// The two multivariate bounds assembled from a report and smoothness
/// constants. The second requires V positive definite.
pub fn multivariate_bound(
    report: &MultivariateBoundReport,
    m: Smoothness,
) -> Result<(f64, f64)> {
    let r = report.r as f64;
    let q1 = report.q1 as f64;
    let sqrt_a = report.a_value.max(0.0).sqrt();
    let first = 1.0 / (4.0 * q1) * m.m2_tilde * sqrt_a
        + (2.0 * r).sqrt() / 9.0 * m.m3 * report.sum_term;
    let op = report.op_v_inv_sqrt.ok_or_else(|| {
        Error::Contract(format!(
            "covariance not positive definite (λ_min = {})",
            report.lambda_min
        ))
    })?;
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    let second = 1.0 / (sqrt_2pi * q1) * m.m1 * op * sqrt_a
        + (std::f64::consts::PI * r).sqrt() / 6.0 * m.m2 * op * report.sum_term;
    Ok((first, second))
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations,
/// iterated until the off-diagonal Frobenius mass falls below 1e-12.
pub fn min_eigenvalue_sym(matrix: &[Vec<f64>]) -> Result<f64> {
    let r = matrix.len();
    if r == 0 || r > 64 {
        return Err(Error::Contract(format!("matrix order {r} outside [1, 64]")));
    }
    for row in matrix {
        if row.len() != r {
            return Err(Error::Contract("matrix is not square".into()));
        }
    }
    for p in 0..r {
        for q in 0..r {
            if (matrix[p][q] - matrix[q][p]).abs() > 1e-12 {
                return Err(Error::Contract(format!(
                    "matrix is not symmetric at ({p},{q})"
                )));
            }
        }
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..r)
            .flat_map(|p| (0..r).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum::<f64>()
            .sqrt();
        if off < 1e-12 {
            break;
        }
        for p in 0..r {
            for q in (p + 1)..r {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for j in 0..r {
                    let apj = a[p][j];
                    let aqj = a[q][j];
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for j in 0..r {
                    let ajp = a[j][p];
                    let ajq = a[j][q];
                    a[j][p] = c * ajp - s * ajq;
                    a[j][q] = s * ajp + c * ajq;
                }
            }
        }
    }
    Ok((0..r).map(|i| a[i][i]).fold(f64::INFINITY, f64::min))
}
