//! Closed-form quantities for the coordinate-replacement exchangeable pair:
//! redraw one uniformly chosen coordinate from its own law.
//!
//! Nothing here is sampled. All pair quantities are exact averages over the
//! uniform coordinate index and the replacement distribution, so identity
//! checks carry no Monte Carlo noise. For a degenerate statistic of order
//! `d` the pair satisfies `E[W' − W | X] = −(d/n) W` exactly, and
//! `(n/2d) E\[(W\'−W)² | X\] = Σ_{|M| ≤ 2d−1} a_M U_M` with
//! `a_M = 1 − |M|/(2d)`, where `{U_M}` decomposes `W²`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hoeffding::{DegenerateUStatistic, HoeffdingDecomposition};
use crate::product::hoeffding_product;
use crate::sets::IndexSet;
use crate::space::{
    atom_prob, conditional_expectation, expectation, joint_moment, AtomIter, Budget,
    FiniteProductSpace, SubsetKernel,
};

/// The regression coefficient λ = d/n of the pair.
pub fn lambda(space: &FiniteProductSpace, u: &DegenerateUStatistic) -> f64 {
    u.order() as f64 / space.n() as f64
}

/// Max over atoms of `|E\[W\'−W | X\](x) + λ·W(x)|` for the components of any
/// decomposition and a claimed coefficient λ. Exposed separately from
/// [`regression_check`] so that deliberately non-degenerate inputs can be
/// fed as negative controls.
pub fn regression_residual_raw(
    space: &FiniteProductSpace,
    dec: &HoeffdingDecomposition,
    lam: f64,
    budget: Budget,
) -> Result<f64> {
    let n = space.n();
    let full = space.full_set();
    let len = space.table_len(full)?;
    if (len as u128) > budget.0 as u128 {
        return Err(Error::Budget { required: len as u128, budget: budget.0 });
    }
    // per coordinate j, the components with X_j integrated out
    let mut conditioned: Vec<Vec<SubsetKernel>> = Vec::with_capacity(n);
    for j in 0..n {
        let keep = full.remove(j);
        let mut list = Vec::new();
        for k in dec.components.values() {
            if k.subset().contains(j) {
                list.push(conditional_expectation(space, k, keep)?);
            } else {
                list.push(k.clone());
            }
        }
        conditioned.push(list);
    }

    let coords: Vec<usize> = full.iter().collect();
    let mut it = AtomIter::new(space, &coords);
    let mut worst: f64 = 0.0;
    while it.advance() {
        let digits = it.digits();
        let w = dec.evaluate(space, digits);
        let mut drift = 0.0;
        for list in &conditioned {
            let mut replaced = 0.0;
            for k in list {
                replaced += k.eval_digits(space, digits);
            }
            drift += replaced - w;
        }
        drift /= n as f64;
        worst = worst.max((drift + lam * w).abs());
    }
    Ok(worst)
}

/// Max absolute residual of the exact linear regression property
/// `E\[W\'−W | X\] = −(d/n) W`.
pub fn regression_check(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    budget: Budget,
) -> Result<f64> {
    regression_residual_raw(space, &u.decomposition(), lambda(space, u), budget)
}

/// The decomposition `Σ_{|M| ≤ 2d−1} a_M U_M` of `(n/2d) E\[(W\'−W)² | X\]`,
/// with the coefficients kept alongside the scaled components.
#[derive(Debug, Clone)]
pub struct SquaredIncrement {
    /// Components a_M · U_M (subsets with a_M = 0 dropped).
    pub scaled: HoeffdingDecomposition,
    /// The unscaled product components U_M of W².
    pub product: HoeffdingDecomposition,
    /// a_M = 1 − |M|/(2d) per stored subset of `product`.
    pub coefficients: BTreeMap<IndexSet, f64>,
}

impl SquaredIncrement {
    pub fn coefficient(order: usize, m_len: usize) -> f64 {
        1.0 - m_len as f64 / (2.0 * order as f64)
    }
}

/// Builds the squared-increment decomposition from the product formula
/// applied to `(u, u)`.
pub fn squared_increment_decomposition(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    budget: Budget,
) -> Result<SquaredIncrement> {
    let product = hoeffding_product(space, u, u, budget)?;
    let d = u.order();
    let mut coefficients = BTreeMap::new();
    let mut scaled = BTreeMap::new();
    for (&m, kernel) in &product.components {
        let a = SquaredIncrement::coefficient(d, m.len());
        coefficients.insert(m, a);
        if m.len() < 2 * d && a != 0.0 {
            scaled.insert(m, kernel.scale(a));
        }
    }
    Ok(SquaredIncrement {
        scaled: HoeffdingDecomposition { components: scaled },
        product,
        coefficients,
    })
}

/// Direct enumeration of `(n/2d) E\[(W\'−W)² | X\]` as a table over the full
/// space — the independent check for the coefficient formula.
pub fn direct_conditional_squared_increment(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    budget: Budget,
) -> Result<SubsetKernel> {
    let full = space.full_set();
    let len = space.table_len(full)?;
    if (len as u128) > budget.0 as u128 {
        return Err(Error::Budget { required: len as u128, budget: budget.0 });
    }
    let coords: Vec<usize> = full.iter().collect();
    let d = u.order();
    let mut out = Vec::with_capacity(len);
    let mut it = AtomIter::new(space, &coords);
    let mut scratch = vec![0usize; space.n()];
    while it.advance() {
        let digits = it.digits();
        scratch.copy_from_slice(digits);
        let w = u.evaluate(space, digits);
        let mut acc = 0.0;
        for j in 0..space.n() {
            let keep = scratch[j];
            for (y, &py) in space.coord(j).probs().iter().enumerate() {
                scratch[j] = y;
                let dw = u.evaluate(space, &scratch) - w;
                acc += py * dw * dw;
            }
            scratch[j] = keep;
        }
        out.push(acc / (2.0 * d as f64));
    }
    SubsetKernel::new(space, full, out)
}

/// Exact `(1/c) E[(W'−W)^k]` (or of `|W'−W|^k`) by enumeration over
/// (atom, coordinate, replacement), with `c = 1` — callers apply their own
/// normalization.
pub fn direct_increment_moment(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    power: i32,
    absolute: bool,
    budget: Budget,
) -> Result<f64> {
    let full = space.full_set();
    let len = space.table_len(full)? as u128;
    let total: u128 = len * space.coords().iter().map(|c| c.arity() as u128).sum::<u128>();
    if total > budget.0 as u128 {
        return Err(Error::Budget { required: total, budget: budget.0 });
    }
    let coords: Vec<usize> = full.iter().collect();
    let n = space.n() as f64;
    let mut it = AtomIter::new(space, &coords);
    let mut scratch = vec![0usize; space.n()];
    let mut acc = 0.0;
    while it.advance() {
        let digits = it.digits();
        scratch.copy_from_slice(digits);
        let px = atom_prob(space, &coords, digits);
        let w = u.evaluate(space, digits);
        for j in 0..space.n() {
            let keep = scratch[j];
            for (y, &py) in space.coord(j).probs().iter().enumerate() {
                scratch[j] = y;
                let mut dw = u.evaluate(space, &scratch) - w;
                if absolute {
                    dw = dw.abs();
                }
                acc += px * py * dw.powi(power) / n;
            }
            scratch[j] = keep;
        }
    }
    Ok(acc)
}

/// Scalar summaries of the pair for one statistic.
#[derive(Debug, Clone, Copy)]
pub struct PairQuantities {
    pub lambda: f64,
    /// Max residual of the linear regression identity.
    pub regression_residual: f64,
    /// Var((n/2d) E\[(W\'−W)² | X\]) = Σ a_M² Var(U_M).
    pub var_conditional: f64,
    /// (n/4d) E\[(W\'−W)⁴\], from the moment identity
    /// 3 E[W² (n/2d)E\[(W\'−W)²|X\]] − E\[W⁴\].
    pub fourth_increment: f64,
    /// Cauchy–Schwarz bound (2√2/3)·√fourth_increment on (1/3λ)E|W'−W|³.
    pub third_moment_bound: f64,
}

/// Computes all pair summaries. Requires unit variance (the moment identity
/// uses E\[W²\] = 1 through the product decomposition's U_∅ term).
pub fn pair_quantities(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    budget: Budget,
) -> Result<PairQuantities> {
    if !u.is_normalized(1e-8) {
        return Err(Error::Contract(format!(
            "pair quantities need unit variance, got {}",
            u.variance()
        )));
    }
    let sq = squared_increment_decomposition(space, u, budget)?;
    let mut e_w4 = 0.0; // E[W⁴] = Σ_M E[U_M²]
    let mut e_w2q = 0.0; // E[W² Σ a_M U_M] = Σ_M a_M E[U_M²]
    let mut var_conditional = 0.0;
    for (&m, kernel) in &sq.product.components {
        let m2 = joint_moment(space, &[kernel, kernel], budget)?;
        let a = sq.coefficients[&m];
        e_w4 += m2;
        e_w2q += a * m2;
        if !m.is_empty() {
            let mean = expectation(space, kernel);
            var_conditional += a * a * (m2 - mean * mean);
        }
    }
    let fourth_increment = 3.0 * e_w2q - e_w4;
    let third_moment_bound = (2.0 * 2.0f64.sqrt() / 3.0) * fourth_increment.max(0.0).sqrt();
    let regression_residual = regression_check(space, u, budget)?;
    Ok(PairQuantities {
        lambda: lambda(space, u),
        regression_residual,
        var_conditional,
        fourth_increment,
        third_moment_bound,
    })
}
