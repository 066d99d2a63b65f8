//! Built-in model families: homogeneous multilinear sums, symmetric
//! U-statistics with a common kernel, weighted U-statistics, and randomized
//! instances for equivalence testing.

use rand::Rng;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hoeffding::{decompose, DegenerateUStatistic, HoeffdingDecomposition, COMPONENT_EPS};
use crate::sets::IndexSet;
use crate::space::{Coordinate, FiniteProductSpace, SubsetKernel};

/// `W = Σ_J a_J ∏_{j∈J} x_j` over `n` i.i.d. copies of a centered,
/// unit-variance coordinate law. The components are `a_J ∏ x_j` with
/// σ_J² = a_J², so the statistic is degenerate of order `d` by construction.
pub fn homogeneous_sum(
    n: usize,
    d: usize,
    coefficients: &[(IndexSet, f64)],
    law: &Coordinate,
) -> Result<(FiniteProductSpace, DegenerateUStatistic)> {
    if d == 0 || d > n {
        return Err(Error::Contract(format!("order {d} out of range for n = {n}")));
    }
    if law.mean().abs() > 1e-9 || (law.moment(2) - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "coordinate law must be centered with unit variance (mean {}, second moment {})",
            law.mean(),
            law.moment(2)
        )));
    }
    let space = FiniteProductSpace::iid(law.clone(), n)?;
    let mut merged: BTreeMap<IndexSet, f64> = BTreeMap::new();
    for &(subset, a) in coefficients {
        if subset.len() != d {
            return Err(Error::Contract(format!(
                "coefficient subset {subset} has size {}, expected {d}",
                subset.len()
            )));
        }
        if !subset.is_subset_of(space.full_set()) {
            return Err(Error::Model(format!("subset {subset} outside [1,{n}]")));
        }
        *merged.entry(subset).or_insert(0.0) += a;
    }
    let mut components = BTreeMap::new();
    for (subset, a) in merged {
        if a == 0.0 {
            continue;
        }
        let kernel = monomial_kernel(&space, subset, a)?;
        components.insert(subset, kernel);
    }
    let dec = HoeffdingDecomposition { components };
    let u = DegenerateUStatistic::new(&space, dec, d)?;
    Ok((space, u))
}

/// Dense table of `a · ∏_{j∈subset} x_j`.
fn monomial_kernel(
    space: &FiniteProductSpace,
    subset: IndexSet,
    a: f64,
) -> Result<SubsetKernel> {
    let coords: Vec<usize> = subset.iter().collect();
    let len = space.table_len(subset)?;
    let mut values = Vec::with_capacity(len);
    let mut it = crate::space::AtomIter::new(space, &coords);
    while it.advance() {
        let mut v = a;
        for (pos, &j) in coords.iter().enumerate() {
            v *= space.coord(j).support()[it.digits()[pos]];
        }
        values.push(v);
    }
    SubsetKernel::new(space, subset, values)
}

/// Output of [`symmetric_ustat`]: the generated statistic plus a flag
/// recording whether the raw kernel had to be projected to its top Hoeffding
/// component first.
pub struct SymmetricUStat {
    pub space: FiniteProductSpace,
    pub ustat: DegenerateUStatistic,
    pub projected: bool,
}

/// Symmetric U-statistic: one kernel `g` on `d` arguments applied to every
/// `d`-subset of `n` i.i.d. coordinates, then normalized to unit variance.
///
/// A kernel that is not Hoeffding-degenerate w.r.t. the common law is first
/// projected onto its order-`d` component; `projected` records that this
/// happened.
pub fn symmetric_ustat(
    n: usize,
    d: usize,
    g_values: &[f64],
    law: &Coordinate,
) -> Result<SymmetricUStat> {
    if d == 0 || d > n {
        return Err(Error::Contract(format!("order {d} out of range for n = {n}")));
    }
    // decompose g on a d-coordinate reference space
    let small = FiniteProductSpace::iid(law.clone(), d)?;
    let g = SubsetKernel::new(&small, IndexSet::full(d), g_values.to_vec())?;
    let dec = decompose(&small, &[g])?;
    let projected = dec
        .components
        .iter()
        .any(|(j, _)| j.len() != d);
    let top = dec
        .components
        .get(&IndexSet::full(d))
        .cloned()
        .ok_or(Error::ZeroVariance(0.0))?;

    let space = FiniteProductSpace::iid(law.clone(), n)?;
    let mut components = BTreeMap::new();
    for subset in d_subsets(n, d) {
        components.insert(subset, SubsetKernel::new(&space, subset, top.values().to_vec())?);
    }
    let u = DegenerateUStatistic::new(&space, HoeffdingDecomposition { components }, d)?;
    if u.variance() <= COMPONENT_EPS {
        return Err(Error::ZeroVariance(u.variance()));
    }
    let ustat = u.normalize(&space)?;
    Ok(SymmetricUStat { space, ustat, projected })
}

/// Weighted U-statistic of order 2: components `w_{ij} ψ(x_i, x_j)` for a
/// symmetric degenerate kernel ψ on a common law.
pub fn weighted_ustat(
    n: usize,
    weights: &[(usize, usize, f64)],
    psi_values: &[f64],
    law: &Coordinate,
) -> Result<(FiniteProductSpace, DegenerateUStatistic)> {
    let m = law.arity();
    if psi_values.len() != m * m {
        return Err(Error::Model(format!(
            "psi table needs {} values for a support of size {m}",
            m * m
        )));
    }
    // symmetry of ψ
    for a in 0..m {
        for b in 0..m {
            if (psi_values[a * m + b] - psi_values[b * m + a]).abs() > 1e-12 {
                return Err(Error::Contract("psi must be symmetric".into()));
            }
        }
    }
    // degeneracy of ψ w.r.t. the law
    let small = FiniteProductSpace::iid(law.clone(), 2)?;
    let psi = SubsetKernel::new(&small, IndexSet::full(2), psi_values.to_vec())?;
    let dec = decompose(&small, &[psi])?;
    if dec.components.keys().any(|j| j.len() != 2) {
        return Err(Error::Contract("psi is not degenerate w.r.t. the coordinate law".into()));
    }

    let space = FiniteProductSpace::iid(law.clone(), n)?;
    let mut components: BTreeMap<IndexSet, SubsetKernel> = BTreeMap::new();
    for &(i, j, w) in weights {
        if i == j || i == 0 || j == 0 || i > n || j > n {
            return Err(Error::Model(format!("bad weight pair ({i},{j})")));
        }
        if w == 0.0 {
            continue;
        }
        let subset = IndexSet::from_one_based(&[i, j]).unwrap();
        let kernel = SubsetKernel::new(&space, subset, psi_values.to_vec())?;
        match components.get_mut(&subset) {
            Some(existing) => {
                let merged: Vec<f64> = existing
                    .values()
                    .iter()
                    .zip(kernel.values())
                    .map(|(a, b)| a + w * b)
                    .collect();
                *existing = SubsetKernel::new(&space, subset, merged)?;
            }
            None => {
                components.insert(subset, kernel.scale(w));
            }
        }
    }
    let u = DegenerateUStatistic::new(&space, HoeffdingDecomposition { components }, 2)?;
    Ok((space, u))
}

/// All `d`-subsets of `{0,…,n-1}` in ascending mask order.
pub fn d_subsets(n: usize, d: usize) -> Vec<IndexSet> {
    let mut out = Vec::new();
    let full = IndexSet::full(n);
    for s in full.subsets() {
        if s.len() == d {
            out.push(s);
        }
    }
    out
}

/// Random space: `n` coordinates with supports of size 2..=`max_support`,
/// spread-out atom values and probabilities bounded away from zero.
pub fn random_space(rng: &mut impl Rng, n: usize, max_support: usize) -> FiniteProductSpace {
    let coords: Vec<Coordinate> = (0..n)
        .map(|_| {
            let m = rng.gen_range(2..=max_support.max(2));
            let support: Vec<f64> =
                (0..m).map(|t| 1.3 * t as f64 + rng.gen_range(-0.35..0.35)).collect();
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.15..1.0)).collect();
            let tot: f64 = raw.iter().sum();
            Coordinate::new(support, raw.iter().map(|p| p / tot).collect()).unwrap()
        })
        .collect();
    FiniteProductSpace::new(coords).unwrap()
}

/// Random degenerate U-statistic of order `d`: decomposes a random function
/// built from `kernels` random subset kernels and keeps the order-`d` part.
/// Returns `None` if the order-`d` mass is numerically zero.
pub fn random_degenerate(
    rng: &mut impl Rng,
    space: &FiniteProductSpace,
    d: usize,
    kernels: usize,
) -> Option<DegenerateUStatistic> {
    let n = space.n();
    if d > n {
        return None;
    }
    let all = d_subsets(n, d);
    let mut raw = Vec::new();
    for _ in 0..kernels.max(1) {
        let subset = all[rng.gen_range(0..all.len())];
        let len = space.table_len(subset).unwrap();
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        raw.push(SubsetKernel::new(space, subset, values).unwrap());
    }
    let dec = decompose(space, &raw).ok()?;
    let u = DegenerateUStatistic::project(space, &dec, d);
    if u.variance() <= 1e-8 {
        return None;
    }
    u.normalize(space).ok()
}

/// Random normalized instance: a fresh space with `n` coordinates plus a
/// degenerate statistic of order `d` on it.
pub fn random_instance(
    rng: &mut impl Rng,
    max_n: usize,
    d: usize,
    max_support: usize,
) -> (FiniteProductSpace, DegenerateUStatistic) {
    loop {
        let n = rng.gen_range(d.max(2)..=max_n.max(d.max(2)));
        let space = random_space(rng, n, max_support);
        let kernels = rng.gen_range(1..=3);
        if let Some(u) = random_degenerate(rng, &space, d, kernels) {
            return (space, u);
        }
    }
}
