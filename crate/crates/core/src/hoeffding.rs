//! Hoeffding decompositions, degeneracy checks, component variances and the
//! influence quantity ρ².
//!
//! The decomposition of `W = Σ f_J(X_J)` maps each subset `J ⊆ \[n\]` to a
//! component `W_J` with `E\[W_J | F_K\] = 0` whenever `J ⊄ K`; it is computed
//! per input kernel over the `2^|J|` subsets of its own support, never over
//! the global subset lattice.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sets::IndexSet;
use crate::space::{
    add_scaled, conditional_expectation, expectation, joint_moment, Budget, FiniteProductSpace,
    SubsetKernel,
};

/// Components with second moment below this count as "zero variance" in
/// degeneracy checks.
pub const COMPONENT_EPS: f64 = 1e-12;

/// Retention cutoff for decomposition maps. Set far below [`COMPONENT_EPS`]:
/// a component at the 1e-12 variance level still has pointwise values near
/// 1e-6, which must not be discarded under 1e-9 reconstruction tolerances.
pub(crate) const DROP_EPS: f64 = 1e-24;

/// Map from subsets of `[n]` to Hoeffding components. Only subsets carrying a
/// nonzero component are stored.
#[derive(Debug, Clone, Default)]
pub struct HoeffdingDecomposition {
    pub components: BTreeMap<IndexSet, SubsetKernel>,
}

impl HoeffdingDecomposition {
    pub fn component(&self, subset: IndexSet) -> Option<&SubsetKernel> {
        self.components.get(&subset)
    }

    pub fn subsets(&self) -> impl Iterator<Item = IndexSet> + '_ {
        self.components.keys().copied()
    }

    /// Pointwise value of `Σ_J W_J` at a full-space atom.
    pub fn evaluate(&self, space: &FiniteProductSpace, digits: &[usize]) -> f64 {
        self.components.values().map(|k| k.eval_digits(space, digits)).sum()
    }

    /// `E\[W_J²\]` per stored subset (equals Var(W_J) for J ≠ ∅).
    pub fn second_moments(&self, space: &FiniteProductSpace) -> BTreeMap<IndexSet, f64> {
        self.components
            .iter()
            .map(|(&j, k)| {
                let m2 = joint_moment(space, &[k, k], Budget::default())
                    .expect("component table already materialized");
                (j, m2)
            })
            .collect()
    }
}

/// Exact Hoeffding decomposition of `W = Σ_i f_{J_i}(X_{J_i})`.
///
/// Each input kernel is decomposed over the subsets of its own support via
/// `W_J = Σ_{L⊆J} (−1)^{|J|−|L|} E\[W | F_L\]`, and the results are merged
/// additively in ascending subset order. Only numerically-zero components
/// are dropped, so reconstruction holds pointwise to near machine precision.
pub fn decompose(
    space: &FiniteProductSpace,
    kernels: &[SubsetKernel],
) -> Result<HoeffdingDecomposition> {
    let mut acc: BTreeMap<IndexSet, SubsetKernel> = BTreeMap::new();
    for kernel in kernels {
        // all conditionals E[f | F_L] for L ⊆ J
        let mut cond: BTreeMap<IndexSet, SubsetKernel> = BTreeMap::new();
        for sub in kernel.subset().subsets() {
            cond.insert(sub, conditional_expectation(space, kernel, sub)?);
        }
        for sub in kernel.subset().subsets() {
            let len = space.table_len(sub)?;
            let mut component = SubsetKernel::new(space, sub, vec![0.0; len])?;
            for inner in sub.subsets() {
                let sign = if (sub.len() - inner.len()) % 2 == 0 { 1.0 } else { -1.0 };
                add_scaled(space, &mut component, &cond[&inner], sign)?;
            }
            match acc.get_mut(&sub) {
                Some(existing) => add_scaled(space, existing, &component, 1.0)?,
                None => {
                    acc.insert(sub, component);
                }
            }
        }
    }
    acc.retain(|_, k| {
        let m2: f64 = {
            let coords: Vec<usize> = k.subset().iter().collect();
            let mut it = crate::space::AtomIter::new(space, &coords);
            let mut idx = 0;
            let mut s = 0.0;
            while it.advance() {
                s += crate::space::atom_prob(space, &coords, it.digits())
                    * k.values()[idx]
                    * k.values()[idx];
                idx += 1;
            }
            s
        };
        m2 >= DROP_EPS
    });
    Ok(HoeffdingDecomposition { components: acc })
}

#[derive(Debug, Clone)]
pub struct DegeneracyReport {
    pub degenerate: bool,
    /// Subsets carrying non-negligible mass at the wrong order.
    pub offenders: Vec<IndexSet>,
}

/// True iff every component with second moment ≥ [`COMPONENT_EPS`] sits on a
/// subset of size exactly `d`.
pub fn check_degenerate(
    space: &FiniteProductSpace,
    dec: &HoeffdingDecomposition,
    d: usize,
) -> DegeneracyReport {
    let mut offenders = Vec::new();
    for &j in dec.components.keys() {
        if j.len() != d {
            let m2 = dec.second_moments_one(space, j);
            if m2 >= COMPONENT_EPS {
                offenders.push(j);
            }
        }
    }
    DegeneracyReport { degenerate: offenders.is_empty(), offenders }
}

impl HoeffdingDecomposition {
    fn second_moments_one(&self, space: &FiniteProductSpace, j: IndexSet) -> f64 {
        match self.components.get(&j) {
            None => 0.0,
            Some(k) => joint_moment(space, &[k, k], Budget::default()).unwrap_or(f64::INFINITY),
        }
    }
}

/// A statistic whose Hoeffding decomposition is supported on subsets of one
/// fixed size `d`, with cached component variances σ_J².
#[derive(Debug, Clone)]
pub struct DegenerateUStatistic {
    order: usize,
    components: BTreeMap<IndexSet, SubsetKernel>,
    sigma2: BTreeMap<IndexSet, f64>,
}

impl DegenerateUStatistic {
    /// Wraps a decomposition after verifying it is supported on order `d`.
    pub fn new(
        space: &FiniteProductSpace,
        dec: HoeffdingDecomposition,
        d: usize,
    ) -> Result<Self> {
        let report = check_degenerate(space, &dec, d);
        if !report.degenerate {
            return Err(Error::Contract(format!(
                "decomposition is not degenerate of order {d}; offending subsets {:?}",
                report.offenders
            )));
        }
        Ok(Self::from_components(space, dec.components, d))
    }

    /// Keeps only the order-`d` part of a decomposition (deliberate
    /// projection, no validation of what is discarded).
    pub fn project(space: &FiniteProductSpace, dec: &HoeffdingDecomposition, d: usize) -> Self {
        let comps: BTreeMap<IndexSet, SubsetKernel> = dec
            .components
            .iter()
            .filter(|(j, _)| j.len() == d)
            .map(|(&j, k)| (j, k.clone()))
            .collect();
        Self::from_components(space, comps, d)
    }

    fn from_components(
        space: &FiniteProductSpace,
        components: BTreeMap<IndexSet, SubsetKernel>,
        d: usize,
    ) -> Self {
        let sigma2 = components
            .iter()
            .map(|(&j, k)| {
                let m2 = joint_moment(space, &[k, k], Budget::default())
                    .expect("component tables are materialized");
                let m1 = expectation(space, k);
                (j, m2 - m1 * m1)
            })
            .collect();
        DegenerateUStatistic { order: d, components, sigma2 }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn components(&self) -> &BTreeMap<IndexSet, SubsetKernel> {
        &self.components
    }

    pub fn sigma2(&self) -> &BTreeMap<IndexSet, f64> {
        &self.sigma2
    }

    pub fn decomposition(&self) -> HoeffdingDecomposition {
        HoeffdingDecomposition { components: self.components.clone() }
    }

    /// Var(W) = Σ_J σ_J² by orthogonality of the components.
    pub fn variance(&self) -> f64 {
        self.sigma2.values().sum()
    }

    /// ρ² = max over coordinates i of Σ_{J ∋ i} σ_J².
    pub fn rho_squared(&self, space: &FiniteProductSpace) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..space.n() {
            let s: f64 = self
                .sigma2
                .iter()
                .filter(|(j, _)| j.contains(i))
                .map(|(_, &v)| v)
                .sum();
            best = best.max(s);
        }
        best
    }

    /// Rescales all components so that Var(W) = 1.
    pub fn normalize(&self, space: &FiniteProductSpace) -> Result<Self> {
        let var = self.variance();
        if var <= 1e-12 {
            return Err(Error::ZeroVariance(var));
        }
        let c = var.sqrt().recip();
        let components: BTreeMap<IndexSet, SubsetKernel> =
            self.components.iter().map(|(&j, k)| (j, k.scale(c))).collect();
        Ok(Self::from_components(space, components, self.order))
    }

    pub fn evaluate(&self, space: &FiniteProductSpace, digits: &[usize]) -> f64 {
        self.components.values().map(|k| k.eval_digits(space, digits)).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.variance() - 1.0).abs() <= tol
    }
}

/// Several degenerate U-statistics over one shared space, with orders sorted
/// ascending (`p_1 ≤ … ≤ p_r`).
#[derive(Debug, Clone)]
pub struct VectorModel {
    components: Vec<DegenerateUStatistic>,
}

impl VectorModel {
    pub fn new(components: Vec<DegenerateUStatistic>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Contract("vector model needs at least one component".into()));
        }
        for w in components.windows(2) {
            if w[0].order() > w[1].order() {
                return Err(Error::Contract(
                    "vector model orders must be sorted ascending".into(),
                ));
            }
        }
        Ok(VectorModel { components })
    }

    pub fn r(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &DegenerateUStatistic {
        &self.components[i]
    }

    pub fn components(&self) -> &[DegenerateUStatistic] {
        &self.components
    }

    pub fn orders(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.order()).collect()
    }

    /// Consecutive index blocks of equal order: `(q_l, start..end)`.
    pub fn blocks(&self) -> Vec<(usize, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.components.len() {
            let q = self.components[start].order();
            let mut end = start + 1;
            while end < self.components.len() && self.components[end].order() == q {
                end += 1;
            }
            out.push((q, start..end));
            start = end;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Coordinate;

    fn fair_coins(n: usize) -> FiniteProductSpace {
        FiniteProductSpace::iid(Coordinate::rademacher(), n).unwrap()
    }

    fn coin_pair(space: &FiniteProductSpace, i: usize, j: usize) -> SubsetKernel {
        SubsetKernel::new(space, IndexSet::from_indices(&[i, j]), vec![1.0, -1.0, -1.0, 1.0])
            .unwrap()
    }

    #[test]
    fn decompose_sum_with_interaction() {
        // W = x1 + x2 + x1·x2 splits into {1}, {2}, {1,2}; no ∅ part.
        let s = fair_coins(2);
        let full = IndexSet::full(2);
        // table over (x1, x2), x1 slowest: f(-1,-1)=-1, f(-1,1)=-1, f(1,-1)=-1, f(1,1)=3
        let w = SubsetKernel::new(&s, full, vec![-1.0, -1.0, -1.0, 3.0]).unwrap();
        let dec = decompose(&s, &[w]).unwrap();
        assert_eq!(dec.components.len(), 3);
        let c1 = dec.component(IndexSet::singleton(0)).unwrap();
        assert_eq!(c1.values(), &[-1.0, 1.0]);
        let c2 = dec.component(IndexSet::singleton(1)).unwrap();
        assert_eq!(c2.values(), &[-1.0, 1.0]);
        let c12 = dec.component(full).unwrap();
        assert_eq!(c12.values(), &[1.0, -1.0, -1.0, 1.0]);
        assert!(dec.component(IndexSet::EMPTY).is_none());
    }

    #[test]
    fn decompose_centers_biased_coordinate() {
        let s = FiniteProductSpace::new(vec![
            Coordinate::new(vec![0.0, 1.0], vec![0.25, 0.75]).unwrap()
        ])
        .unwrap();
        let f = SubsetKernel::new(&s, IndexSet::singleton(0), vec![0.0, 1.0]).unwrap();
        let dec = decompose(&s, &[f]).unwrap();
        let empty = dec.component(IndexSet::EMPTY).unwrap();
        assert!((empty.values()[0] - 0.75).abs() < 1e-15);
        let lin = dec.component(IndexSet::singleton(0)).unwrap();
        assert!((lin.values()[0] + 0.75).abs() < 1e-15);
        assert!((lin.values()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn decompose_constant() {
        let s = fair_coins(1);
        let dec = decompose(&s, &[SubsetKernel::constant(2.5)]).unwrap();
        assert_eq!(dec.components.len(), 1);
        assert_eq!(dec.component(IndexSet::EMPTY).unwrap().values(), &[2.5]);
    }

    #[test]
    fn degeneracy_check() {
        let s = fair_coins(2);
        let dec = decompose(&s, &[coin_pair(&s, 0, 1)]).unwrap();
        assert!(check_degenerate(&s, &dec, 2).degenerate);

        // x1 + x1·x2 has an order-1 offender
        let full = IndexSet::full(2);
        let w = SubsetKernel::new(&s, full, vec![0.0, -2.0, 0.0, 2.0]).unwrap();
        let dec = decompose(&s, &[w]).unwrap();
        let report = check_degenerate(&s, &dec, 2);
        assert!(!report.degenerate);
        assert_eq!(report.offenders, vec![IndexSet::singleton(0)]);

        // the zero function is vacuously degenerate of any order
        let zero = SubsetKernel::new(&s, full, vec![0.0; 4]).unwrap();
        let dec = decompose(&s, &[zero]).unwrap();
        assert!(check_degenerate(&s, &dec, 5).degenerate);
    }

    #[test]
    fn rho_squared_examples() {
        let s = fair_coins(2);
        let u = DegenerateUStatistic::new(&s, decompose(&s, &[coin_pair(&s, 0, 1)]).unwrap(), 2)
            .unwrap();
        assert!((u.rho_squared(&s) - 1.0).abs() < 1e-15);

        let s4 = fair_coins(4);
        let scale = 0.5f64.sqrt();
        let k1 = coin_pair(&s4, 0, 1).scale(scale);
        let k2 = coin_pair(&s4, 2, 3).scale(scale);
        let dec = decompose(&s4, &[k1, k2]).unwrap();
        let u = DegenerateUStatistic::new(&s4, dec, 2).unwrap();
        assert!((u.rho_squared(&s4) - 0.5).abs() < 1e-14);
        assert!((u.variance() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn normalize_examples() {
        let s = fair_coins(2);
        let dec = decompose(&s, &[coin_pair(&s, 0, 1).scale(2.0)]).unwrap();
        let u = DegenerateUStatistic::new(&s, dec, 2).unwrap();
        assert!((u.variance() - 4.0).abs() < 1e-14);
        let n = u.normalize(&s).unwrap();
        assert!((n.variance() - 1.0).abs() < 1e-10);
        let again = n.normalize(&s).unwrap();
        for (a, b) in n.sigma2().values().zip(again.sigma2().values()) {
            assert!((a - b).abs() < 1e-12);
        }

        let zero = decompose(&s, &[SubsetKernel::constant(0.0)]).unwrap();
        let u = DegenerateUStatistic::new(&s, zero, 2).unwrap();
        assert!(matches!(u.normalize(&s), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn rho_squared_matches_brute_recomputation() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(13);
        for _ in 0..10 {
            let (space, u) = crate::generators::random_instance(&mut rng, 5, 2, 3);
            // second route: per-coordinate sums of second moments computed
            // from the tables, bypassing the cached σ² map
            let mut best: f64 = 0.0;
            for i in 0..space.n() {
                let mut s = 0.0;
                for (j, k) in u.components() {
                    if j.contains(i) {
                        s += joint_moment(&space, &[k, k], Budget::default()).unwrap();
                    }
                }
                best = best.max(s);
            }
            assert!((u.rho_squared(&space) - best).abs() < 1e-12);
            assert!(u.rho_squared(&space) <= 1.0 + 1e-9, "normalized instances have rho² ≤ 1");
        }
    }

    #[test]
    fn orthogonality_reconstruction_degeneracy_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(2..=5);
            let coords: Vec<Coordinate> = (0..n)
                .map(|_| {
                    let m = rng.gen_range(2..=3);
                    let support: Vec<f64> =
                        (0..m).map(|t| 1.5 * t as f64 + rng.gen_range(-0.4..0.4)).collect();
                    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.15..1.0)).collect();
                    let tot: f64 = raw.iter().sum();
                    Coordinate::new(support, raw.iter().map(|p| p / tot).collect()).unwrap()
                })
                .collect();
            let space = FiniteProductSpace::new(coords).unwrap();
            let full = IndexSet::full(n);
            let len = space.table_len(full).unwrap();
            let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = SubsetKernel::new(&space, full, values.clone()).unwrap();
            let dec = decompose(&space, &[w]).unwrap();

            // reconstruction at every atom
            let coords_list: Vec<usize> = full.iter().collect();
            let mut it = crate::space::AtomIter::new(&space, &coords_list);
            let mut idx = 0;
            while it.advance() {
                let rec = dec.evaluate(&space, it.digits());
                assert!((rec - values[idx]).abs() < 1e-9, "reconstruction off: {rec} vs {}", values[idx]);
                idx += 1;
            }

            // orthogonality of distinct components
            let comps: Vec<(&IndexSet, &SubsetKernel)> = dec.components.iter().collect();
            for (a, (_, ka)) in comps.iter().enumerate() {
                for (_, kb) in comps.iter().skip(a + 1).map(|(j, k)| (j, k)) {
                    let m = joint_moment(&space, &[ka, kb], Budget::default()).unwrap();
                    assert!(m.abs() < 1e-9, "components not orthogonal: {m}");
                }
            }

            // degeneracy: E[W_J | F_{J \ {j}}] = 0 pointwise
            for (&j, k) in &dec.components {
                for drop in j.iter() {
                    let cond =
                        conditional_expectation(&space, k, j.remove(drop)).unwrap();
                    for v in cond.values() {
                        assert!(v.abs() < 1e-9, "degeneracy residual {v}");
                    }
                }
            }
        }
    }
}
