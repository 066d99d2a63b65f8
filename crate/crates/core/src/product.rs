//! Product formula for degenerate U-statistics, plus a brute-force oracle.
//!
//! For `p`- and `q`-degenerate `W = Σ W_J` and `V = Σ V_K` over one space,
//! the Hoeffding decomposition of `VW` is
//!
//! `U_M = Σ_{J,K : JΔK ⊆ M ⊆ J∪K} Σ_{L : JΔK ⊆ L ⊆ M} (−1)^{|M|−|L|} E\[W_J V_K | F_L\]`.
//!
//! The inner alternating sum is evaluated directly; at desk scale `|M| ≤ p+q`
//! stays small and the direct form is easy to audit against the oracle.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::hoeffding::{decompose, DegenerateUStatistic, HoeffdingDecomposition};
use crate::sets::IndexSet;
use crate::space::{
    add_scaled, conditional_expectation, joint_moment, kernel_product, Budget,
    FiniteProductSpace, SubsetKernel,
};

/// Hoeffding decomposition of the pointwise product `v·w` via the product
/// formula.
pub fn hoeffding_product(
    space: &FiniteProductSpace,
    v: &DegenerateUStatistic,
    w: &DegenerateUStatistic,
    budget: Budget,
) -> Result<HoeffdingDecomposition> {
    let mut acc: BTreeMap<IndexSet, SubsetKernel> = BTreeMap::new();
    for (&j, kj) in v.components() {
        for (&k, kk) in w.components() {
            let product = kernel_product(space, kj, kk)?;
            let sym = j.sym_diff(k);
            let both = j.intersect(k);
            // conditionals E[W_J V_K | F_L] for every JΔK ⊆ L ⊆ J∪K
            let mut cond: BTreeMap<IndexSet, SubsetKernel> = BTreeMap::new();
            for extra in both.subsets() {
                let l = sym.union(extra);
                cond.insert(l, conditional_expectation(space, &product, l)?);
            }
            for extra_m in both.subsets() {
                let m = sym.union(extra_m);
                let len = space.table_len(m)?;
                let mut term = SubsetKernel::new(space, m, vec![0.0; len])?;
                for extra_l in extra_m.subsets() {
                    let l = sym.union(extra_l);
                    let sign = if (m.len() - l.len()) % 2 == 0 { 1.0 } else { -1.0 };
                    add_scaled(space, &mut term, &cond[&l], sign)?;
                }
                match acc.get_mut(&m) {
                    Some(existing) => add_scaled(space, existing, &term, 1.0)?,
                    None => {
                        acc.insert(m, term);
                    }
                }
            }
        }
    }
    acc.retain(|_, k| {
        joint_moment(space, &[k, k], budget).map(|m2| m2 >= 1e-24).unwrap_or(true)
    });
    Ok(HoeffdingDecomposition { components: acc })
}

/// Brute-force oracle: multiplies the two functions pointwise on the product
/// of their union coordinates, then decomposes. Accepts arbitrary
/// decompositions (order-0 parts included), unlike [`hoeffding_product`].
pub fn product_oracle(
    space: &FiniteProductSpace,
    a: &HoeffdingDecomposition,
    b: &HoeffdingDecomposition,
    budget: Budget,
) -> Result<HoeffdingDecomposition> {
    let union = a
        .subsets()
        .chain(b.subsets())
        .fold(IndexSet::EMPTY, IndexSet::union);
    let len = space.table_len(union)?;
    if (len as u128) > budget.0 as u128 {
        return Err(crate::error::Error::Budget { required: len as u128, budget: budget.0 });
    }
    let coords: Vec<usize> = union.iter().collect();
    let mut values = Vec::with_capacity(len);
    let mut it = crate::space::AtomIter::new(space, &coords);
    let mut digits_full = vec![0usize; space.n()];
    while it.advance() {
        for (pos, &j) in coords.iter().enumerate() {
            digits_full[j] = it.digits()[pos];
        }
        values.push(a.evaluate(space, &digits_full) * b.evaluate(space, &digits_full));
    }
    let product = SubsetKernel::new(space, union, values)?;
    decompose(space, &[product])
}

/// Component-wise comparison of two decompositions; returns the largest
/// absolute pointwise deviation over the union of stored subsets.
pub fn max_component_deviation(
    space: &FiniteProductSpace,
    a: &HoeffdingDecomposition,
    b: &HoeffdingDecomposition,
) -> f64 {
    let mut worst: f64 = 0.0;
    let subsets: std::collections::BTreeSet<IndexSet> =
        a.subsets().chain(b.subsets()).collect();
    for j in subsets {
        let za;
        let zb;
        let ka = match a.component(j) {
            Some(k) => k,
            None => {
                za = SubsetKernel::new(space, j, vec![0.0; space.table_len(j).unwrap()]).unwrap();
                &za
            }
        };
        let kb = match b.component(j) {
            Some(k) => k,
            None => {
                zb = SubsetKernel::new(space, j, vec![0.0; space.table_len(j).unwrap()]).unwrap();
                &zb
            }
        };
        for (x, y) in ka.values().iter().zip(kb.values()) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::random_instance;
    use crate::space::{expectation, Coordinate};

    fn fair_coins(n: usize) -> FiniteProductSpace {
        FiniteProductSpace::iid(Coordinate::rademacher(), n).unwrap()
    }

    fn ustat(space: &FiniteProductSpace, kernels: &[SubsetKernel], d: usize) -> DegenerateUStatistic {
        DegenerateUStatistic::new(space, decompose(space, kernels).unwrap(), d).unwrap()
    }

    #[test]
    fn disjoint_singletons_multiply_to_pair() {
        let s = fair_coins(2);
        let x1 = ustat(
            &s,
            &[SubsetKernel::new(&s, IndexSet::singleton(0), vec![-1.0, 1.0]).unwrap()],
            1,
        );
        let x2 = ustat(
            &s,
            &[SubsetKernel::new(&s, IndexSet::singleton(1), vec![-1.0, 1.0]).unwrap()],
            1,
        );
        let prod = hoeffding_product(&s, &x1, &x2, Budget::default()).unwrap();
        assert_eq!(prod.components.len(), 1);
        let u12 = prod.component(IndexSet::full(2)).unwrap();
        assert_eq!(u12.values(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn square_of_sign_product_is_constant_one() {
        let s = fair_coins(2);
        let w = ustat(
            &s,
            &[SubsetKernel::new(&s, IndexSet::full(2), vec![1.0, -1.0, -1.0, 1.0]).unwrap()],
            2,
        );
        let prod = hoeffding_product(&s, &w, &w, Budget::default()).unwrap();
        assert_eq!(prod.components.len(), 1);
        let c = prod.component(IndexSet::EMPTY).unwrap();
        assert!((c.values()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_identity_and_zero_edge_cases() {
        let s = fair_coins(2);
        let w = decompose(
            &s,
            &[SubsetKernel::new(&s, IndexSet::full(2), vec![1.0, -1.0, -1.0, 1.0]).unwrap()],
        )
        .unwrap();
        let zero = HoeffdingDecomposition::default();
        let prod = product_oracle(&s, &zero, &w, Budget::default()).unwrap();
        assert!(prod.components.is_empty());

        let one = decompose(&s, &[SubsetKernel::constant(1.0)]).unwrap();
        let prod = product_oracle(&s, &one, &w, Budget::default()).unwrap();
        assert!(max_component_deviation(&s, &prod, &w) < 1e-12);
    }

    #[test]
    fn product_formula_matches_oracle_on_random_instances() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        let b = Budget::default();
        for trial in 0..50 {
            let (space, u) = random_instance(&mut rng, 5, 2, 3);
            let (_, v) = {
                // second statistic over the same space
                let w = crate::generators::random_degenerate(&mut rng, &space, 2, 3)
                    .unwrap_or_else(|| u.clone());
                (0, w)
            };
            let fast = hoeffding_product(&space, &u, &v, b).unwrap();
            let oracle = product_oracle(&space, &u.decomposition(), &v.decomposition(), b).unwrap();
            let dev = max_component_deviation(&space, &fast, &oracle);
            assert!(dev < 1e-9, "trial {trial}: deviation {dev}");
        }
    }

    #[test]
    fn conditional_product_vanishes_when_sym_diff_escapes() {
        // E[W_J V_K | F_L] = 0 pointwise when JΔK ⊄ L.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(29);
        for _ in 0..20 {
            let (space, u) = random_instance(&mut rng, 4, 2, 3);
            let comps: Vec<_> = u.components().iter().collect();
            for (&j, kj) in &comps {
                for (&k, kk) in &comps {
                    let product = kernel_product(&space, kj, kk).unwrap();
                    let sym = j.sym_diff(k);
                    if sym.is_empty() {
                        continue;
                    }
                    // L misses one element of JΔK
                    let miss = sym.iter().next().unwrap();
                    let l = j.union(k).remove(miss);
                    let cond = conditional_expectation(&space, &product, l).unwrap();
                    for v in cond.values() {
                        assert!(v.abs() < 1e-10, "residual {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn conditional_product_reconstructs_from_double_sum() {
        // E[W_J V_K | F_{(J∪K)\{j}}] for j ∈ J∩K equals the double sum over
        // JΔK ⊆ M ⊆ (J∪K)\{j}, JΔK ⊆ L ⊆ M of signed conditionals.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        for _ in 0..20 {
            let (space, u) = random_instance(&mut rng, 4, 2, 2);
            let comps: Vec<_> = u.components().iter().collect();
            for (&j, kj) in &comps {
                for (&k, kk) in &comps {
                    let both = j.intersect(k);
                    if both.is_empty() {
                        continue;
                    }
                    let product = kernel_product(&space, kj, kk).unwrap();
                    let sym = j.sym_diff(k);
                    for drop in both.iter() {
                        let target_set = j.union(k).remove(drop);
                        let direct =
                            conditional_expectation(&space, &product, target_set).unwrap();
                        let len = space.table_len(target_set).unwrap();
                        let mut rebuilt =
                            SubsetKernel::new(&space, target_set, vec![0.0; len]).unwrap();
                        for extra_m in both.remove(drop).subsets() {
                            let m = sym.union(extra_m);
                            for extra_l in extra_m.subsets() {
                                let l = sym.union(extra_l);
                                let sign =
                                    if (m.len() - l.len()) % 2 == 0 { 1.0 } else { -1.0 };
                                let cond =
                                    conditional_expectation(&space, &product, l).unwrap();
                                add_scaled(&space, &mut rebuilt, &cond, sign).unwrap();
                            }
                        }
                        let direct_full = crate::space::embed(&space, &direct, target_set).unwrap();
                        for (a, b) in direct_full.values().iter().zip(rebuilt.values()) {
                            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reconstruction_of_product_pointwise() {
        let s = fair_coins(3);
        let w = ustat(
            &s,
            &[
                SubsetKernel::new(&s, IndexSet::from_indices(&[0, 1]), vec![0.4, -0.4, -0.4, 0.4])
                    .unwrap(),
                SubsetKernel::new(&s, IndexSet::from_indices(&[1, 2]), vec![0.7, -0.7, -0.7, 0.7])
                    .unwrap(),
            ],
            2,
        );
        let prod = hoeffding_product(&s, &w, &w, Budget::default()).unwrap();
        // Σ_M U_M must equal W² at every atom
        for bits in 0..8usize {
            let digits = [bits >> 2 & 1, bits >> 1 & 1, bits & 1];
            let direct = w.evaluate(&s, &digits).powi(2);
            let rebuilt = prod.evaluate(&s, &digits);
            assert!((direct - rebuilt).abs() < 1e-12);
        }
        // and E[U_∅] is E[W²]
        let var: f64 = expectation(&s, prod.component(IndexSet::EMPTY).unwrap());
        assert!((var - w.variance()).abs() < 1e-12);
    }
}
