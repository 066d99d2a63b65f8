//! Exact moment engine: fourth moments, cross moments and the structured
//! quadruple sums S₀, S₀(i,k), τ, τ_{i,k}.
//!
//! Quadruples of component subsets whose union contains a free index (an
//! element lying in exactly one of the four subsets) have vanishing joint
//! moment and are pruned before any expectation is computed. Enumeration
//! order is the ascending subset order of the component maps, so sums are
//! bitwise reproducible.

use crate::error::Result;
use crate::exec::run_blocks;
use crate::hoeffding::{DegenerateUStatistic, VectorModel};
use crate::sets::IndexSet;
use crate::space::{joint_moment, Budget, FiniteProductSpace, SubsetKernel};

/// Classification of a quadruple of subsets by element multiplicities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadrupleClass {
    /// Some element of the union lies in exactly one subset.
    FreeIndex,
    /// Every element of the union lies in exactly two subsets.
    Bifold,
    /// Multiplicity ≥ 2 everywhere and ≥ 3 somewhere.
    T,
    /// Unreachable by construction; kept to make the match exhaustive.
    Other,
}

/// Classifies `(J₁, J₂, J₃, J₄)` by the multiplicity profile of its union.
pub fn classify_quadruple(q: [IndexSet; 4]) -> QuadrupleClass {
    let union = q[0].union(q[1]).union(q[2]).union(q[3]);
    let mut all_two = true;
    let mut some_high = false;
    for i in union.iter() {
        let mult = q.iter().filter(|s| s.contains(i)).count();
        if mult == 1 {
            return QuadrupleClass::FreeIndex;
        }
        if mult != 2 {
            all_two = false;
        }
        if mult >= 3 {
            some_high = true;
        }
    }
    if all_two {
        QuadrupleClass::Bifold
    } else if some_high {
        QuadrupleClass::T
    } else {
        debug_assert!(false, "multiplicities >=2, not all 2, none >=3 is impossible");
        QuadrupleClass::Other
    }
}

fn has_free_index(q: [IndexSet; 4]) -> bool {
    let union = q[0].union(q[1]).union(q[2]).union(q[3]);
    union
        .iter()
        .any(|i| q.iter().filter(|s| s.contains(i)).count() == 1)
}

/// Exact `E\[W⁴\]`, summing joint moments over quadruples without a free
/// index. The outer index range is split into fixed blocks so the reduction
/// order is independent of `threads`.
pub fn fourth_moment_threaded(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    budget: Budget,
    threads: usize,
) -> Result<f64> {
    let comps: Vec<(&IndexSet, &SubsetKernel)> = u.components().iter().collect();
    let k = comps.len();
    let partials = run_blocks(k, 8, threads, |range| -> Result<f64> {
        let mut acc = 0.0;
        for a in range {
            let (ja, ka) = comps[a];
            for (jb, kb) in &comps {
                for (jc, kc) in &comps {
                    for (jd, kd) in &comps {
                        let quad = [*ja, **jb, **jc, **jd];
                        if has_free_index(quad) {
                            continue;
                        }
                        acc += joint_moment(space, &[ka, kb, kc, kd], budget)?;
                    }
                }
            }
        }
        Ok(acc)
    });
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total)
}

pub fn fourth_moment(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    budget: Budget,
) -> Result<f64> {
    fourth_moment_threaded(space, u, budget, 1)
}

/// S₀ = Σ E[W_J W_K W_L W_M] over quadruples with J∩K = L∩M = ∅,
/// ∅ ⊊ J∩L ⊊ J and ∅ ⊊ J∩M ⊊ J.
pub fn s0(space: &FiniteProductSpace, u: &DegenerateUStatistic, budget: Budget) -> Result<f64> {
    let comps: Vec<(&IndexSet, &SubsetKernel)> = u.components().iter().collect();
    let mut acc = 0.0;
    for (j, kj) in &comps {
        for (k, kk) in &comps {
            if !j.intersect(**k).is_empty() {
                continue;
            }
            for (l, kl) in &comps {
                let jl = j.intersect(**l);
                if jl.is_empty() || jl == **j {
                    continue;
                }
                for (m, km) in &comps {
                    if !l.intersect(**m).is_empty() {
                        continue;
                    }
                    let jm = j.intersect(**m);
                    if jm.is_empty() || jm == **j {
                        continue;
                    }
                    acc += joint_moment(space, &[kj, kk, kl, km], budget)?;
                }
            }
        }
    }
    Ok(acc)
}

/// τ = Σ σ_J σ_K σ_L σ_M over the class T (no expectation needed).
pub fn tau(u: &DegenerateUStatistic) -> f64 {
    let sig: Vec<(IndexSet, f64)> =
        u.sigma2().iter().map(|(&j, &v)| (j, v.max(0.0).sqrt())).collect();
    let mut acc = 0.0;
    for &(j, sj) in &sig {
        for &(k, sk) in &sig {
            for &(l, sl) in &sig {
                for &(m, sm) in &sig {
                    if classify_quadruple([j, k, l, m]) == QuadrupleClass::T {
                        acc += sj * sk * sl * sm;
                    }
                }
            }
        }
    }
    acc
}

/// Cross-moment bundle for a component pair of a vector model.
#[derive(Debug, Clone, Copy)]
pub struct CrossMoments {
    /// E\[W(i)² W(k)²\]
    pub e_w2w2: f64,
    /// v_{ik} = E\[W(i) W(k)\]; zero when the orders differ.
    pub v_ik: f64,
    pub s0_ik: f64,
    pub tau_ik: f64,
}

/// Exact cross moments for components `i ≤ k` (0-based) of a vector model.
pub fn cross_moments(
    space: &FiniteProductSpace,
    v: &VectorModel,
    i: usize,
    k: usize,
    budget: Budget,
) -> Result<CrossMoments> {
    assert!(i <= k, "cross_moments requires i <= k");
    let ui = v.component(i);
    let uk = v.component(k);
    let ci: Vec<(&IndexSet, &SubsetKernel)> = ui.components().iter().collect();
    let ck: Vec<(&IndexSet, &SubsetKernel)> = uk.components().iter().collect();

    // E[W(i)² W(k)²]: quadruples (J, K, L, M) with J, L from component i and
    // K, M from component k, free-index pruned.
    let mut e_w2w2 = 0.0;
    for (j, kj) in &ci {
        for (kk_set, kk) in &ck {
            for (l, kl) in &ci {
                for (m, km) in &ck {
                    let quad = [**j, **kk_set, **l, **m];
                    if has_free_index(quad) {
                        continue;
                    }
                    e_w2w2 += joint_moment(space, &[kj, kk, kl, km], budget)?;
                }
            }
        }
    }

    // v_{ik}: block-diagonal; E[W_J(i) W_K(k)] vanishes unless J = K.
    let mut v_ik = 0.0;
    if ui.order() == uk.order() {
        for (j, kj) in &ci {
            if let Some(kk) = uk.components().get(j) {
                v_ik += joint_moment(space, &[kj, kk], budget)?;
            }
        }
    }

    // S₀(i,k): J, L of order p_i and K, M of order p_k with
    // J∩K = L∩M = ∅, ∅ ⊊ J∩L = J\(J∩M) ⊊ J, ∅ ⊊ L∩J = L\(L∩K) ⊊ L.
    let mut s0_ik = 0.0;
    for (j, kj) in &ci {
        for (kset, kk) in &ck {
            if !j.intersect(**kset).is_empty() {
                continue;
            }
            for (l, kl) in &ci {
                let jl = j.intersect(**l);
                if jl.is_empty() || jl == **j || jl == **l {
                    continue;
                }
                if jl != l.minus(l.intersect(**kset)) {
                    continue;
                }
                for (m, km) in &ck {
                    if !l.intersect(**m).is_empty() {
                        continue;
                    }
                    if jl != j.minus(j.intersect(**m)) {
                        continue;
                    }
                    s0_ik += joint_moment(space, &[kj, kk, kl, km], budget)?;
                }
            }
        }
    }

    // τ_{i,k} over the mixed T class.
    let si: Vec<(IndexSet, f64)> =
        ui.sigma2().iter().map(|(&j, &s)| (j, s.max(0.0).sqrt())).collect();
    let sk: Vec<(IndexSet, f64)> =
        uk.sigma2().iter().map(|(&j, &s)| (j, s.max(0.0).sqrt())).collect();
    let mut tau_ik = 0.0;
    for &(j, sj) in &si {
        for &(kset, skk) in &sk {
            for &(l, sl) in &si {
                for &(m, sm) in &sk {
                    if classify_quadruple([j, kset, l, m]) == QuadrupleClass::T {
                        tau_ik += sj * skk * sl * sm;
                    }
                }
            }
        }
    }

    Ok(CrossMoments { e_w2w2, v_ik, s0_ik, tau_ik })
}

/// Σ_{J∩K≠∅} σ_J(i)² σ_K(k)², the overlap mass bounded by
/// min(p_i ρ_{n,k}², p_k ρ_{n,i}²).
pub fn sigma_overlap(v: &VectorModel, i: usize, k: usize) -> f64 {
    let mut acc = 0.0;
    for (j, &sj) in v.component(i).sigma2() {
        for (l, &sl) in v.component(k).sigma2() {
            if !j.intersect(*l).is_empty() {
                acc += sj * sl;
            }
        }
    }
    acc
}

/// Brute-force `E\[W⁴\]` over all atoms of the full space. Test oracle; errors
/// if the full atom count exceeds the budget.
pub fn fourth_moment_brute(
    space: &FiniteProductSpace,
    u: &DegenerateUStatistic,
    budget: Budget,
) -> Result<f64> {
    let full = space.full_set();
    let len = space.table_len(full)?;
    if (len as u128) > budget.0 as u128 {
        return Err(crate::error::Error::Budget { required: len as u128, budget: budget.0 });
    }
    let coords: Vec<usize> = full.iter().collect();
    let mut it = crate::space::AtomIter::new(space, &coords);
    let mut acc = 0.0;
    while it.advance() {
        let w = u.evaluate(space, it.digits());
        acc += crate::space::atom_prob(space, &coords, it.digits()) * w.powi(4);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hoeffding::{decompose, DegenerateUStatistic};
    use crate::space::Coordinate;

    fn fair_coins(n: usize) -> FiniteProductSpace {
        FiniteProductSpace::iid(Coordinate::rademacher(), n).unwrap()
    }

    fn pair_kernel(space: &FiniteProductSpace, i: usize, j: usize, a: f64) -> SubsetKernel {
        SubsetKernel::new(space, IndexSet::from_indices(&[i, j]), vec![a, -a, -a, a]).unwrap()
    }

    fn ustat(space: &FiniteProductSpace, kernels: &[SubsetKernel], d: usize) -> DegenerateUStatistic {
        DegenerateUStatistic::new(space, decompose(space, kernels).unwrap(), d).unwrap()
    }

    #[test]
    fn classify_examples() {
        let s = |v: &[usize]| IndexSet::from_one_based(v).unwrap();
        assert_eq!(
            classify_quadruple([s(&[1, 2]), s(&[3, 4]), s(&[1, 3]), s(&[2, 4])]),
            QuadrupleClass::Bifold
        );
        assert_eq!(
            classify_quadruple([s(&[1, 2]), s(&[1, 2]), s(&[1, 2]), s(&[1, 3])]),
            QuadrupleClass::FreeIndex
        );
        assert_eq!(
            classify_quadruple([s(&[1, 2]), s(&[1, 2]), s(&[1, 2]), s(&[1, 2])]),
            QuadrupleClass::T
        );
    }

    #[test]
    fn fourth_moment_examples() {
        let b = Budget::default();
        let s2 = fair_coins(2);
        let u = ustat(&s2, &[pair_kernel(&s2, 0, 1, 1.0)], 2);
        assert!((fourth_moment(&s2, &u, b).unwrap() - 1.0).abs() < 1e-12);

        let s4 = fair_coins(4);
        let a = 0.5f64.sqrt();
        let u = ustat(&s4, &[pair_kernel(&s4, 0, 1, a), pair_kernel(&s4, 2, 3, a)], 2);
        let m4 = fourth_moment(&s4, &u, b).unwrap();
        assert!((m4 - 2.0).abs() < 1e-12);
        assert!((m4 - fourth_moment_brute(&s4, &u, b).unwrap()).abs() < 1e-12);

        // W = Σ x_j / √n at n = 4: E[W⁴] = 3 − 2/n = 2.5
        let lin: Vec<SubsetKernel> = (0..4)
            .map(|j| SubsetKernel::new(&s4, IndexSet::singleton(j), vec![-0.5, 0.5]).unwrap())
            .collect();
        let u = ustat(&s4, &lin, 1);
        let m4 = fourth_moment(&s4, &u, b).unwrap();
        assert!((m4 - 2.5).abs() < 1e-12);
        assert!((m4 - fourth_moment_brute(&s4, &u, b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn s0_and_tau_examples() {
        let b = Budget::default();
        let s2 = fair_coins(2);
        let u = ustat(&s2, &[pair_kernel(&s2, 0, 1, 1.0)], 2);
        assert!(s0(&s2, &u, b).unwrap().abs() < 1e-12);
        assert!((tau(&u) - 1.0).abs() < 1e-12);

        let s4 = fair_coins(4);
        let a = 0.5f64.sqrt();
        let u = ustat(&s4, &[pair_kernel(&s4, 0, 1, a), pair_kernel(&s4, 2, 3, a)], 2);
        assert!(s0(&s4, &u, b).unwrap().abs() < 1e-12);
        assert!((tau(&u) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn free_index_quadruples_vanish() {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let s5 = fair_coins(5);
        // random order-2 statistic on 5 coins
        let kernels: Vec<SubsetKernel> = [(0usize, 1usize), (1, 2), (2, 3), (3, 4), (0, 4)]
            .iter()
            .map(|&(i, j)| pair_kernel(&s5, i, j, rng.gen_range(0.2..1.0)))
            .collect();
        let u = ustat(&s5, &kernels, 2);
        let comps: Vec<(&IndexSet, &SubsetKernel)> = u.components().iter().collect();
        let mut checked = 0;
        while checked < 100 {
            let pick: Vec<&(&IndexSet, &SubsetKernel)> =
                (0..4).map(|_| comps.choose(&mut rng).unwrap()).collect();
            let quad = [*pick[0].0, *pick[1].0, *pick[2].0, *pick[3].0];
            if classify_quadruple(quad) != QuadrupleClass::FreeIndex {
                continue;
            }
            let m = joint_moment(
                &s5,
                &[pick[0].1, pick[1].1, pick[2].1, pick[3].1],
                Budget::default(),
            )
            .unwrap();
            assert!(m.abs() < 1e-10, "free-index quadruple gave {m}");
            checked += 1;
        }
    }

    #[test]
    fn cross_moment_examples() {
        let b = Budget::default();
        let s2 = fair_coins(2);
        let x1 = SubsetKernel::new(&s2, IndexSet::singleton(0), vec![-1.0, 1.0]).unwrap();
        let w1 = ustat(&s2, &[x1], 1);
        let w2 = ustat(&s2, &[pair_kernel(&s2, 0, 1, 1.0)], 2);
        let v = VectorModel::new(vec![w1, w2.clone()]).unwrap();
        let cm = cross_moments(&s2, &v, 0, 1, b).unwrap();
        assert_eq!(cm.v_ik, 0.0);

        let v2 = VectorModel::new(vec![w2.clone(), w2]).unwrap();
        let cm = cross_moments(&s2, &v2, 0, 1, b).unwrap();
        assert!((cm.e_w2w2 - 1.0).abs() < 1e-12);
        assert!((cm.v_ik - 1.0).abs() < 1e-12);

        let s4 = fair_coins(4);
        let wa = ustat(&s4, &[pair_kernel(&s4, 0, 1, 1.0)], 2);
        let wb = ustat(&s4, &[pair_kernel(&s4, 2, 3, 1.0)], 2);
        let v3 = VectorModel::new(vec![wa, wb]).unwrap();
        let cm = cross_moments(&s4, &v3, 0, 1, b).unwrap();
        assert!(cm.s0_ik.abs() < 1e-12);
        assert!(cm.tau_ik.abs() < 1e-12);
    }

    #[test]
    fn fourth_moment_matches_brute_force_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(19);
        let b = Budget::default();
        for _ in 0..10 {
            let n = rng.gen_range(3..=5);
            let s = fair_coins(n);
            let mut kernels = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.6) {
                        kernels.push(pair_kernel(&s, i, j, rng.gen_range(-1.0..1.0f64)));
                    }
                }
            }
            kernels.push(pair_kernel(&s, 0, 1, 1.0));
            let u = ustat(&s, &kernels, 2);
            let fast = fourth_moment(&s, &u, b).unwrap();
            let brute = fourth_moment_brute(&s, &u, b).unwrap();
            assert!((fast - brute).abs() < 1e-9, "{fast} vs {brute}");
        }
    }

    #[test]
    fn threaded_fourth_moment_is_bitwise_stable() {
        let s4 = fair_coins(4);
        let a = 0.5f64.sqrt();
        let u = ustat(&s4, &[pair_kernel(&s4, 0, 1, a), pair_kernel(&s4, 2, 3, a)], 2);
        let one = fourth_moment_threaded(&s4, &u, Budget::default(), 1).unwrap();
        let four = fourth_moment_threaded(&s4, &u, Budget::default(), 4).unwrap();
        assert_eq!(one.to_bits(), four.to_bits());
    }
}
