//! Shadow classes of subset quadruples, stabilizers, and the combinatorial
//! constant C_d.
//!
//! A `d`-shadow is a quadruple `(F₁,F₂,F₃,F₄)` of `d`-subsets with union
//! `[r]`, `d ≤ r ≤ 2d−1`, induced by a T-quadruple: every element of the
//! union has multiplicity ≥ 2 and some element has multiplicity ≥ 3.
//! Two shadows are equivalent when related by a relabeling of `[r]`.
//!
//! Relabeling classes are in bijection with "type count" vectors: each
//! element of `[r]` has a type, the set of the ≥ 2 positions containing it,
//! and the multiset of types determines the class. The stabilizer of a class
//! is the group permuting elements within equal types, of size Π_S c_S!.
//!
//! For counting, classes related by the pair-of-pairs position symmetry
//! (swapping the factor pairs `(F₁,F₂) ↔ (F₃,F₄)`, or swapping inside both
//! pairs at once) are additionally identified; quadruples enter the moment
//! sums as pairs of pairs, and the published constants count classes this
//! way: `C_d = d!(d−1)! Σ_j γ(F_j)^{-1}` over the identified classes gives
//! C₁ = 1 and C₂ = 13.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sets::IndexSet;

/// Orders above this are rejected; enumeration cost grows combinatorially.
pub const MAX_ORDER: usize = 5;

/// All position types: subsets of {0,1,2,3} of size ≥ 2, ascending by mask.
const TYPE_MASKS: [u8; 11] = [3, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15];

/// One equivalence class of shadows.
#[derive(Debug, Clone)]
pub struct ShadowClass {
    /// Canonical representative (lexicographically minimal over relabelings
    /// for r ≤ 8; type-ordered construction beyond that).
    pub sets: [IndexSet; 4],
    /// Size r of the union.
    pub size: usize,
    /// Stabilizer size γ: permutations of \[r\] fixing all four sets.
    pub stabilizer: u64,
    /// r!/γ, the number of distinct relabelings of the representative.
    pub orbit_size: u64,
    /// Number of plain relabeling classes identified into this one by the
    /// pair-of-pairs symmetry (1, 2 or 4).
    pub merged: usize,
    /// Canonical type-count key (counts per entry of the fixed type table,
    /// minimized over the position symmetry group).
    pub key: [u32; 11],
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

fn apply_to_type(perm: &[usize; 4], mask: u8) -> u8 {
    let mut out = 0u8;
    for l in 0..4 {
        if mask >> l & 1 == 1 {
            out |= 1 << perm[l];
        }
    }
    out
}

fn type_index(mask: u8) -> usize {
    TYPE_MASKS.iter().position(|&m| m == mask).expect("valid type mask")
}

/// Position symmetry group for size pattern (p, q, p, q).
fn position_group(p: usize, q: usize) -> Vec<[usize; 4]> {
    let id = [0, 1, 2, 3];
    let swap_pairs = [2, 3, 0, 1]; // (F1,F2,F3,F4) -> (F3,F4,F1,F2)
    let swap_within = [1, 0, 3, 2]; // -> (F2,F1,F4,F3)
    let swap_both = [3, 2, 1, 0];
    if p == q {
        vec![id, swap_within, swap_pairs, swap_both]
    } else {
        vec![id, swap_pairs]
    }
}

fn transform_counts(counts: &[u32; 11], perm: &[usize; 4]) -> [u32; 11] {
    let mut out = [0u32; 11];
    for (i, &mask) in TYPE_MASKS.iter().enumerate() {
        out[type_index(apply_to_type(perm, mask))] = counts[i];
    }
    out
}

fn canonical_key(counts: &[u32; 11], group: &[[usize; 4]]) -> ([u32; 11], usize) {
    let mut orbit: Vec<[u32; 11]> = group.iter().map(|g| transform_counts(counts, g)).collect();
    orbit.sort_unstable();
    orbit.dedup();
    (orbit[0], orbit.len())
}

/// Enumerates all type-count solutions for the size pattern (p, q, p, q).
fn enumerate_counts(p: usize, q: usize) -> Vec<[u32; 11]> {
    let sizes = [p as i32, q as i32, p as i32, q as i32];
    let mut out = Vec::new();
    let mut counts = [0u32; 11];
    fn recurse(
        t: usize,
        remaining: [i32; 4],
        counts: &mut [u32; 11],
        out: &mut Vec<[u32; 11]>,
    ) {
        if t == TYPE_MASKS.len() {
            if remaining == [0, 0, 0, 0] {
                // T condition: some element with multiplicity >= 3
                let high: u32 = TYPE_MASKS
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.count_ones() >= 3)
                    .map(|(i, _)| counts[i])
                    .sum();
                if high >= 1 {
                    out.push(*counts);
                }
            }
            return;
        }
        let mask = TYPE_MASKS[t];
        let cap = (0..4)
            .filter(|l| mask >> l & 1 == 1)
            .map(|l| remaining[l])
            .min()
            .unwrap_or(0)
            .max(0);
        for c in 0..=cap {
            let mut rem = remaining;
            for (l, r) in rem.iter_mut().enumerate() {
                if mask >> l & 1 == 1 {
                    *r -= c;
                }
            }
            counts[t] = c as u32;
            recurse(t + 1, rem, counts, out);
        }
        counts[t] = 0;
    }
    recurse(0, sizes, &mut counts, &mut out);
    out
}

/// Builds the type-ordered representative quadruple of a count vector.
fn build_quadruple(counts: &[u32; 11]) -> ([IndexSet; 4], usize) {
    let mut sets = [IndexSet::EMPTY; 4];
    let mut e = 0usize;
    for (i, &mask) in TYPE_MASKS.iter().enumerate() {
        for _ in 0..counts[i] {
            for l in 0..4 {
                if mask >> l & 1 == 1 {
                    sets[l] = sets[l].insert(e);
                }
            }
            e += 1;
        }
    }
    (sets, e)
}

fn all_permutations(r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(factorial(r) as usize);
    let mut items: Vec<usize> = (0..r).collect();
    fn heap(k: usize, items: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            out.push(items.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, items, out);
            if k % 2 == 0 {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
        }
    }
    if r == 0 {
        out.push(Vec::new());
    } else {
        heap(r, &mut items, &mut out);
    }
    out
}

fn relabel(sets: &[IndexSet; 4], perm: &[usize]) -> [IndexSet; 4] {
    let mut out = [IndexSet::EMPTY; 4];
    for l in 0..4 {
        let mut m = IndexSet::EMPTY;
        for e in sets[l].iter() {
            m = m.insert(perm[e]);
        }
        out[l] = m;
    }
    out
}

fn quad_key(sets: &[IndexSet; 4]) -> [u64; 4] {
    [sets[0].mask(), sets[1].mask(), sets[2].mask(), sets[3].mask()]
}

/// Shared implementation for plain and mixed enumeration.
fn enumerate_classes(p: usize, q: usize) -> Result<Vec<ShadowClass>> {
    if p == 0 || q == 0 {
        return Err(Error::Contract("orders must be at least 1".into()));
    }
    if p.max(q) > MAX_ORDER {
        return Err(Error::Capability(format!(
            "shadow enumeration capped at order {MAX_ORDER}, got {}",
            p.max(q)
        )));
    }
    let group = position_group(p, q);
    let mut by_key: BTreeMap<[u32; 11], ([u32; 11], usize)> = BTreeMap::new();
    for counts in enumerate_counts(p, q) {
        let (key, merged) = canonical_key(&counts, &group);
        by_key.entry(key).or_insert((key, merged));
    }

    let mut perm_cache: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
    let mut classes = Vec::new();
    for (key, (counts, merged)) in by_key {
        let (raw_sets, r) = build_quadruple(&counts);
        // γ: permutations preserving every set = permutations within equal
        // types, of size Π c_S!. Verified against brute force where r! is
        // small enough to enumerate.
        let gamma_formula: u64 = counts.iter().map(|&c| factorial(c as usize)).product();
        let (sets, stabilizer) = if r <= 8 {
            let perms = perm_cache.entry(r).or_insert_with(|| all_permutations(r));
            let mut best = quad_key(&raw_sets);
            let mut best_sets = raw_sets;
            let mut fixed = 0u64;
            for perm in perms.iter() {
                let mapped = relabel(&raw_sets, perm);
                let k = quad_key(&mapped);
                if k == quad_key(&raw_sets) {
                    fixed += 1;
                }
                if k < best {
                    best = k;
                    best_sets = mapped;
                }
            }
            assert_eq!(fixed, gamma_formula, "stabilizer brute force disagrees with formula");
            (best_sets, fixed)
        } else {
            (raw_sets, gamma_formula)
        };
        classes.push(ShadowClass {
            sets,
            size: r,
            stabilizer,
            orbit_size: factorial(r) / stabilizer,
            merged,
            key,
        });
    }
    classes.sort_by_key(|c| (c.size, quad_key(&c.sets)));
    Ok(classes)
}

/// A complete system of pairwise non-equivalent `d`-shadows induced by
/// T-quadruples, identified under relabelings and the pair-of-pairs
/// position symmetry.
pub fn enumerate_shadow_classes(d: usize) -> Result<Vec<ShadowClass>> {
    enumerate_classes(d, d)
}

/// Mixed `(p,q)`-shadows with `|F₁| = |F₃| = p`, `|F₂| = |F₄| = q`;
/// diagnostics for the mixed-order T classes.
pub fn enumerate_mixed_shadow_classes(p: usize, q: usize) -> Result<Vec<ShadowClass>> {
    enumerate_classes(p, q)
}

/// `C_d = d!(d−1)! Σ_j γ(F_j)^{-1}` over the shadow classes.
pub fn compute_cd(d: usize) -> Result<f64> {
    let classes = enumerate_shadow_classes(d)?;
    let sum: f64 = classes.iter().map(|c| 1.0 / c.stabilizer as f64).sum();
    Ok((factorial(d) * factorial(d - 1)) as f64 * sum)
}

/// κ_d = C_d + 2d.
pub fn kappa(d: usize) -> Result<f64> {
    Ok(compute_cd(d)? + 2.0 * d as f64)
}

/// Type-count vector of an arbitrary quadruple over `[n]` (positions of each
/// union element), or `None` if it is not a T-quadruple.
pub fn t_quadruple_counts(quad: [IndexSet; 4]) -> Option<[u32; 11]> {
    let union = quad[0].union(quad[1]).union(quad[2]).union(quad[3]);
    let mut counts = [0u32; 11];
    let mut some_high = false;
    for e in union.iter() {
        let mut mask = 0u8;
        for (l, s) in quad.iter().enumerate() {
            if s.contains(e) {
                mask |= 1 << l;
            }
        }
        if mask.count_ones() < 2 {
            return None; // free index
        }
        if mask.count_ones() >= 3 {
            some_high = true;
        }
        counts[type_index(mask)] += 1;
    }
    if !some_high {
        return None; // bifold
    }
    Some(counts)
}

/// Index of the class (within `classes` as returned by the enumerators)
/// whose orbit contains the shadow of `quad`, if any.
pub fn shadow_class_index(classes: &[ShadowClass], quad: [IndexSet; 4]) -> Option<usize> {
    let counts = t_quadruple_counts(quad)?;
    let sizes = (quad[0].len(), quad[1].len());
    let group = position_group(sizes.0, sizes.1);
    let (key, _) = canonical_key(&counts, &group);
    classes.iter().position(|c| c.key == key)
}
