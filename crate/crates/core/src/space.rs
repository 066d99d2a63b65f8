//! Finite product probability spaces and exact expectation machinery over
//! subset kernels.
//!
//! A space holds `n` independent discrete coordinates, each with a finite
//! support and strictly positive probability weights. A [`SubsetKernel`] is a
//! real function of the coordinates in a subset `J`, stored as a dense table.
//! Everything here is a pure function of immutable inputs; all expectations
//! are exact sums over atoms (up to f64 rounding).

use crate::error::{Error, Result};
use crate::sets::IndexSet;

/// Default cap on the number of joint atoms any single enumeration may visit.
pub const DEFAULT_BUDGET: u64 = 1 << 24;

/// Cap on joint atoms per enumeration call. Exceeding it is a hard error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget(pub u64);

impl Default for Budget {
    fn default() -> Self {
        Budget(DEFAULT_BUDGET)
    }
}

/// One discrete coordinate: atom values and their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl Coordinate {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Model("coordinate support is empty".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::Model(format!(
                "support length {} != probs length {}",
                support.len(),
                probs.len()
            )));
        }
        if support.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("non-finite atom value".into()));
        }
        for (i, a) in support.iter().enumerate() {
            for b in &support[i + 1..] {
                if a == b {
                    return Err(Error::Model(format!("duplicate atom value {a}")));
                }
            }
        }
        if !probs.iter().all(|&p| p > 0.0 && p.is_finite()) {
            return Err(Error::Model("probabilities must be strictly positive".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Coordinate { support, probs })
    }

    /// Fair ±1 coin.
    pub fn rademacher() -> Self {
        Coordinate { support: vec![-1.0, 1.0], probs: vec![0.5, 0.5] }
    }

    pub fn arity(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    pub fn moment(&self, k: u32) -> f64 {
        self.support.iter().zip(&self.probs).map(|(v, p)| v.powi(k as i32) * p).sum()
    }
}

/// `n` independent discrete coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteProductSpace {
    coords: Vec<Coordinate>,
}

impl FiniteProductSpace {
    pub fn new(coords: Vec<Coordinate>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Model("space needs at least one coordinate".into()));
        }
        if coords.len() > 64 {
            return Err(Error::Model(format!("{} coordinates exceed the 64 supported", coords.len())));
        }
        Ok(FiniteProductSpace { coords })
    }

    /// `n` i.i.d. copies of one coordinate law.
    pub fn iid(law: Coordinate, n: usize) -> Result<Self> {
        FiniteProductSpace::new(vec![law; n])
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coord(&self, j: usize) -> &Coordinate {
        &self.coords[j]
    }

    pub fn coords(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn full_set(&self) -> IndexSet {
        IndexSet::full(self.n())
    }

    fn check_subset(&self, subset: IndexSet) -> Result<()> {
        if !subset.is_subset_of(self.full_set()) {
            return Err(Error::Model(format!(
                "subset {subset} exceeds coordinate range [1,{}]",
                self.n()
            )));
        }
        Ok(())
    }

    /// Number of atoms of the marginal space on `subset`.
    pub fn table_len(&self, subset: IndexSet) -> Result<usize> {
        self.check_subset(subset)?;
        let mut len = 1usize;
        for j in subset.iter() {
            len = len
                .checked_mul(self.coords[j].arity())
                .ok_or(Error::Budget { required: u128::MAX, budget: u64::MAX })?;
        }
        Ok(len)
    }

    fn table_len_guarded(&self, subset: IndexSet, budget: Budget) -> Result<usize> {
        self.check_subset(subset)?;
        let mut len = 1u128;
        for j in subset.iter() {
            len *= self.coords[j].arity() as u128;
        }
        if len > budget.0 as u128 {
            return Err(Error::Budget { required: len, budget: budget.0 });
        }
        Ok(len as usize)
    }
}

/// A real-valued function of the coordinates in `subset`, as a dense table.
///
/// The table is row-major in ascending subset order: the smallest coordinate
/// index varies slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetKernel {
    subset: IndexSet,
    values: Vec<f64>,
}

impl SubsetKernel {
    pub fn new(space: &FiniteProductSpace, subset: IndexSet, values: Vec<f64>) -> Result<Self> {
        let expect = space.table_len(subset)?;
        if values.len() != expect {
            return Err(Error::Model(format!(
                "kernel on {subset} needs {expect} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("non-finite kernel value".into()));
        }
        Ok(SubsetKernel { subset, values })
    }

    /// The constant kernel on the empty subset.
    pub fn constant(c: f64) -> Self {
        SubsetKernel { subset: IndexSet::EMPTY, values: vec![c] }
    }

    pub fn subset(&self) -> IndexSet {
        self.subset
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self, c: f64) -> Self {
        SubsetKernel { subset: self.subset, values: self.values.iter().map(|v| v * c).collect() }
    }

    /// Value at a full-space atom given by per-coordinate digit indices.
    pub fn eval_digits(&self, space: &FiniteProductSpace, digits: &[usize]) -> f64 {
        let mut idx = 0usize;
        for j in self.subset.iter() {
            idx = idx * space.coord(j).arity() + digits[j];
        }
        self.values[idx]
    }
}

/// Strides of a kernel's table relative to an enclosing coordinate list,
/// for fast index computation inside atom loops.
pub(crate) fn strides_in(
    space: &FiniteProductSpace,
    kernel_subset: IndexSet,
    enclosing: &[usize],
) -> Vec<usize> {
    // stride of 0 for coordinates the kernel does not depend on
    let mut strides = vec![0usize; enclosing.len()];
    let mut stride = 1usize;
    for j in kernel_subset.iter().collect::<Vec<_>>().into_iter().rev() {
        let pos = enclosing.iter().position(|&c| c == j).expect("kernel subset within enclosing");
        strides[pos] = stride;
        stride *= space.coord(j).arity();
    }
    strides
}

/// Odometer over the product of supports of the listed coordinates.
/// `digits` runs row-major (last coordinate fastest).
pub struct AtomIter {
    dims: Vec<usize>,
    digits: Vec<usize>,
    started: bool,
}

impl AtomIter {
    pub fn new(space: &FiniteProductSpace, coords: &[usize]) -> Self {
        AtomIter {
            dims: coords.iter().map(|&j| space.coord(j).arity()).collect(),
            digits: vec![0; coords.len()],
            started: false,
        }
    }

    /// Advances to the next atom; returns `false` once exhausted.
    pub fn advance(&mut self) -> bool {
        if !self.started {
            self.started = true;
            return true;
        }
        for pos in (0..self.digits.len()).rev() {
            self.digits[pos] += 1;
            if self.digits[pos] < self.dims[pos] {
                return true;
            }
            self.digits[pos] = 0;
        }
        false
    }

    pub fn digits(&self) -> &[usize] {
        &self.digits
    }
}

/// Probability of the atom with the given digits on the listed coordinates.
pub fn atom_prob(space: &FiniteProductSpace, coords: &[usize], digits: &[usize]) -> f64 {
    coords.iter().zip(digits).map(|(&j, &d)| space.coord(j).probs()[d]).product()
}

/// Exact `E\[f_J(X_J)\]` under the product measure.
pub fn expectation(space: &FiniteProductSpace, kernel: &SubsetKernel) -> f64 {
    let coords: Vec<usize> = kernel.subset.iter().collect();
    let mut it = AtomIter::new(space, &coords);
    let mut idx = 0usize;
    let mut acc = 0.0;
    while it.advance() {
        acc += atom_prob(space, &coords, it.digits()) * kernel.values[idx];
        idx += 1;
    }
    acc
}

/// Exact `E\[f_J(X_J) | F_L\]`: integrates out the coordinates in `J \ L` with
/// their marginal weights. Conditioning on coordinates outside `J` is a no-op
/// by independence, so the result lives on `J ∩ L`.
pub fn conditional_expectation(
    space: &FiniteProductSpace,
    kernel: &SubsetKernel,
    condition: IndexSet,
) -> Result<SubsetKernel> {
    space.check_subset(condition)?;
    let keep = kernel.subset.intersect(condition);
    let coords: Vec<usize> = kernel.subset.iter().collect();
    let keep_len = space.table_len(keep)?;
    let mut out = vec![0.0; keep_len];

    let keep_list: Vec<usize> = keep.iter().collect();
    let keep_strides = strides_in(space, keep, &keep_list);
    // position of each kept coordinate inside the kernel's coordinate list
    let keep_pos: Vec<usize> = keep_list
        .iter()
        .map(|&j| coords.iter().position(|&c| c == j).unwrap())
        .collect();

    let mut it = AtomIter::new(space, &coords);
    let mut idx = 0usize;
    while it.advance() {
        let digits = it.digits();
        let mut weight = 1.0;
        for (pos, &j) in coords.iter().enumerate() {
            if !keep.contains(j) {
                weight *= space.coord(j).probs()[digits[pos]];
            }
        }
        let mut out_idx = 0usize;
        for (s, &p) in keep_strides.iter().zip(&keep_pos) {
            out_idx += s * digits[p];
        }
        out[out_idx] += weight * kernel.values[idx];
        idx += 1;
    }
    Ok(SubsetKernel { subset: keep, values: out })
}

/// Exact `E\[∏_i f_{J_i}(X_{J_i})\]`, enumerating only the union of the
/// subsets. Errors if the union's atom count exceeds `budget`.
pub fn joint_moment(
    space: &FiniteProductSpace,
    kernels: &[&SubsetKernel],
    budget: Budget,
) -> Result<f64> {
    if kernels.is_empty() {
        return Err(Error::Contract("joint_moment needs at least one kernel".into()));
    }
    let union = kernels.iter().fold(IndexSet::EMPTY, |acc, k| acc.union(k.subset));
    space.table_len_guarded(union, budget)?;
    let coords: Vec<usize> = union.iter().collect();
    let strides: Vec<Vec<usize>> =
        kernels.iter().map(|k| strides_in(space, k.subset, &coords)).collect();

    let mut acc = 0.0;
    let mut it = AtomIter::new(space, &coords);
    while it.advance() {
        let digits = it.digits();
        let mut term = atom_prob(space, &coords, digits);
        for (k, st) in kernels.iter().zip(&strides) {
            let mut idx = 0usize;
            for (s, d) in st.iter().zip(digits) {
                idx += s * d;
            }
            term *= k.values[idx];
        }
        acc += term;
    }
    Ok(acc)
}

/// Re-expresses `kernel` as a kernel on `superset ⊇ kernel.subset`.
pub fn embed(
    space: &FiniteProductSpace,
    kernel: &SubsetKernel,
    superset: IndexSet,
) -> Result<SubsetKernel> {
    if !kernel.subset.is_subset_of(superset) {
        return Err(Error::Contract(format!(
            "cannot embed kernel on {} into {superset}",
            kernel.subset
        )));
    }
    let coords: Vec<usize> = superset.iter().collect();
    let strides = strides_in(space, kernel.subset, &coords);
    let len = space.table_len(superset)?;
    let mut out = Vec::with_capacity(len);
    let mut it = AtomIter::new(space, &coords);
    while it.advance() {
        let mut idx = 0usize;
        for (s, d) in strides.iter().zip(it.digits()) {
            idx += s * d;
        }
        out.push(kernel.values[idx]);
    }
    Ok(SubsetKernel { subset: superset, values: out })
}

/// Pointwise product of two kernels, as a kernel on the union of their
/// subsets.
pub fn kernel_product(
    space: &FiniteProductSpace,
    a: &SubsetKernel,
    b: &SubsetKernel,
) -> Result<SubsetKernel> {
    let union = a.subset.union(b.subset);
    let coords: Vec<usize> = union.iter().collect();
    let sa = strides_in(space, a.subset, &coords);
    let sb = strides_in(space, b.subset, &coords);
    let len = space.table_len(union)?;
    let mut out = Vec::with_capacity(len);
    let mut it = AtomIter::new(space, &coords);
    while it.advance() {
        let (mut ia, mut ib) = (0usize, 0usize);
        for ((x, y), d) in sa.iter().zip(&sb).zip(it.digits()) {
            ia += x * d;
            ib += y * d;
        }
        out.push(a.values[ia] * b.values[ib]);
    }
    Ok(SubsetKernel { subset: union, values: out })
}

/// `target += c · source`, where `source.subset ⊆ target.subset`.
pub fn add_scaled(
    space: &FiniteProductSpace,
    target: &mut SubsetKernel,
    source: &SubsetKernel,
    c: f64,
) -> Result<()> {
    if !source.subset.is_subset_of(target.subset) {
        return Err(Error::Contract(format!(
            "cannot add kernel on {} into {}",
            source.subset, target.subset
        )));
    }
    let coords: Vec<usize> = target.subset.iter().collect();
    let strides = strides_in(space, source.subset, &coords);
    let mut it = AtomIter::new(space, &coords);
    let mut t = 0usize;
    while it.advance() {
        let mut idx = 0usize;
        for (s, d) in strides.iter().zip(it.digits()) {
            idx += s * d;
        }
        target.values[t] += c * source.values[idx];
        t += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fair_coins(n: usize) -> FiniteProductSpace {
        FiniteProductSpace::iid(Coordinate::rademacher(), n).unwrap()
    }

    /// Kernel x_{j} on a ±1 coordinate.
    fn coin(space: &FiniteProductSpace, j: usize) -> SubsetKernel {
        SubsetKernel::new(space, IndexSet::singleton(j), vec![-1.0, 1.0]).unwrap()
    }

    /// Kernel x_i · x_j on two ±1 coordinates, i < j.
    fn coin_pair(space: &FiniteProductSpace, i: usize, j: usize) -> SubsetKernel {
        SubsetKernel::new(
            space,
            IndexSet::from_indices(&[i, j]),
            vec![1.0, -1.0, -1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn expectation_examples() {
        let s2 = fair_coins(2);
        assert_eq!(expectation(&s2, &coin(&s2, 0)), 0.0);
        assert_eq!(expectation(&s2, &coin_pair(&s2, 0, 1)), 0.0);

        let bern = FiniteProductSpace::new(vec![Coordinate::new(
            vec![0.0, 1.0],
            vec![0.25, 0.75],
        )
        .unwrap()])
        .unwrap();
        let f = SubsetKernel::new(&bern, IndexSet::singleton(0), vec![0.0, 1.0]).unwrap();
        assert!((expectation(&bern, &f) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn conditional_expectation_examples() {
        let s2 = fair_coins(2);
        let prod = coin_pair(&s2, 0, 1);
        let on_first = conditional_expectation(&s2, &prod, IndexSet::singleton(0)).unwrap();
        assert_eq!(on_first.subset(), IndexSet::singleton(0));
        assert!(on_first.values().iter().all(|v| v.abs() < 1e-15));

        let f = coin(&s2, 0);
        let same = conditional_expectation(&s2, &f, IndexSet::singleton(0)).unwrap();
        assert_eq!(same.values(), f.values());

        let none = conditional_expectation(&s2, &f, IndexSet::EMPTY).unwrap();
        assert_eq!(none.subset(), IndexSet::EMPTY);
        assert!(none.values()[0].abs() < 1e-15);
    }

    #[test]
    fn conditioning_outside_subset_is_noop() {
        let s3 = fair_coins(3);
        let f = coin_pair(&s3, 0, 1);
        let c = conditional_expectation(&s3, &f, IndexSet::from_indices(&[0, 1, 2])).unwrap();
        assert_eq!(c.subset(), f.subset());
        assert_eq!(c.values(), f.values());
    }

    #[test]
    fn joint_moment_examples() {
        let s3 = fair_coins(3);
        let k12 = coin_pair(&s3, 0, 1);
        let k23 = coin_pair(&s3, 1, 2);
        let k13 = coin_pair(&s3, 0, 2);
        let b = Budget::default();
        assert!((joint_moment(&s3, &[&k12, &k12], b).unwrap() - 1.0).abs() < 1e-15);
        assert!(joint_moment(&s3, &[&coin(&s3, 0), &coin(&s3, 1)], b).unwrap().abs() < 1e-15);
        // triangle: x1x2 · x2x3 · x1x3 = (x1x2x3)^2 = 1
        let tri = joint_moment(&s3, &[&k12, &k23, &k13], b).unwrap();
        // independent oracle: enumerate all 8 atoms directly
        let mut oracle = 0.0;
        for bits in 0..8u32 {
            let x = |j: u32| if bits >> j & 1 == 1 { 1.0 } else { -1.0 };
            oracle += 0.125 * (x(0) * x(1)) * (x(1) * x(2)) * (x(0) * x(2));
        }
        assert!((tri - oracle).abs() < 1e-15);
        assert!((tri - 1.0).abs() < 1e-15);
    }

    #[test]
    fn joint_moment_of_single_kernel_is_expectation() {
        let s2 = fair_coins(2);
        let k = coin_pair(&s2, 0, 1);
        let jm = joint_moment(&s2, &[&k], Budget::default()).unwrap();
        assert_eq!(jm, expectation(&s2, &k));
    }

    #[test]
    fn budget_is_enforced() {
        let s = fair_coins(8);
        let full = IndexSet::full(8);
        let k = SubsetKernel::new(&s, full, vec![1.0; 256]).unwrap();
        let err = joint_moment(&s, &[&k], Budget(255)).unwrap_err();
        match err {
            Error::Budget { required, budget } => {
                assert_eq!(required, 256);
                assert_eq!(budget, 255);
            }
            other => panic!("expected budget error, got {other}"),
        }
    }

    proptest::proptest! {
        /// Conditioning on everything is the identity; conditioning on
        /// nothing is the plain expectation.
        #[test]
        fn conditioning_extremes(values in proptest::collection::vec(-10.0f64..10.0, 8)) {
            let s = fair_coins(3);
            let k = SubsetKernel::new(&s, IndexSet::full(3), values).unwrap();
            let all = conditional_expectation(&s, &k, IndexSet::full(3)).unwrap();
            proptest::prop_assert_eq!(all.values(), k.values());
            let none = conditional_expectation(&s, &k, IndexSet::EMPTY).unwrap();
            proptest::prop_assert!((none.values()[0] - expectation(&s, &k)).abs() < 1e-12);
        }

        /// Expectations are linear in the kernel table.
        #[test]
        fn expectation_linearity(
            values in proptest::collection::vec(-10.0f64..10.0, 4),
            c in -5.0f64..5.0,
        ) {
            let s = fair_coins(2);
            let k = SubsetKernel::new(&s, IndexSet::full(2), values).unwrap();
            let scaled = k.scale(c);
            proptest::prop_assert!(
                (expectation(&s, &scaled) - c * expectation(&s, &k)).abs() < 1e-10
            );
        }
    }

    #[test]
    fn tower_property_on_random_kernels() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..25 {
            let n = rng.gen_range(2..=4);
            let coords: Vec<Coordinate> = (0..n)
                .map(|_| {
                    let m = rng.gen_range(2..=3);
                    let support: Vec<f64> =
                        (0..m).map(|t| t as f64 + rng.gen_range(-0.3..0.3)).collect();
                    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
                    let tot: f64 = raw.iter().sum();
                    Coordinate::new(support, raw.iter().map(|p| p / tot).collect()).unwrap()
                })
                .collect();
            let space = FiniteProductSpace::new(coords).unwrap();
            let subset = IndexSet::full(n);
            let len = space.table_len(subset).unwrap();
            let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let k = SubsetKernel::new(&space, subset, values).unwrap();

            let larger = IndexSet::from_indices(&[0, 1]);
            let smaller = IndexSet::from_indices(&[0]);
            let via_two = conditional_expectation(
                &space,
                &conditional_expectation(&space, &k, larger).unwrap(),
                smaller,
            )
            .unwrap();
            let direct = conditional_expectation(&space, &k, smaller).unwrap();
            for (a, b) in via_two.values().iter().zip(direct.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
