//! Model files: JSON documents describing a product space together with raw
//! kernels, a vector of statistics, or a named generator. Subsets are
//! 1-based on disk, matching the usual `[n]` convention.

use serde::{Deserialize, Serialize};

use dejong_core::generators;
use dejong_core::hoeffding::{check_degenerate, decompose, DegenerateUStatistic, VectorModel};
use dejong_core::{Coordinate, Error, FiniteProductSpace, IndexSet, Result, SubsetKernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSpec {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// 1-based coordinate indices, strictly increasing.
    pub subset: Vec<usize>,
    /// Dense table, row-major in subset order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorComponentSpec {
    pub order: usize,
    pub components: Vec<KernelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub subset: Vec<usize>,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    /// Multilinear form Σ a_J Π x_j over i.i.d. coordinates.
    HomogeneousSum {
        n: usize,
        d: usize,
        law: CoordinateSpec,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        coefficients: Vec<CoefficientSpec>,
        /// Equal coefficients on all d-subsets, normalized to unit variance.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        balanced: bool,
    },
    /// One kernel g applied to every d-subset of i.i.d. coordinates.
    Symmetric { n: usize, d: usize, law: CoordinateSpec, kernel: Vec<f64> },
    /// Order-2 weighted statistic w_{ij} ψ(x_i, x_j).
    Weighted { n: usize, law: CoordinateSpec, kernel: Vec<f64>, weights: Vec<WeightSpec> },
}

/// On-disk model document. Exactly one of `components`, `vector`,
/// `generator` describes the statistic; `coordinates` is required unless a
/// generator supplies its own law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<CoordinateSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<KernelSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<VectorComponentSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

pub fn load_model(path: &std::path::Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Model(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Model(format!("bad model JSON: {e}")))
}

pub fn save_model(path: &std::path::Path, model: &ModelFile) -> Result<()> {
    let text = serde_json::to_string_pretty(model)
        .map_err(|e| Error::Model(format!("cannot serialize model: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| Error::Model(format!("cannot write {}: {e}", path.display())))
}

fn build_coordinate(spec: &CoordinateSpec) -> Result<Coordinate> {
    Coordinate::new(spec.support.clone(), spec.probs.clone())
}

fn build_space(specs: &[CoordinateSpec]) -> Result<FiniteProductSpace> {
    FiniteProductSpace::new(specs.iter().map(build_coordinate).collect::<Result<_>>()?)
}

fn build_kernel(space: &FiniteProductSpace, spec: &KernelSpec) -> Result<SubsetKernel> {
    let subset = IndexSet::from_one_based(&spec.subset)
        .ok_or_else(|| Error::Model(format!("bad subset {:?}", spec.subset)))?;
    if subset.len() != spec.subset.len() {
        return Err(Error::Model(format!("subset {:?} has repeated indices", spec.subset)));
    }
    SubsetKernel::new(space, subset, spec.values.clone())
}

/// A statistic ready for analysis: raw kernels plus derived quantities.
pub enum BuiltModel {
    Univariate { space: FiniteProductSpace, kernels: Vec<SubsetKernel> },
    Vector { space: FiniteProductSpace, model: VectorModel, scales: Vec<f64> },
}

impl BuiltModel {
    pub fn space(&self) -> &FiniteProductSpace {
        match self {
            BuiltModel::Univariate { space, .. } => space,
            BuiltModel::Vector { space, .. } => space,
        }
    }
}

/// Materializes a model file into a space plus statistic(s).
pub fn build_model(file: &ModelFile) -> Result<BuiltModel> {
    if let Some(generator) = &file.generator {
        if file.components.is_some() || file.vector.is_some() {
            return Err(Error::Model(
                "a model carries either a generator or explicit components, not both".into(),
            ));
        }
        return build_generator(generator);
    }
    let coords = file
        .coordinates
        .as_ref()
        .ok_or_else(|| Error::Model("model needs `coordinates`".into()))?;
    let space = build_space(coords)?;
    match (&file.components, &file.vector) {
        (Some(kernels), None) => {
            let kernels: Vec<SubsetKernel> =
                kernels.iter().map(|k| build_kernel(&space, k)).collect::<Result<_>>()?;
            Ok(BuiltModel::Univariate { space, kernels })
        }
        (None, Some(vec_specs)) => {
            let mut stats = Vec::new();
            let mut scales = Vec::new();
            for (idx, comp) in vec_specs.iter().enumerate() {
                let kernels: Vec<SubsetKernel> = comp
                    .components
                    .iter()
                    .map(|k| build_kernel(&space, k))
                    .collect::<Result<_>>()?;
                let dec = decompose(&space, &kernels)?;
                let report = check_degenerate(&space, &dec, comp.order);
                if !report.degenerate {
                    return Err(Error::Model(format!(
                        "vector component {idx} is not degenerate of order {}; offenders {:?}",
                        comp.order, report.offenders
                    )));
                }
                let raw = DegenerateUStatistic::new(&space, dec, comp.order)?;
                let scale = raw.variance().sqrt();
                stats.push(raw.normalize(&space)?);
                scales.push(scale);
            }
            let model = VectorModel::new(stats)?;
            Ok(BuiltModel::Vector { space, model, scales })
        }
        (Some(_), Some(_)) => {
            Err(Error::Model("model carries both `components` and `vector`".into()))
        }
        (None, None) => Err(Error::Model(
            "model needs `components`, `vector`, or a `generator`".into(),
        )),
    }
}

fn build_generator(spec: &GeneratorSpec) -> Result<BuiltModel> {
    match spec {
        GeneratorSpec::HomogeneousSum { n, d, law, coefficients, balanced } => {
            let law = build_coordinate(law)?;
            let coeffs: Vec<(IndexSet, f64)> = if *balanced {
                if !coefficients.is_empty() {
                    return Err(Error::Model(
                        "homogeneous-sum takes either `balanced` or `coefficients`".into(),
                    ));
                }
                let subs = generators::d_subsets(*n, *d);
                let a = (subs.len() as f64).sqrt().recip();
                subs.into_iter().map(|s| (s, a)).collect()
            } else {
                coefficients
                    .iter()
                    .map(|c| {
                        IndexSet::from_one_based(&c.subset)
                            .map(|s| (s, c.a))
                            .ok_or_else(|| Error::Model(format!("bad subset {:?}", c.subset)))
                    })
                    .collect::<Result<_>>()?
            };
            let (space, u) = generators::homogeneous_sum(*n, *d, &coeffs, &law)?;
            let kernels: Vec<SubsetKernel> = u.components().values().cloned().collect();
            Ok(BuiltModel::Univariate { space, kernels })
        }
        GeneratorSpec::Symmetric { n, d, law, kernel } => {
            let law = build_coordinate(law)?;
            let out = generators::symmetric_ustat(*n, *d, kernel, &law)?;
            let kernels: Vec<SubsetKernel> = out.ustat.components().values().cloned().collect();
            Ok(BuiltModel::Univariate { space: out.space, kernels })
        }
        GeneratorSpec::Weighted { n, law, kernel, weights } => {
            let law = build_coordinate(law)?;
            let w: Vec<(usize, usize, f64)> =
                weights.iter().map(|s| (s.i, s.j, s.w)).collect();
            let (space, u) = generators::weighted_ustat(*n, &w, kernel, &law)?;
            let kernels: Vec<SubsetKernel> = u.components().values().cloned().collect();
            Ok(BuiltModel::Univariate { space, kernels })
        }
    }
}

/// Decomposes raw kernels and, when the decomposition is supported on one
/// order, returns the normalized statistic with its inferred order and the
/// variance scale that was divided out.
pub struct DegenerateBuild {
    pub stat: DegenerateUStatistic,
    pub order: usize,
    pub scale: f64,
}

pub fn to_degenerate(
    space: &FiniteProductSpace,
    kernels: &[SubsetKernel],
) -> Result<DegenerateBuild> {
    let dec = decompose(space, kernels)?;
    if dec.components.is_empty() {
        return Err(Error::ZeroVariance(0.0));
    }
    // order with the largest total second moment
    let mut mass: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for (j, m2) in dec.second_moments(space) {
        *mass.entry(j.len()).or_insert(0.0) += m2;
    }
    let (&order, _) =
        mass.iter().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).expect("nonempty");
    let report = check_degenerate(space, &dec, order);
    if !report.degenerate {
        return Err(Error::Model(format!(
            "model is not a degenerate U-statistic: order-{order} mass dominates but \
             subsets {:?} also carry mass",
            report.offenders
        )));
    }
    let raw = DegenerateUStatistic::new(space, dec, order)?;
    let scale = raw.variance().sqrt();
    let stat = raw.normalize(space)?;
    Ok(DegenerateBuild { stat, order, scale })
}
