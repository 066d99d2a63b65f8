//! Versioned JSON reports. Every subcommand emits one `Report` document;
//! field order is fixed by the struct definitions, so output is
//! deterministic given (model, seed, flags).

use serde::Serialize;

use dejong_core::bounds::{MultivariateBoundReport, UnivariateBoundReport};
use dejong_core::mc::BoundValidation;
use dejong_core::shadows::ShadowClass;
use dejong_core::IndexSet;

pub const SCHEMA: &str = "dejong-report/1";

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    pub inputs: Inputs,
    pub results: serde_json::Value,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Serialize, Default)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub threads: usize,
    pub tolerance: f64,
    pub budget: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Verdict { name: name.into(), pass, detail: detail.into() }
    }
}

fn one_based(set: IndexSet) -> Vec<usize> {
    set.to_one_based()
}

#[derive(Debug, Serialize)]
pub struct ComponentRow {
    pub subset: Vec<usize>,
    pub sigma2: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct DecomposeResults {
    pub n: usize,
    pub order: Option<usize>,
    pub degenerate: bool,
    pub variance: f64,
    pub components: Vec<ComponentRow>,
}

#[derive(Debug, Serialize)]
pub struct MomentsResults {
    pub order: usize,
    pub normalization_scale: f64,
    pub fourth_moment: f64,
    pub fourth_gap: f64,
    pub rho2: f64,
    pub s0: f64,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub sigma2: Vec<SigmaRow>,
}

#[derive(Debug, Serialize)]
pub struct SigmaRow {
    pub subset: Vec<usize>,
    pub sigma2: f64,
}

#[derive(Debug, Serialize)]
pub struct UnivariateBoundResults {
    pub mode: String,
    pub order: usize,
    pub fourth_moment: f64,
    pub fourth_gap: f64,
    pub rho2: f64,
    pub c_d: f64,
    pub kappa: f64,
    pub term1: f64,
    pub term2: f64,
    pub total: f64,
    pub simplified: f64,
    pub radicand_clamped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_conditional: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourth_increment: Option<f64>,
}

impl UnivariateBoundResults {
    pub fn from_core(rep: &UnivariateBoundReport) -> Self {
        UnivariateBoundResults {
            mode: match rep.mode {
                dejong_core::bounds::BoundMode::CdRho => "cd-rho".into(),
                dejong_core::bounds::BoundMode::Exact => "exact".into(),
            },
            order: rep.order,
            fourth_moment: rep.fourth_moment,
            fourth_gap: rep.fourth_gap,
            rho2: rep.rho2,
            c_d: rep.c_d,
            kappa: rep.kappa,
            term1: rep.term1,
            term2: rep.term2,
            total: rep.total,
            simplified: rep.simplified,
            radicand_clamped: rep.clamped,
            var_conditional: rep.exact.map(|e| e.var_conditional),
            fourth_increment: rep.exact.map(|e| e.fourth_increment),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PairRow {
    pub i: usize,
    pub k: usize,
    pub e_w2w2: f64,
    pub e_z2z2: f64,
    pub v_ik: f64,
    pub s0_ik: f64,
    pub tau_ik: f64,
}

#[derive(Debug, Serialize)]
pub struct ComponentIngredientRow {
    pub order: usize,
    pub fourth_moment: f64,
    pub rho2: f64,
    pub c_q: f64,
    pub kappa_q: f64,
    pub sum_term: f64,
}

#[derive(Debug, Serialize)]
pub struct MultivariateBoundResults {
    pub r: usize,
    pub q1: usize,
    pub a_value: f64,
    pub sum_term: f64,
    pub lambda_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub op_v_inv_sqrt: Option<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub pairs: Vec<PairRow>,
    pub per_component: Vec<ComponentIngredientRow>,
    pub radicand_clamped: bool,
    /// Coefficient of M̃₂ in the C³ bound and of M₃ alongside it.
    pub coeff_m2_tilde: f64,
    pub coeff_m3: f64,
    /// Coefficients of M₁ and M₂ in the C² bound (present when V ≻ 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeff_m1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeff_m2: Option<f64>,
}

impl MultivariateBoundResults {
    pub fn from_core(rep: &MultivariateBoundReport) -> Self {
        let q1 = rep.q1 as f64;
        let r = rep.r as f64;
        let sqrt_a = rep.a_value.max(0.0).sqrt();
        let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
        MultivariateBoundResults {
            r: rep.r,
            q1: rep.q1,
            a_value: rep.a_value,
            sum_term: rep.sum_term,
            lambda_min: rep.lambda_min,
            op_v_inv_sqrt: rep.op_v_inv_sqrt,
            covariance: rep.covariance.clone(),
            pairs: rep
                .pairs
                .iter()
                .map(|p| PairRow {
                    i: p.i + 1,
                    k: p.k + 1,
                    e_w2w2: p.e_w2w2,
                    e_z2z2: p.e_z2z2,
                    v_ik: p.v_ik,
                    s0_ik: p.s0_ik,
                    tau_ik: p.tau_ik,
                })
                .collect(),
            per_component: rep
                .per_component
                .iter()
                .map(|c| ComponentIngredientRow {
                    order: c.order,
                    fourth_moment: c.fourth_moment,
                    rho2: c.rho2,
                    c_q: c.c_q,
                    kappa_q: c.kappa_q,
                    sum_term: c.sum_term,
                })
                .collect(),
            radicand_clamped: rep.clamped,
            coeff_m2_tilde: sqrt_a / (4.0 * q1),
            coeff_m3: (2.0 * r).sqrt() / 9.0 * rep.sum_term,
            coeff_m1: rep.op_v_inv_sqrt.map(|op| op * sqrt_a / (sqrt_2pi * q1)),
            coeff_m2: rep
                .op_v_inv_sqrt
                .map(|op| (std::f64::consts::PI * r).sqrt() / 6.0 * op * rep.sum_term),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ShadowRow {
    pub sets: Vec<Vec<usize>>,
    pub size: usize,
    pub stabilizer: u64,
    pub orbit_size: u64,
    pub merged: usize,
}

#[derive(Debug, Serialize)]
pub struct ShadowResults {
    pub d: usize,
    pub classes: Vec<ShadowRow>,
    pub c_d: f64,
    pub kappa: f64,
}

impl ShadowResults {
    pub fn from_core(d: usize, classes: &[ShadowClass], c_d: f64) -> Self {
        ShadowResults {
            d,
            classes: classes
                .iter()
                .map(|c| ShadowRow {
                    sets: c.sets.iter().map(|&s| one_based(s)).collect(),
                    size: c.size,
                    stabilizer: c.stabilizer,
                    orbit_size: c.orbit_size,
                    merged: c.merged,
                })
                .collect(),
            c_d,
            kappa: c_d + 2.0 * d as f64,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateResults {
    pub samples: usize,
    pub seed: u64,
    pub empirical_w1: f64,
    pub bound_total: f64,
    pub error_proxy: f64,
    pub pass: bool,
    pub bound: UnivariateBoundResults,
}

impl SimulateResults {
    pub fn from_core(samples: usize, seed: u64, v: &BoundValidation) -> Self {
        SimulateResults {
            samples,
            seed,
            empirical_w1: v.empirical_w1,
            bound_total: v.bound.total,
            error_proxy: v.error_proxy,
            pass: v.pass,
            bound: UnivariateBoundResults::from_core(&v.bound),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ProductCheckResults {
    pub trials: usize,
    pub matches: usize,
    pub max_deviation: f64,
}

#[derive(Debug, Serialize)]
pub struct CheckResults {
    pub order: Option<usize>,
    pub reconstruction_residual: f64,
    pub orthogonality_residual: f64,
    pub degeneracy_residual: f64,
    pub regression_residual: Option<f64>,
    pub offenders: Vec<Vec<usize>>,
}
