//! Serializable summaries and CSV curves for command-line output.

use std::fmt::Write as _;

use serde::Serialize;

use crate::group::{Element, FiniteGroup, Subgroup};
use crate::limit::{
    strong_subgroup, Case, ConjugacyCheck, Gauge, LimitResult, NoiseLaw, Residuals,
};
use crate::measure::tv_distance;
use crate::solution::{Decomposition, Ensemble, SolutionEngine};
use crate::spec::{EnsembleFile, NoiseSpec, PathRecord, SCHEMA_VERSION};
use crate::stats::EnsembleReport;
use crate::torus::{Membership, TorusClassification};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupView {
    pub members: Vec<Element>,
    pub labels: Vec<String>,
    pub order: usize,
    pub normal: bool,
}

impl SubgroupView {
    pub fn new(group: &FiniteGroup, h: &Subgroup) -> Self {
        Self {
            members: h.members().to_vec(),
            labels: h.members().iter().map(|&x| group.label(x)).collect(),
            order: h.order(),
            normal: h.is_normal(group),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyReport {
    pub case: Case,
    pub group_order: usize,
    pub subgroup: SubgroupView,
    pub strong_subgroup: SubgroupView,
    pub depth_used: usize,
    pub residuals: Residuals,
    pub conjugacy: Option<ConjugacyCheck>,
}

impl ClassifyReport {
    pub fn new(noise: &NoiseLaw, res: &LimitResult, conjugacy: Option<ConjugacyCheck>) -> Self {
        let g = noise.group();
        Self {
            case: res.case(),
            group_order: g.order(),
            subgroup: SubgroupView::new(g, res.subgroup()),
            strong_subgroup: SubgroupView::new(g, &strong_subgroup(g, res.subgroup())),
            depth_used: res.depth_used(),
            residuals: res.residuals(),
            conjugacy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusReport {
    pub p_mu: u64,
    pub case: Case,
    /// `{j / p_μ}`, empty when `p_μ = 0` (the whole torus).
    pub subgroup: Vec<String>,
    pub members_up_to_p_max: Vec<i64>,
    pub undetermined: Vec<i64>,
    pub lattice_consistent: bool,
    pub depth_used: usize,
    /// The finite-group classification on the grid, when one was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<ClassifyReport>,
}

impl TorusReport {
    pub fn new(cls: &TorusClassification, grid: Option<ClassifyReport>) -> Self {
        Self {
            p_mu: cls.p_mu,
            case: cls.case,
            subgroup: (0..cls.p_mu).map(|j| format!("{j}/{}", cls.p_mu)).collect(),
            members_up_to_p_max: cls.members.clone(),
            undetermined: cls.undetermined.clone(),
            lattice_consistent: cls.lattice_consistent(),
            depth_used: cls.depth_used,
            grid,
        }
    }
}

/// `p,upper,lower,ln_upper,ln_lower,decision`.
pub fn torus_bounds_csv(cls: &TorusClassification) -> String {
    let mut s = String::from("p,upper,lower,ln_upper,ln_lower,decision\n");
    for b in cls.pi_values.values() {
        let d = match b.decision {
            Membership::Member => "member",
            Membership::NonMember => "non_member",
            Membership::Undetermined => "undetermined",
        };
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{d}",
            b.p, b.upper, b.lower, b.ln_upper, b.ln_lower
        );
    }
    s
}

/// `p,depth,partial_product`.
pub fn torus_curves_csv(cls: &TorusClassification) -> String {
    let mut s = String::from("p,depth,partial_product\n");
    for b in cls.pi_values.values() {
        for (i, v) in b.curve.iter().enumerate() {
            let _ = writeln!(s, "{},{},{:e}", b.p, i + 1, v);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub case: Case,
    pub subgroup: SubgroupView,
    pub depth_used: usize,
    pub gauge: Gauge,
    pub residuals: Residuals,
    /// `lambdas[d]` is the weight vector of `λ_{-d}`.
    pub lambdas: Vec<Vec<f64>>,
    /// `alphas[d] = α_{-d}` down to the stopping depth.
    pub alphas: Vec<Element>,
}

impl LimitReport {
    pub fn new(noise: &NoiseLaw, res: &LimitResult) -> Self {
        Self {
            case: res.case(),
            subgroup: SubgroupView::new(noise.group(), res.subgroup()),
            depth_used: res.depth_used(),
            gauge: res.gauge(),
            residuals: res.residuals(),
            lambdas: res.lambdas().iter().map(|m| m.weights().to_vec()).collect(),
            alphas: res.alphas()[..=res.depth_used()].to_vec(),
        }
    }
}

/// `depth,shape_distance`: distance between consecutive backward products.
pub fn shape_curve_csv(res: &LimitResult) -> String {
    let mut s = String::from("depth,shape_distance\n");
    for (i, d) in res.shape_curve().iter().enumerate() {
        let _ = writeln!(s, "{},{:e}", i + 1, d);
    }
    s
}

/// `k,conv_eq_residual`: `tv(μ_k * λ_{k-1}, λ_k)` on the window.
pub fn conv_eq_csv(noise: &NoiseLaw, res: &LimitResult) -> String {
    let mut s = String::from("k,conv_eq_residual\n");
    let l = res.lambdas();
    for d in 0..res.window() {
        let rhs = noise.at_depth(d).convolve(&l[d + 1]).expect("same group");
        let _ = writeln!(s, "{},{:e}", -(d as i64), tv_distance(&rhs, &l[d]));
    }
    s
}

/// The on-disk form of an ensemble.
pub fn ensemble_file(
    noise: &NoiseSpec,
    engine: &SolutionEngine,
    ensemble: &Ensemble,
) -> EnsembleFile {
    EnsembleFile {
        schema_version: SCHEMA_VERSION,
        kind: ensemble.kind.into(),
        seed: ensemble.seed,
        depth: engine.depth(),
        noise: noise.clone(),
        paths: ensemble
            .members
            .iter()
            .map(|m| PathRecord::from_path(m.path_id, &m.path, m.decomposition.as_ref()))
            .collect(),
    }
}

/// `k,tv_to_lambda,chisq_p_uniformity,chisq_p_independence`, the last being
/// the smallest independence p-value recorded for `U_k`.
pub fn ensemble_summary_csv(report: &EnsembleReport) -> String {
    let opt = |p: Option<f64>| p.map(|x| format!("{x:e}")).unwrap_or_default();
    let mut s = String::from("k,tv_to_lambda,chisq_p_uniformity,chisq_p_independence\n");
    for r in &report.per_k {
        let indep = match (r.p_independence_uk_v, r.p_independence_uk_noise) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let _ = writeln!(
            s,
            "{},{:e},{},{}",
            r.k,
            r.tv_to_lambda,
            opt(r.p_uniformity_uk),
            opt(indep)
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRecord {
    pub path_id: u64,
    pub phi: Vec<Element>,
    #[serde(rename = "U")]
    pub u: Vec<Element>,
    #[serde(rename = "V")]
    pub v: Element,
    pub exact: bool,
    /// Matches the recorded `V` after moving it into the section gauge.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_matches_record: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionAudit {
    pub n_paths: usize,
    pub exact: usize,
    pub v_matches_record: usize,
    pub records_compared: usize,
    pub errors: Vec<String>,
    pub records: Vec<DecompositionRecord>,
}

impl DecompositionAudit {
    pub fn all_exact(&self) -> bool {
        self.errors.is_empty()
            && self.exact == self.n_paths
            && self.v_matches_record == self.records_compared
    }
}

/// Decomposes every path and checks it against any recorded decomposition.
pub fn audit_decompositions<'a>(
    engine: &SolutionEngine,
    paths: impl IntoIterator<
        Item = (
            u64,
            &'a crate::solution::SolutionPath,
            Option<&'a Decomposition>,
        ),
    >,
) -> DecompositionAudit {
    let g = engine.group();
    let sec = engine.section();
    let mut audit = DecompositionAudit {
        n_paths: 0,
        exact: 0,
        v_matches_record: 0,
        records_compared: 0,
        errors: Vec::new(),
        records: Vec::new(),
    };
    for (id, path, recorded) in paths {
        audit.n_paths += 1;
        match engine.decompose_path(path, sec) {
            Ok(dec) => {
                let exact = dec.reconstructs(path);
                audit.exact += usize::from(exact);
                let v_match = recorded.map(|r| dec.v == g.inv(sec.rep(g.inv(r.v))));
                if let Some(m) = v_match {
                    audit.records_compared += 1;
                    audit.v_matches_record += usize::from(m);
                }
                audit.records.push(DecompositionRecord {
                    path_id: id,
                    phi: dec.phi,
                    u: dec.u,
                    v: dec.v,
                    exact,
                    v_matches_record: v_match,
                });
            }
            Err(e) => audit.errors.push(format!("path {id}: {e}")),
        }
    }
    audit
}
