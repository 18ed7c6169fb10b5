//! JSON input formats: groups, measures, noise laws, torus noise laws and
//! ensemble files. Every parser validates fully and never panics on
//! malformed input.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{Element, FiniteGroup, GroupError, Subgroup};
use crate::limit::{LimitError, NoiseLaw, Tail};
use crate::measure::{Measure, MeasureError};
use crate::solution::{Decomposition, PathKind, PathMeta, SectionKind, SectionMap, SolutionPath};
use crate::torus::{SdRule, TorusError, TorusMeasureSpec, TorusNoiseLaw, TorusTail};

/// Largest group order accepted from a spec.
pub const MAX_ORDER: usize = 1024;

/// Longest prefix or periodic block accepted from a spec.
pub const MAX_LAWS: usize = 100_000;

/// Version stamped on every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Torus(#[from] TorusError),
}

impl From<serde_json::Error> for SpecError {
    fn from(e: serde_json::Error) -> Self {
        Self::Json(e.to_string())
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SpecError> {
    Err(SpecError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSpec {
    Table {
        mul: Vec<Vec<Element>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        identity: Option<Element>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
    Builtin {
        name: String,
    },
}

impl GroupSpec {
    pub fn build(&self) -> Result<FiniteGroup, SpecError> {
        match self {
            Self::Table {
                mul,
                identity,
                labels,
            } => {
                if mul.len() > MAX_ORDER {
                    return Err(GroupError::OrderTooLarge {
                        order: mul.len(),
                        bound: MAX_ORDER,
                    }
                    .into());
                }
                let g = FiniteGroup::from_table(mul, *identity)?;
                Ok(match labels {
                    Some(l) => g.with_labels(l.clone())?,
                    None => g,
                })
            }
            Self::Builtin { name } => builtin(name),
        }
    }
}

fn parse_order(s: &str, what: &str) -> Result<usize, SpecError> {
    match s.parse::<usize>() {
        Ok(n) if (1..=MAX_ORDER).contains(&n) => Ok(n),
        _ => invalid(format!("bad {what} '{s}' (need 1..={MAX_ORDER})")),
    }
}

/// `Z<n>`, `Zn:<n>`, `S<k>` (k <= 5), `D<m>` (order 2m), `Q8` and
/// `product:<a>x<b>` over those names.
pub fn builtin(name: &str) -> Result<FiniteGroup, SpecError> {
    let name = name.trim();
    if let Some(rest) = name.strip_prefix("product:") {
        let Some((a, b)) = rest.split_once('x') else {
            return invalid(format!("product '{name}' needs the form product:<a>x<b>"));
        };
        let (a, b) = (builtin(a)?, builtin(b)?);
        let order = a.order().saturating_mul(b.order());
        if order > MAX_ORDER {
            return Err(GroupError::OrderTooLarge {
                order,
                bound: MAX_ORDER,
            }
            .into());
        }
        return Ok(FiniteGroup::direct_product(&a, &b)?);
    }
    if name == "Q8" {
        return Ok(FiniteGroup::quaternion()?);
    }
    if let Some(n) = name.strip_prefix("Zn:") {
        return Ok(FiniteGroup::cyclic(parse_order(n, "cyclic order")?)?);
    }
    if let Some(n) = name.strip_prefix('Z') {
        return Ok(FiniteGroup::cyclic(parse_order(n, "cyclic order")?)?);
    }
    if let Some(k) = name.strip_prefix('S') {
        return Ok(FiniteGroup::symmetric(parse_order(k, "degree")?)?);
    }
    if let Some(m) = name.strip_prefix('D') {
        let m = parse_order(m, "dihedral parameter")?;
        if 2 * m > MAX_ORDER {
            return Err(GroupError::OrderTooLarge {
                order: 2 * m,
                bound: MAX_ORDER,
            }
            .into());
        }
        return Ok(FiniteGroup::dihedral(m)?);
    }
    invalid(format!("unknown builtin group '{name}'"))
}

/// An element given by index or by label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElementRef {
    Index(Element),
    Label(String),
}

impl ElementRef {
    pub fn resolve(&self, group: &FiniteGroup) -> Result<Element, SpecError> {
        match self {
            Self::Index(i) if *i < group.order() => Ok(*i),
            Self::Index(i) => Err(MeasureError::OutOfRange(*i).into()),
            Self::Label(l) => Ok(group.element_by_label(l)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    Delta {
        at: ElementRef,
    },
    Haar,
    HaarSubgroup {
        members: Vec<ElementRef>,
    },
    Weights {
        w: Vec<f64>,
    },
    /// `[element, weight]` pairs; repeated elements add up.
    Atoms {
        points: Vec<(ElementRef, f64)>,
    },
}

impl MeasureSpec {
    pub fn build(&self, group: &Arc<FiniteGroup>) -> Result<Measure, SpecError> {
        Ok(match self {
            Self::Delta { at } => Measure::delta(group.clone(), at.resolve(group)?)?,
            Self::Haar => Measure::haar(group.clone()),
            Self::HaarSubgroup { members } => {
                let ids = members
                    .iter()
                    .map(|m| m.resolve(group))
                    .collect::<Result<Vec<_>, _>>()?;
                Measure::haar_subgroup(group.clone(), &Subgroup::new(group, ids)?)
            }
            Self::Weights { w } => Measure::new(group.clone(), w.clone())?,
            Self::Atoms { points } => {
                let mut w = vec![0.0; group.order()];
                for (x, p) in points {
                    w[x.resolve(group)?] += p;
                }
                Measure::new(group.clone(), w)?
            }
        })
    }

    /// Exact description of `mu` as explicit weights.
    pub fn from_measure(mu: &Measure) -> Self {
        Self::Weights {
            w: mu.weights().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailSpec {
    Constant { mu: MeasureSpec },
    Periodic { mus: Vec<MeasureSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub group: GroupSpec,
    #[serde(default)]
    pub prefix: Vec<MeasureSpec>,
    pub tail: TailSpec,
}

impl NoiseSpec {
    pub fn build(&self) -> Result<NoiseLaw, SpecError> {
        let group = Arc::new(self.group.build()?);
        let block = match &self.tail {
            TailSpec::Constant { .. } => 1,
            TailSpec::Periodic { mus } => mus.len(),
        };
        if self.prefix.len() > MAX_LAWS || block > MAX_LAWS {
            return invalid(format!("at most {MAX_LAWS} laws per prefix or period"));
        }
        let prefix = self
            .prefix
            .iter()
            .map(|m| m.build(&group))
            .collect::<Result<Vec<_>, _>>()?;
        let tail = match &self.tail {
            TailSpec::Constant { mu } => Tail::Constant(mu.build(&group)?),
            TailSpec::Periodic { mus } => Tail::Periodic(
                mus.iter()
                    .map(|m| m.build(&group))
                    .collect::<Result<_, _>>()?,
            ),
        };
        Ok(NoiseLaw::new(group, prefix, tail)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TorusMeasureJson {
    Atoms { points: Vec<(f64, f64)> },
    Gauss { m: f64, sd: f64 },
    Uniform { a: f64, b: f64 },
    Dirac { x: f64 },
}

impl TorusMeasureJson {
    pub fn build(&self) -> Result<TorusMeasureSpec, SpecError> {
        let spec = match self {
            Self::Atoms { points } => {
                if points.len() > MAX_LAWS {
                    return invalid(format!("at most {MAX_LAWS} atoms"));
                }
                TorusMeasureSpec::Atoms(points.clone())
            }
            Self::Gauss { m, sd } => TorusMeasureSpec::WrappedGaussian { mean: *m, sd: *sd },
            Self::Uniform { a, b } => TorusMeasureSpec::UniformInterval { a: *a, b: *b },
            Self::Dirac { x } => TorusMeasureSpec::Dirac(*x),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SdRuleJson {
    Constant {
        c: f64,
    },
    /// `σ_k = c r^{|k|}`.
    Geometric {
        c: f64,
        r: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TorusTailJson {
    Constant {
        mu: TorusMeasureJson,
    },
    Periodic {
        mus: Vec<TorusMeasureJson>,
    },
    GaussSchedule {
        #[serde(default)]
        sds: Vec<f64>,
        rule: SdRuleJson,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusNoiseSpec {
    #[serde(default)]
    pub prefix: Vec<TorusMeasureJson>,
    pub tail: TorusTailJson,
    /// Grid size `n` for running the finite-group engine on `Z_n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// Allow off-grid and continuous laws to be binned onto the grid.
    #[serde(default)]
    pub approximate: bool,
}

impl TorusNoiseSpec {
    pub fn build(&self) -> Result<TorusNoiseLaw, SpecError> {
        if self.prefix.len() > MAX_LAWS {
            return invalid(format!("at most {MAX_LAWS} prefix laws"));
        }
        if let Some(n) = self.grid {
            parse_order(&n.to_string(), "grid size")?;
        }
        let prefix = self
            .prefix
            .iter()
            .map(|m| m.build())
            .collect::<Result<Vec<_>, _>>()?;
        let tail = match &self.tail {
            TorusTailJson::Constant { mu } => TorusTail::Constant(mu.build()?),
            TorusTailJson::Periodic { mus } => {
                if mus.len() > MAX_LAWS {
                    return invalid(format!("at most {MAX_LAWS} periodic laws"));
                }
                TorusTail::Periodic(mus.iter().map(|m| m.build()).collect::<Result<_, _>>()?)
            }
            TorusTailJson::GaussSchedule { sds, rule } => {
                if sds.len() > MAX_LAWS {
                    return invalid(format!("at most {MAX_LAWS} explicit sds"));
                }
                TorusTail::GaussianSchedule {
                    explicit: sds.clone(),
                    rule: match *rule {
                        SdRuleJson::Constant { c } => SdRule::Constant(c),
                        SdRuleJson::Geometric { c, r } => SdRule::Geometric { c, r },
                    },
                }
            }
        };
        Ok(TorusNoiseLaw::new(prefix, tail)?)
    }

    /// The noise pushed onto `Z_grid`, when a grid is given.
    pub fn build_on_grid(&self) -> Result<Option<NoiseLaw>, SpecError> {
        let law = self.build()?;
        match self.grid {
            None => Ok(None),
            Some(n) => {
                let group = Arc::new(FiniteGroup::cyclic(n)?);
                Ok(Some(crate::torus::discretize_noise(
                    &law,
                    group,
                    self.approximate,
                )?))
            }
        }
    }
}

pub fn parse_group_spec(json: &str) -> Result<FiniteGroup, SpecError> {
    serde_json::from_str::<GroupSpec>(json)?.build()
}

pub fn parse_measure_spec(json: &str, group: &Arc<FiniteGroup>) -> Result<Measure, SpecError> {
    serde_json::from_str::<MeasureSpec>(json)?.build(group)
}

pub fn parse_noise_spec(json: &str) -> Result<NoiseLaw, SpecError> {
    serde_json::from_str::<NoiseSpec>(json)?.build()
}

pub fn parse_torus_noise_spec(json: &str) -> Result<TorusNoiseLaw, SpecError> {
    serde_json::from_str::<TorusNoiseSpec>(json)?.build()
}

/// One path of an ensemble file. Arrays run over depth: entry `d` holds the
/// value at time `k = -d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_id: u64,
    pub eta: Vec<Element>,
    pub xi: Vec<Element>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<Element>>,
    #[serde(rename = "U", default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<Element>>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Element>,
}

impl PathRecord {
    pub fn from_path(id: u64, path: &SolutionPath, dec: Option<&Decomposition>) -> Self {
        Self {
            path_id: id,
            eta: path.eta().to_vec(),
            xi: path.xi().to_vec(),
            phi: dec.map(|d| d.phi.clone()),
            u: dec.map(|d| d.u.clone()),
            v: dec.map(|d| d.v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub schema_version: u32,
    pub kind: PathKindJson,
    pub seed: u64,
    /// Construction depth `L`.
    pub depth: usize,
    pub noise: NoiseSpec,
    pub paths: Vec<PathRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKindJson {
    Uniform,
    Extremal,
    Mixture,
}

impl From<PathKind> for PathKindJson {
    fn from(k: PathKind) -> Self {
        match k {
            PathKind::Uniform => Self::Uniform,
            PathKind::Extremal => Self::Extremal,
            PathKind::Mixture => Self::Mixture,
        }
    }
}

impl From<PathKindJson> for PathKind {
    fn from(k: PathKindJson) -> Self {
        match k {
            PathKindJson::Uniform => Self::Uniform,
            PathKindJson::Extremal => Self::Extremal,
            PathKindJson::Mixture => Self::Mixture,
        }
    }
}

/// A recorded `(phi, U, V)` triple.
pub type RecordedParts = (Vec<Element>, Vec<Element>, Element);

/// A parsed ensemble: its noise law and validated paths, with recorded
/// decompositions when every component is present.
#[derive(Debug, Clone)]
pub struct LoadedEnsemble {
    pub noise: NoiseLaw,
    pub kind: PathKind,
    pub seed: u64,
    pub depth: usize,
    pub paths: Vec<(u64, SolutionPath, Option<RecordedParts>)>,
}

pub fn parse_ensemble(json: &str) -> Result<LoadedEnsemble, SpecError> {
    let file: EnsembleFile = serde_json::from_str(json)?;
    if file.schema_version != SCHEMA_VERSION {
        return invalid(format!(
            "unsupported schema version {}",
            file.schema_version
        ));
    }
    let noise = file.noise.build()?;
    let group = noise.group().clone();
    let kind = PathKind::from(file.kind);
    let mut paths = Vec::with_capacity(file.paths.len());
    for rec in file.paths {
        let meta = PathMeta {
            seed: file.seed,
            path_index: rec.path_id,
            depth: file.depth,
        };
        let path = SolutionPath::new(group.clone(), rec.xi, rec.eta, kind, meta)
            .map_err(|e| SpecError::Invalid(format!("path {}: {e}", rec.path_id)))?;
        let dec = match (rec.phi, rec.u, rec.v) {
            (Some(phi), Some(u), Some(v)) => {
                let w = path.window() + 1;
                let n = group.order();
                if phi.len() != w || u.len() != w || v >= n || phi.iter().chain(&u).any(|&x| x >= n)
                {
                    return invalid(format!("path {}: malformed decomposition", rec.path_id));
                }
                Some((phi, u, v))
            }
            (None, None, None) => None,
            _ => return invalid(format!("path {}: partial decomposition", rec.path_id)),
        };
        paths.push((rec.path_id, path, dec));
    }
    Ok(LoadedEnsemble {
        noise,
        kind,
        seed: file.seed,
        depth: file.depth,
        paths,
    })
}

impl LoadedEnsemble {
    /// Rebuilds decompositions against `subgroup` under the min-index section;
    /// records that do not reconstruct their path are rejected.
    pub fn decompositions(
        &self,
        subgroup: &Subgroup,
    ) -> Result<Vec<Option<Decomposition>>, SpecError> {
        let group = self.noise.group();
        let section = Arc::new(SectionMap::new(group, subgroup, SectionKind::MinIndex)?);
        self.paths
            .iter()
            .map(|(id, path, rec)| match rec {
                None => Ok(None),
                Some((phi, u, v)) => {
                    let dec = Decomposition {
                        phi: phi.clone(),
                        u: u.clone(),
                        v: *v,
                        section: section.clone(),
                    };
                    if dec.reconstructs(path) {
                        Ok(Some(dec))
                    } else {
                        invalid(format!(
                            "path {id}: recorded decomposition does not reconstruct eta"
                        ))
                    }
                }
            })
            .collect()
    }
}

/// `{"schema_version": 1, ...value}` as pretty JSON with sorted keys and a
/// trailing newline.
pub fn to_versioned_json<T: Serialize>(value: &T) -> String {
    let versioned = match serde_json::to_value(value).expect("report types serialize") {
        serde_json::Value::Object(mut map) => {
            map.insert("schema_version".into(), SCHEMA_VERSION.into());
            serde_json::Value::Object(map)
        }
        other => serde_json::json!({ "schema_version": SCHEMA_VERSION, "value": other }),
    };
    let mut s = serde_json::to_string_pretty(&versioned).expect("values serialize");
    s.push('\n');
    s
}
