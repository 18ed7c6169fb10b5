//! The one-dimensional torus `[0, 1)`: characteristic functions, the
//! infinite-product criterion `π_μ(p)`, the generator `p_μ` of
//! `Z_μ = {p : π_μ(p) > 0}`, and discretization onto `Z_n`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::group::{FiniteGroup, Subgroup};
use crate::limit::Case;
use crate::measure::Measure;

/// Factor moduli at least this close to 1 are treated as exactly 1.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;

/// A repeating factor with modulus at most `1 - ZERO_PRODUCT_GAP` drives the
/// infinite product to zero.
pub const ZERO_PRODUCT_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TorusError {
    #[error("invalid torus measure: {0}")]
    InvalidSpec(String),
    #[error("membership in Z_mu undecided for p = {undecided:?}, which changes the gcd")]
    Indeterminate { undecided: Vec<i64> },
    #[error("point {x} is not on the 1/{n} grid")]
    NotRepresentable { x: f64, n: usize },
    #[error("grid size {n} is not divisible by p_mu = {p_mu}")]
    GridMismatch { n: usize, p_mu: u64 },
    #[error("grid size must be positive")]
    EmptyGrid,
}

/// A probability law on `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TorusMeasureSpec {
    /// `(position, weight)` pairs.
    Atoms(Vec<(f64, f64)>),
    WrappedGaussian {
        mean: f64,
        sd: f64,
    },
    UniformInterval {
        a: f64,
        b: f64,
    },
    Dirac(f64),
}

impl TorusMeasureSpec {
    pub fn validate(&self) -> Result<(), TorusError> {
        let bad = |s: String| Err(TorusError::InvalidSpec(s));
        match self {
            Self::Atoms(points) => {
                if points.is_empty() {
                    return bad("no atoms".into());
                }
                for &(x, w) in points {
                    if !x.is_finite() || !w.is_finite() || w < 0.0 {
                        return bad(format!("bad atom ({x}, {w})"));
                    }
                }
                let total: f64 = points.iter().map(|p| p.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("atom weights sum to {total}"));
                }
            }
            Self::WrappedGaussian { mean, sd } => {
                if !mean.is_finite() || !(sd.is_finite() && *sd > 0.0) {
                    return bad(format!(
                        "wrapped gaussian needs finite mean and sd > 0, got ({mean}, {sd})"
                    ));
                }
            }
            Self::UniformInterval { a, b } => {
                if !(0.0 <= *a && a < b && *b <= 1.0) {
                    return bad(format!(
                        "uniform interval needs 0 <= a < b <= 1, got [{a}, {b})"
                    ));
                }
            }
            Self::Dirac(x) => {
                if !x.is_finite() {
                    return bad(format!("dirac at {x}"));
                }
            }
        }
        Ok(())
    }

    /// `∫ e^{2πipx} μ(dx)`.
    pub fn char_fn(&self, p: i64) -> Complex64 {
        if p == 0 {
            return Complex64::new(1.0, 0.0);
        }
        let pf = p as f64;
        let e = |x: f64| Complex64::from_polar(1.0, 2.0 * PI * pf * x.rem_euclid(1.0));
        match self {
            Self::Dirac(x) => e(*x),
            Self::Atoms(points) => points.iter().map(|&(x, w)| e(x) * w).sum(),
            Self::UniformInterval { a, b } => {
                (e(*b) - e(*a)) / Complex64::new(0.0, 2.0 * PI * pf * (b - a))
            }
            Self::WrappedGaussian { mean, sd } => {
                e(*mean) * (-2.0 * PI * PI * pf * pf * sd * sd).exp()
            }
        }
    }
}

/// Standard-deviation rule for `σ_k` beyond the explicit list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SdRule {
    Constant(f64),
    /// `σ_k = c · r^{|k|}`.
    Geometric {
        c: f64,
        r: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TorusTail {
    Constant(TorusMeasureSpec),
    Periodic(Vec<TorusMeasureSpec>),
    /// Centered wrapped Gaussians; `explicit[j]` is the sd at the `j`-th tail
    /// position, then `rule` at absolute depth `|k|`.
    GaussianSchedule {
        explicit: Vec<f64>,
        rule: SdRule,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusNoiseLaw {
    prefix: Vec<TorusMeasureSpec>,
    tail: TorusTail,
}

impl TorusNoiseLaw {
    pub fn new(prefix: Vec<TorusMeasureSpec>, tail: TorusTail) -> Result<Self, TorusError> {
        for m in &prefix {
            m.validate()?;
        }
        match &tail {
            TorusTail::Constant(m) => m.validate()?,
            TorusTail::Periodic(ms) => {
                if ms.is_empty() {
                    return Err(TorusError::InvalidSpec("periodic tail is empty".into()));
                }
                for m in ms {
                    m.validate()?;
                }
            }
            TorusTail::GaussianSchedule { explicit, rule } => {
                if explicit.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(TorusError::InvalidSpec(
                        "schedule sd must be finite and >= 0".into(),
                    ));
                }
                let ok = match *rule {
                    SdRule::Constant(c) => c.is_finite() && c >= 0.0,
                    SdRule::Geometric { c, r } => {
                        c.is_finite() && c >= 0.0 && r.is_finite() && r >= 0.0
                    }
                };
                if !ok {
                    return Err(TorusError::InvalidSpec(format!("bad sd rule {rule:?}")));
                }
            }
        }
        Ok(Self { prefix, tail })
    }

    pub fn constant(spec: TorusMeasureSpec) -> Result<Self, TorusError> {
        Self::new(Vec::new(), TorusTail::Constant(spec))
    }

    pub fn prefix(&self) -> &[TorusMeasureSpec] {
        &self.prefix
    }

    pub fn tail(&self) -> &TorusTail {
        &self.tail
    }

    fn tail_start(&self) -> usize {
        self.prefix.len()
    }

    /// `σ` at absolute depth `d >= tail_start` for a Gaussian schedule.
    fn schedule_sd(explicit: &[f64], rule: SdRule, start: usize, d: usize) -> f64 {
        match explicit.get(d - start) {
            Some(&s) => s,
            None => match rule {
                SdRule::Constant(c) => c,
                SdRule::Geometric { c, r } => c * r.powi(d as i32),
            },
        }
    }

    /// The law `μ_{-depth}`.
    pub fn at_depth(&self, depth: usize) -> TorusMeasureSpec {
        if let Some(m) = self.prefix.get(depth) {
            return m.clone();
        }
        let start = self.tail_start();
        match &self.tail {
            TorusTail::Constant(m) => m.clone(),
            TorusTail::Periodic(ms) => ms[(depth - start) % ms.len()].clone(),
            TorusTail::GaussianSchedule { explicit, rule } => {
                let sd = Self::schedule_sd(explicit, *rule, start, depth);
                if sd == 0.0 {
                    TorusMeasureSpec::Dirac(0.0)
                } else {
                    TorusMeasureSpec::WrappedGaussian { mean: 0.0, sd }
                }
            }
        }
    }

    /// `ln |∫ e^{2πipx} μ_{-depth}(dx)|`.
    fn ln_modulus_at_depth(&self, p: i64, depth: usize) -> f64 {
        if let TorusTail::GaussianSchedule { explicit, rule } = &self.tail {
            if depth >= self.tail_start() {
                let sd = Self::schedule_sd(explicit, *rule, self.tail_start(), depth);
                let pf = p as f64;
                return -2.0 * PI * PI * pf * pf * sd * sd;
            }
        }
        self.at_depth(depth).char_fn(p).norm().min(1.0).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Member,
    NonMember,
    Undetermined,
}

/// Bounds on the tail product `P(p) = Π_{k <= -m} |μ̂_k(p)|`, `m` the prefix
/// length. `P(p) > 0` exactly when `π_μ(p) > 0` for every expressible tail:
/// finitely many nonzero factors never change positivity, and the prefix is
/// excluded because `π_μ` ignores any finite set of indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiBounds {
    pub p: i64,
    pub lower: f64,
    pub upper: f64,
    /// Natural logs of the bounds; the plain values underflow for large `p`.
    pub ln_lower: f64,
    pub ln_upper: f64,
    pub decision: Membership,
    /// Partial products after 1, 2, ..., depth tail factors.
    #[serde(skip)]
    pub curve: Vec<f64>,
}

/// Brackets the tail product for one `p` using `depth` explicit factors.
pub fn pi_mu_bounds(noise: &TorusNoiseLaw, p: i64, depth: usize, floor: f64) -> PiBounds {
    let depth = depth.max(1);
    let start = noise.tail_start();
    let mut ln_upper = 0.0f64;
    let mut curve = Vec::with_capacity(depth);
    for j in 0..depth {
        ln_upper += noise.ln_modulus_at_depth(p, start + j);
        curve.push(ln_upper.exp());
    }

    let repeating_decision = |moduli: &[f64]| {
        if moduli.iter().any(|&m| m <= 1.0 - ZERO_PRODUCT_GAP) {
            Membership::NonMember
        } else if moduli.iter().all(|&m| m >= 1.0 - UNIT_MODULUS_TOL) {
            Membership::Member
        } else {
            Membership::Undetermined
        }
    };

    let (mut decision, mut ln_lower) = match noise.tail() {
        TorusTail::Constant(m) => {
            let d = repeating_decision(&[m.char_fn(p).norm()]);
            (
                d,
                if d == Membership::Member {
                    ln_upper
                } else {
                    f64::NEG_INFINITY
                },
            )
        }
        TorusTail::Periodic(ms) => {
            let moduli: Vec<f64> = ms.iter().map(|m| m.char_fn(p).norm()).collect();
            let d = repeating_decision(&moduli);
            (
                d,
                if d == Membership::Member {
                    ln_upper
                } else {
                    f64::NEG_INFINITY
                },
            )
        }
        TorusTail::GaussianSchedule { explicit, rule } => {
            let pf = p as f64;
            let k2 = 2.0 * PI * PI * pf * pf;
            // σ² summed over the positions beyond `depth`
            let remaining_explicit: f64 = explicit.iter().skip(depth).map(|s| s * s).sum();
            let rule_from = start + explicit.len().max(depth);
            match *rule {
                SdRule::Geometric { c, r } if r < 1.0 => {
                    let r2 = r * r;
                    let rule_sum = c * c * r2.powi(rule_from as i32) / (1.0 - r2);
                    (
                        Membership::Member,
                        ln_upper - k2 * (remaining_explicit + rule_sum),
                    )
                }
                SdRule::Geometric { c: 0.0, .. } | SdRule::Constant(0.0) => {
                    (Membership::Member, ln_upper - k2 * remaining_explicit)
                }
                SdRule::Geometric { c, .. } | SdRule::Constant(c) => {
                    // r >= 1: sds never shrink, so the first rule factor bounds all later ones
                    let first = (-k2 * c * c).exp();
                    let d = repeating_decision(&[first]);
                    let d = if d == Membership::Member {
                        Membership::Undetermined
                    } else {
                        d
                    };
                    (d, f64::NEG_INFINITY)
                }
            }
        }
    };
    if decision == Membership::Undetermined && ln_upper < floor.ln() {
        decision = Membership::NonMember;
    }
    if decision == Membership::NonMember {
        ln_lower = f64::NEG_INFINITY;
    }
    PiBounds {
        p,
        lower: ln_lower.exp(),
        upper: ln_upper.exp(),
        ln_lower,
        ln_upper,
        decision,
        curve,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PMuOptions {
    pub p_max: i64,
    pub depth: usize,
    pub floor: f64,
}

impl Default for PMuOptions {
    fn default() -> Self {
        Self {
            p_max: 64,
            depth: 256,
            floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusClassification {
    pub p_mu: u64,
    pub case: Case,
    pub members: Vec<i64>,
    pub pi_values: BTreeMap<i64, PiBounds>,
    pub undetermined: Vec<i64>,
    pub depth_used: usize,
}

impl TorusClassification {
    /// `H_μ = {0, 1/p_μ, ..., (p_μ - 1)/p_μ}` as grid points `j/n`; the whole
    /// grid when `p_μ = 0`.
    pub fn subgroup_on_grid(&self, group: &FiniteGroup) -> Result<Subgroup, TorusError> {
        cyclic_subgroup_of_order(group, self.p_mu)
    }

    /// Every multiple of `p_μ` up to `p_max` was detected and nothing else.
    pub fn lattice_consistent(&self) -> bool {
        self.pi_values.iter().all(|(&p, b)| match b.decision {
            Membership::Member => self.p_mu != 0 && p % self.p_mu as i64 == 0,
            Membership::NonMember => self.p_mu == 0 || p % self.p_mu as i64 != 0,
            Membership::Undetermined => true,
        })
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Decides `Z_μ ∩ [1, p_max]` and returns its generator.
pub fn compute_p_mu(
    noise: &TorusNoiseLaw,
    opts: &PMuOptions,
) -> Result<TorusClassification, TorusError> {
    if opts.p_max < 1 {
        return Err(TorusError::InvalidSpec("p_max must be at least 1".into()));
    }
    let mut pi_values = BTreeMap::new();
    let mut members = Vec::new();
    let mut undetermined = Vec::new();
    for p in 1..=opts.p_max {
        let b = pi_mu_bounds(noise, p, opts.depth, opts.floor);
        match b.decision {
            Membership::Member => members.push(p),
            Membership::Undetermined => undetermined.push(p),
            Membership::NonMember => {}
        }
        pi_values.insert(p, b);
    }
    let p_mu = members.iter().fold(0u64, |g, &p| gcd(g, p as u64));
    let blocking: Vec<i64> = undetermined
        .iter()
        .copied()
        .filter(|&p| p_mu == 0 || !(p as u64).is_multiple_of(p_mu))
        .collect();
    if !blocking.is_empty() {
        return Err(TorusError::Indeterminate {
            undecided: blocking,
        });
    }
    let case = match p_mu {
        0 => Case::A,
        1 => Case::B,
        _ => Case::C,
    };
    Ok(TorusClassification {
        p_mu,
        case,
        members,
        pi_values,
        undetermined,
        depth_used: opts.depth,
    })
}

/// The subgroup of `Z_n` of order `p` (`{j n/p}`), or all of `Z_n` for `p = 0`.
pub fn cyclic_subgroup_of_order(group: &FiniteGroup, p: u64) -> Result<Subgroup, TorusError> {
    let n = group.order();
    if p == 0 {
        return Ok(Subgroup::whole(group));
    }
    if !(n as u64).is_multiple_of(p) {
        return Err(TorusError::GridMismatch { n, p_mu: p });
    }
    let step = n / p as usize;
    Subgroup::new(group, (0..p as usize).map(|j| j * step))
        .map_err(|e| TorusError::InvalidSpec(e.to_string()))
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Grid index of `x` when it lies on the `1/n` grid (or `approximate`).
fn grid_index(x: f64, n: usize, approximate: bool) -> Result<usize, TorusError> {
    let scaled = x.rem_euclid(1.0) * n as f64;
    let nearest = scaled.round();
    if !approximate && (scaled - nearest).abs() > 1e-9 {
        return Err(TorusError::NotRepresentable { x, n });
    }
    Ok((nearest as usize) % n)
}

/// Pushes a torus law onto `Z_n`, grid point `j` standing for `j/n`.
///
/// Atoms and Dirac masses on the grid map exactly. With `approximate`, off-grid
/// atoms round to the nearest grid point and continuous laws are binned into
/// `[(j - 1/2)/n, (j + 1/2)/n)`: each bin receives exactly the mass the law
/// puts there, so the only error is moving mass by at most `1/(2n)`
/// (Wasserstein-1 distance at most `1/(2n)`).
pub fn discretize_to_cyclic(
    spec: &TorusMeasureSpec,
    group: Arc<FiniteGroup>,
    approximate: bool,
) -> Result<Measure, TorusError> {
    spec.validate()?;
    let n = group.order();
    if n == 0 {
        return Err(TorusError::EmptyGrid);
    }
    let to_measure = |w: Vec<f64>| {
        Measure::from_unnormalized(group.clone(), w)
            .map_err(|e| TorusError::InvalidSpec(e.to_string()))
    };
    let nf = n as f64;
    match spec {
        TorusMeasureSpec::Dirac(x) => {
            let mut w = vec![0.0; n];
            w[grid_index(*x, n, approximate)?] = 1.0;
            to_measure(w)
        }
        TorusMeasureSpec::Atoms(points) => {
            let mut w = vec![0.0; n];
            for &(x, mass) in points {
                w[grid_index(x, n, approximate)?] += mass;
            }
            to_measure(w)
        }
        TorusMeasureSpec::WrappedGaussian { mean, sd } => {
            if !approximate {
                return Err(TorusError::NotRepresentable { x: *mean, n });
            }
            let wraps = (8.0 * sd).ceil() as i64 + 1;
            let w = (0..n)
                .map(|j| {
                    let lo = (j as f64 - 0.5) / nf;
                    let hi = (j as f64 + 0.5) / nf;
                    (-wraps..=wraps)
                        .map(|s| {
                            let shift = s as f64 - mean;
                            std_normal_cdf((hi + shift) / sd) - std_normal_cdf((lo + shift) / sd)
                        })
                        .sum::<f64>()
                        .max(0.0)
                })
                .collect();
            to_measure(w)
        }
        TorusMeasureSpec::UniformInterval { a, b } => {
            if !approximate {
                return Err(TorusError::NotRepresentable { x: *a, n });
            }
            let w = (0..n)
                .map(|j| {
                    let lo = (j as f64 - 0.5) / nf;
                    let hi = (j as f64 + 0.5) / nf;
                    // overlap of the bin (and its copy shifted by 1) with [a, b)
                    [0.0, 1.0]
                        .iter()
                        .map(|s| (hi + s).min(*b) - (lo + s).max(*a))
                        .map(|len| len.max(0.0))
                        .sum::<f64>()
                        / (b - a)
                })
                .collect();
            to_measure(w)
        }
    }
}

/// Discretizes every law of a torus noise with a constant or periodic tail.
pub fn discretize_noise(
    noise: &TorusNoiseLaw,
    group: Arc<FiniteGroup>,
    approximate: bool,
) -> Result<crate::limit::NoiseLaw, TorusError> {
    use crate::limit::{NoiseLaw, Tail};
    let conv = |s: &TorusMeasureSpec| discretize_to_cyclic(s, group.clone(), approximate);
    let prefix = noise
        .prefix
        .iter()
        .map(conv)
        .collect::<Result<Vec<_>, _>>()?;
    let tail = match &noise.tail {
        TorusTail::Constant(m) => Tail::Constant(conv(m)?),
        TorusTail::Periodic(ms) => Tail::Periodic(ms.iter().map(conv).collect::<Result<_, _>>()?),
        TorusTail::GaussianSchedule { .. } => {
            return Err(TorusError::InvalidSpec(
                "a Gaussian schedule has no finite description on a grid".into(),
            ))
        }
    };
    NoiseLaw::new(group, prefix, tail).map_err(|e| TorusError::InvalidSpec(e.to_string()))
}
