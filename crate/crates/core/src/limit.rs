//! Backward convolution products `μ_k * μ_{k-1} * ... * μ_l`, their centered
//! limits `λ_k`, the centering sequence `α_l` and the characteristic subgroup.
//!
//! Time indices are nonpositive `i64` values `k`; internally everything is
//! stored by depth `d = -k`.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::group::{conjugate_subgroup, normal_closure, Element, FiniteGroup, Subgroup};
use crate::measure::{right_stabilizer, tv_distance, Measure, MeasureError};

/// Ties in shape alignment closer than this are resolved by smallest index.
const WITNESS_TIE_TOL: f64 = 1e-12;

/// Weight differences below this are ties in the max-weight gauge.
const GAUGE_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    #[error("bad index range k = {k}, l = {l} (need 0 >= k >= l)")]
    BadRange { k: i64, l: i64 },
    #[error("invalid noise law: {0}")]
    InvalidNoise(String),
    #[error(
        "shape did not stabilize within depth {max_depth}: last shape distance {last_distance:e}, \
         longest stable run {best_run} of {span}"
    )]
    NoConvergenceAtDepth {
        max_depth: usize,
        last_distance: f64,
        best_run: usize,
        span: usize,
        recent: Vec<f64>,
    },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// The measures used once the explicit prefix is exhausted.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    Constant(Measure),
    /// With prefix length `m`, depth `d >= m` uses `mus[(d - m) % mus.len()]`.
    Periodic(Vec<Measure>),
}

/// A finitely specified noise law `(μ_k : k <= 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLaw {
    group: Arc<FiniteGroup>,
    prefix: Vec<Measure>,
    tail: Tail,
}

impl NoiseLaw {
    /// `prefix[d]` is `μ_{-d}`; the tail covers every deeper index.
    pub fn new(
        group: Arc<FiniteGroup>,
        prefix: Vec<Measure>,
        tail: Tail,
    ) -> Result<Self, LimitError> {
        let tail_measures: &[Measure] = match &tail {
            Tail::Constant(m) => std::slice::from_ref(m),
            Tail::Periodic(ms) => ms,
        };
        if tail_measures.is_empty() {
            return Err(LimitError::InvalidNoise("periodic tail is empty".into()));
        }
        for m in prefix.iter().chain(tail_measures) {
            if **m.group() != *group {
                return Err(LimitError::Measure(MeasureError::GroupMismatch));
            }
        }
        Ok(Self {
            group,
            prefix,
            tail,
        })
    }

    pub fn constant(mu: Measure) -> Self {
        Self {
            group: mu.group().clone(),
            prefix: Vec::new(),
            tail: Tail::Constant(mu),
        }
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn prefix(&self) -> &[Measure] {
        &self.prefix
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    /// `μ_{-depth}`.
    pub fn at_depth(&self, depth: usize) -> &Measure {
        if let Some(m) = self.prefix.get(depth) {
            return m;
        }
        match &self.tail {
            Tail::Constant(m) => m,
            Tail::Periodic(ms) => &ms[(depth - self.prefix.len()) % ms.len()],
        }
    }

    /// `μ_k` for `k <= 0`.
    pub fn at(&self, k: i64) -> &Measure {
        assert!(k <= 0, "noise index {k} is positive");
        self.at_depth(k.unsigned_abs() as usize)
    }

    /// Distinct measures in the law, for building samplers once.
    pub(crate) fn distinct_measures(&self) -> (Vec<&Measure>, usize) {
        let tail: Vec<&Measure> = match &self.tail {
            Tail::Constant(m) => vec![m],
            Tail::Periodic(ms) => ms.iter().collect(),
        };
        let m = self.prefix.len();
        (self.prefix.iter().chain(tail).collect(), m)
    }
}

/// `μ_{-from} * μ_{-from-1} * ... * μ_{-to}` for depths `from <= to`.
fn backward_product(noise: &NoiseLaw, from: usize, to: usize) -> Result<Measure, LimitError> {
    let mut acc = noise.at_depth(to).clone();
    for d in (from..to).rev() {
        acc = noise.at_depth(d).convolve(&acc)?;
    }
    Ok(acc)
}

/// `μ_{k,l} = μ_k * μ_{k-1} * ... * μ_l`.
pub fn partial_product(noise: &NoiseLaw, k: i64, l: i64) -> Result<Measure, LimitError> {
    if k > 0 || l > k {
        return Err(LimitError::BadRange { k, l });
    }
    backward_product(noise, k.unsigned_abs() as usize, l.unsigned_abs() as usize)
}

/// `min_g tv(mu * δ_g, nu)` with the smallest-index minimizing `g`.
pub fn shape_distance(mu: &Measure, nu: &Measure) -> (f64, Element) {
    let dists: Vec<f64> = mu
        .group()
        .elements()
        .map(|g| mu.tv_after_right_shift(g, nu))
        .collect();
    let best = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let witness = dists
        .iter()
        .position(|&d| d <= best + WITNESS_TIE_TOL)
        .unwrap_or(0);
    (best, witness)
}

/// Which right translate of the limiting shape is reported as `λ_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// Lexicographically largest weight vector among all right translates,
    /// which puts a maximal-weight element at index 0.
    MaxWeight,
    /// Moves the smallest-index element of the support to the identity.
    SupportMin,
}

fn gauge_shift(nu: &Measure, gauge: Gauge) -> Element {
    let g = nu.group();
    match gauge {
        Gauge::SupportMin => {
            let a = g
                .elements()
                .find(|&x| nu.weight(x) > WITNESS_TIE_TOL)
                .unwrap_or(g.identity());
            g.inv(a)
        }
        Gauge::MaxWeight => {
            let mut best = g.identity();
            let mut best_w = nu.translate_right(best);
            for cand in g.elements() {
                let w = nu.translate_right(cand);
                let first_diff = w
                    .weights()
                    .iter()
                    .zip(best_w.weights())
                    .find(|(a, b)| (*a - *b).abs() > GAUGE_TIE_TOL);
                if let Some((a, b)) = first_diff {
                    if a > b {
                        best = cand;
                        best_w = w;
                    }
                }
            }
            best
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Case {
    /// Uniqueness in law: `H = G`.
    A,
    /// A strong solution exists: `H = {e}`.
    B,
    /// Neither.
    C,
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Case::A => "A",
            Case::B => "B",
            Case::C => "C",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    pub eps_shape: f64,
    pub max_depth: usize,
    /// Report `λ_k` for `-window <= k <= 0`.
    pub window: usize,
    /// Consecutive steps the shape must stay within `eps_shape`.
    pub span: usize,
    pub gauge: Gauge,
    pub stabilizer_tol: f64,
    /// Precompute `α_l` at least down to this depth.
    pub alpha_depth: usize,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            eps_shape: 1e-9,
            max_depth: 20_000,
            window: 8,
            span: 25,
            gauge: Gauge::MaxWeight,
            stabilizer_tol: 1e-6,
            alpha_depth: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// Largest shape distance to the anchor over the confirmation span.
    pub shape_stabilization: f64,
    /// `max_k tv(μ_k * λ_{k-1}, λ_k)` over the window.
    pub conv_eq: f64,
    /// `tv(δ_{α_L^{-1}} * λ_{L-1}, ω_H)` at the stopping depth.
    pub haar_check: f64,
}

#[derive(Debug, Clone)]
pub struct LimitResult {
    group: Arc<FiniteGroup>,
    lambdas: Vec<Measure>,
    alphas: Vec<Element>,
    subgroup: Subgroup,
    case: Case,
    depth_used: usize,
    residuals: Residuals,
    /// Shape distance between consecutive `μ_{0,-d}`, for `d >= 1`.
    shape_curve: Vec<f64>,
    gauge: Gauge,
    chain_tip: Measure,
}

impl LimitResult {
    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    /// `λ_k` for `k` in the reporting window.
    pub fn lambda(&self, k: i64) -> Option<&Measure> {
        if k > 0 {
            return None;
        }
        self.lambdas.get(k.unsigned_abs() as usize)
    }

    pub fn lambdas(&self) -> &[Measure] {
        &self.lambdas
    }

    pub fn window(&self) -> usize {
        self.lambdas.len() - 1
    }

    /// `α_l`, if computed down to depth `-l`.
    pub fn alpha(&self, l: i64) -> Option<Element> {
        if l > 0 {
            return None;
        }
        self.alphas.get(l.unsigned_abs() as usize).copied()
    }

    pub fn alphas(&self) -> &[Element] {
        &self.alphas
    }

    pub fn subgroup(&self) -> &Subgroup {
        &self.subgroup
    }

    pub fn case(&self) -> Case {
        self.case
    }

    pub fn depth_used(&self) -> usize {
        self.depth_used
    }

    pub fn residuals(&self) -> Residuals {
        self.residuals
    }

    pub fn shape_curve(&self) -> &[f64] {
        &self.shape_curve
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    /// Replaces the characteristic subgroup, e.g. for negative controls.
    pub fn with_subgroup(mut self, subgroup: Subgroup) -> Self {
        self.case = classify_subgroup(&self.group, &subgroup);
        self.subgroup = subgroup;
        self
    }

    /// Extends the centering sequence down to `depth` by continuing
    /// `μ_{0,l}` and aligning each product with `λ_0`.
    pub fn extend_alphas(&mut self, noise: &NoiseLaw, depth: usize) -> Result<(), LimitError> {
        while self.alphas.len() <= depth {
            let d = self.alphas.len();
            self.chain_tip = self.chain_tip.convolve(noise.at_depth(d))?;
            self.alphas
                .push(shape_distance(&self.chain_tip, &self.lambdas[0]).1);
        }
        Ok(())
    }
}

fn classify_subgroup(group: &FiniteGroup, h: &Subgroup) -> Case {
    if h.is_whole(group) {
        Case::A
    } else if h.is_trivial() {
        Case::B
    } else {
        Case::C
    }
}

/// Trichotomy label from the characteristic subgroup.
pub fn classify_trichotomy(res: &LimitResult) -> Case {
    classify_subgroup(&res.group, &res.subgroup)
}

/// `H^strong`: the normal closure of the characteristic subgroup.
pub fn strong_subgroup(group: &FiniteGroup, h_mu: &Subgroup) -> Subgroup {
    normal_closure(group, h_mu)
}

/// Computes the centered limits of the backward products.
///
/// Walks `ν_d = μ_{0,-d}` one factor at a time. The run stops at the first
/// depth `L` whose shape stayed within `eps_shape` of an anchor for `span`
/// consecutive steps. `λ_0 = ν_L * δ_α` with `α` fixed by the gauge,
/// `λ_k = μ_{k,-L} * δ_α` on the window, and `H` is the right stabilizer of
/// the deeper law `λ_{-L-1}`, estimated by a second run of the same length.
pub fn compute_limit(noise: &NoiseLaw, opts: &LimitOptions) -> Result<LimitResult, LimitError> {
    let group = noise.group().clone();
    let mut chain = vec![noise.at_depth(0).clone()];
    let mut shape_curve = Vec::new();
    let mut anchor = 0usize;
    let mut run = 0usize;
    let mut best_run = 0usize;
    let mut run_max = 0.0f64;
    loop {
        let d = chain.len();
        if d > opts.max_depth {
            let k = shape_curve.len().saturating_sub(opts.span);
            return Err(LimitError::NoConvergenceAtDepth {
                max_depth: opts.max_depth,
                last_distance: shape_curve.last().copied().unwrap_or(f64::NAN),
                best_run,
                span: opts.span,
                recent: shape_curve[k..].to_vec(),
            });
        }
        let next = chain[d - 1].convolve(noise.at_depth(d))?;
        shape_curve.push(shape_distance(&next, &chain[d - 1]).0);
        let to_anchor = shape_distance(&next, &chain[anchor]).0;
        chain.push(next);
        if to_anchor < opts.eps_shape {
            run += 1;
            run_max = run_max.max(to_anchor);
            best_run = best_run.max(run);
            if run >= opts.span && d >= opts.window {
                break;
            }
        } else {
            anchor = d;
            run = 0;
            run_max = 0.0;
        }
    }
    let depth = chain.len() - 1;

    let shift = gauge_shift(&chain[depth], opts.gauge);
    let lambda0 = chain[depth].translate_right(shift);

    // R_d = μ_{-d} * ... * μ_{-L} for d = L down to 1
    let mut lambdas = vec![lambda0.clone(); opts.window + 1];
    let mut r = noise.at_depth(depth).clone();
    for d in (1..=depth).rev() {
        if d < depth {
            r = noise.at_depth(d).convolve(&r)?;
        }
        if d <= opts.window {
            lambdas[d] = r.translate_right(shift);
        }
    }

    let mut conv_eq = 0.0f64;
    for d in 0..opts.window {
        let rhs = noise.at_depth(d).convolve(&lambdas[d + 1])?;
        conv_eq = conv_eq.max(tv_distance(&rhs, &lambdas[d]));
    }

    // centering sequence, continued past the second run used for λ_{-L-1}
    let deep = 2 * depth + 1;
    let horizon = deep.max(opts.alpha_depth);
    let mut alphas: Vec<Element> = chain
        .iter()
        .map(|nu| shape_distance(nu, &lambda0).1)
        .collect();
    let mut tip = chain.pop().expect("chain is nonempty");
    drop(chain);
    for d in depth + 1..=horizon {
        tip = tip.convolve(noise.at_depth(d))?;
        alphas.push(shape_distance(&tip, &lambda0).1);
    }

    let deep_lambda = backward_product(noise, depth + 1, deep)?.translate_right(alphas[deep]);
    let subgroup = right_stabilizer(&deep_lambda, opts.stabilizer_tol)?;
    let haar_est = deep_lambda.translate_left(group.inv(alphas[depth]));
    let haar_check = tv_distance(&haar_est, &Measure::haar_subgroup(group.clone(), &subgroup));

    let case = classify_subgroup(&group, &subgroup);
    Ok(LimitResult {
        group,
        lambdas,
        alphas,
        subgroup,
        case,
        depth_used: depth,
        residuals: Residuals {
            shape_stabilization: run_max,
            conv_eq,
            haar_check,
        },
        shape_curve,
        gauge: opts.gauge,
        chain_tip: tip,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugacyCheck {
    pub ok: bool,
    pub witness: Option<Element>,
    /// `tv(λ̃_0, λ_0 * δ_g)` at the witness.
    pub tv: f64,
}

/// Runs [`compute_limit`] under two gauges and confirmation spans and looks
/// for `g` with `λ̃_0 = λ_0 * δ_g` and `H̃ = g^{-1} H g`.
pub fn verify_conjugacy_uniqueness(
    noise: &NoiseLaw,
    opts: &LimitOptions,
) -> Result<ConjugacyCheck, LimitError> {
    let first = compute_limit(
        noise,
        &LimitOptions {
            gauge: Gauge::MaxWeight,
            ..*opts
        },
    )?;
    let second = compute_limit(
        noise,
        &LimitOptions {
            gauge: Gauge::SupportMin,
            span: opts.span + 12,
            ..*opts
        },
    )?;
    let tol = 10.0 * opts.eps_shape;
    let (l0, l1) = (&first.lambdas[0], &second.lambdas[0]);
    let found = first.group.elements().find(|&g| {
        l0.tv_after_right_shift(g, l1) <= tol
            && conjugate_subgroup(&first.group, &first.subgroup, g) == second.subgroup
    });
    Ok(match found {
        Some(g) => ConjugacyCheck {
            ok: true,
            witness: Some(g),
            tv: l0.tv_after_right_shift(g, l1),
        },
        None => ConjugacyCheck {
            ok: false,
            witness: None,
            tv: shape_distance(l0, l1).0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::FiniteGroup;

    fn z4() -> Arc<FiniteGroup> {
        Arc::new(FiniteGroup::cyclic(4).unwrap())
    }

    fn w(g: &Arc<FiniteGroup>, weights: &[f64]) -> Measure {
        Measure::new(g.clone(), weights.to_vec()).unwrap()
    }

    #[test]
    fn noise_indexing() {
        let g = z4();
        let d = |x| Measure::delta(g.clone(), x).unwrap();
        let noise = NoiseLaw::new(
            g.clone(),
            vec![d(0), d(1)],
            Tail::Periodic(vec![d(2), d(3)]),
        )
        .unwrap();
        assert_eq!(noise.at(0), &d(0));
        assert_eq!(noise.at(-1), &d(1));
        assert_eq!(noise.at(-2), &d(2));
        assert_eq!(noise.at(-3), &d(3));
        assert_eq!(noise.at(-4), &d(2));
        assert!(NoiseLaw::new(g.clone(), vec![], Tail::Periodic(vec![])).is_err());
        let s3 = Arc::new(FiniteGroup::symmetric(3).unwrap());
        assert!(NoiseLaw::new(g.clone(), vec![Measure::haar(s3)], Tail::Constant(d(0))).is_err());
    }

    #[test]
    fn partial_products() {
        let g = z4();
        let noise = NoiseLaw::constant(Measure::delta(g.clone(), 1).unwrap());
        assert_eq!(partial_product(&noise, -2, -2).unwrap(), *noise.at(-2));
        assert_eq!(
            partial_product(&noise, 0, -3).unwrap(),
            Measure::delta(g.clone(), 0).unwrap()
        );
        assert_eq!(
            partial_product(&noise, 0, -2).unwrap(),
            Measure::delta(g.clone(), 3).unwrap()
        );
        let haar = NoiseLaw::constant(Measure::haar(g.clone()));
        assert_eq!(partial_product(&haar, -1, -6).unwrap(), Measure::haar(g));
        assert!(matches!(
            partial_product(&noise, -3, -1),
            Err(LimitError::BadRange { .. })
        ));
        assert!(matches!(
            partial_product(&noise, 1, -1),
            Err(LimitError::BadRange { .. })
        ));
    }

    #[test]
    fn splitting_identity() {
        let s3 = Arc::new(FiniteGroup::symmetric(3).unwrap());
        let a = w(&s3, &[0.1, 0.2, 0.3, 0.1, 0.2, 0.1]);
        let b = w(&s3, &[0.0, 0.5, 0.0, 0.0, 0.5, 0.0]);
        let c = w(&s3, &[0.3, 0.0, 0.0, 0.7, 0.0, 0.0]);
        let noise = NoiseLaw::new(s3, vec![a, b.clone()], Tail::Periodic(vec![c, b])).unwrap();
        for k in -5i64..=0 {
            for l in (k - 6)..=k {
                for j in l..k {
                    let whole = partial_product(&noise, k, l).unwrap();
                    let split = partial_product(&noise, k, j + 1)
                        .unwrap()
                        .convolve(&partial_product(&noise, j, l).unwrap())
                        .unwrap();
                    assert!(tv_distance(&whole, &split) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shape_distances() {
        let g = z4();
        let mu = w(&g, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(shape_distance(&mu, &mu.translate_right(3)), (0.0, 3));
        let d = |x| Measure::delta(g.clone(), x).unwrap();
        assert_eq!(shape_distance(&d(1), &d(3)), (0.0, 2));
        let a = w(&g, &[0.5, 0.5, 0.0, 0.0]);
        let b = w(&g, &[0.0, 0.0, 0.5, 0.5]);
        assert_eq!(shape_distance(&a, &b), (0.0, 2));
        // stabilizer ambiguity: smallest valid witness
        let h = w(&g, &[0.5, 0.0, 0.5, 0.0]);
        assert_eq!(shape_distance(&h, &h.translate_right(1)), (0.0, 1));
    }

    #[test]
    fn haar_tail_is_case_a() {
        let g = z4();
        let res = compute_limit(
            &NoiseLaw::constant(Measure::haar(g.clone())),
            &LimitOptions::default(),
        )
        .unwrap();
        assert_eq!(res.case(), Case::A);
        assert_eq!(res.subgroup(), &Subgroup::whole(&g));
        for l in res.lambdas() {
            assert!(tv_distance(l, &Measure::haar(g.clone())) < 1e-15);
        }
    }

    #[test]
    fn dirac_tail_is_case_b() {
        let g = z4();
        let noise = NoiseLaw::constant(Measure::delta(g.clone(), 1).unwrap());
        let res = compute_limit(&noise, &LimitOptions::default()).unwrap();
        assert_eq!(res.case(), Case::B);
        assert!(res.subgroup().is_trivial());
        // max-weight gauge puts λ_0 at the identity; λ_k = δ_{k}
        for k in -8i64..=0 {
            let expect = (k.rem_euclid(4)) as usize;
            assert_eq!(
                res.lambda(k).unwrap(),
                &Measure::delta(g.clone(), expect).unwrap()
            );
        }
        // μ_{0,l} = δ_{1-l}, so α_l = l - 1 mod 4 compensates exactly
        for l in -40i64..=0 {
            assert_eq!(res.alpha(l).unwrap(), (l - 1).rem_euclid(4) as usize);
        }
        assert!(res.residuals().haar_check < 1e-15);
    }

    #[test]
    fn idempotent_tail_is_case_c() {
        let g = z4();
        let h = Subgroup::new(&g, [0, 2]).unwrap();
        let noise = NoiseLaw::constant(Measure::haar_subgroup(g.clone(), &h));
        let res = compute_limit(&noise, &LimitOptions::default()).unwrap();
        assert_eq!(res.case(), Case::C);
        assert_eq!(res.subgroup(), &h);
        for l in res.lambdas() {
            assert_eq!(l, &Measure::haar_subgroup(g.clone(), &h));
        }
        assert_eq!(classify_trichotomy(&res), Case::C);
    }

    #[test]
    fn odd_coset_noise_needs_centering() {
        // uniform on {1,3}: products alternate between the two cosets of {0,2}
        let g = z4();
        let noise = NoiseLaw::constant(w(&g, &[0.0, 0.5, 0.0, 0.5]));
        let res = compute_limit(&noise, &LimitOptions::default()).unwrap();
        assert_eq!(res.subgroup().members(), &[0, 2]);
        assert_eq!(res.lambda(0).unwrap().weights(), &[0.5, 0.0, 0.5, 0.0]);
        assert_eq!(res.lambda(-1).unwrap().weights(), &[0.0, 0.5, 0.0, 0.5]);
        let conj = verify_conjugacy_uniqueness(&noise, &LimitOptions::default()).unwrap();
        assert!(conj.ok);
    }

    #[test]
    fn mixing_noise_converges_to_haar() {
        let g = z4();
        let noise = NoiseLaw::constant(w(&g, &[0.5, 0.5, 0.0, 0.0]));
        let res = compute_limit(&noise, &LimitOptions::default()).unwrap();
        assert_eq!(res.case(), Case::A);
        assert!(tv_distance(res.lambda(0).unwrap(), &Measure::haar(g)) < 1e-8);
        assert!(res.residuals().conv_eq <= 1e-8);
    }

    #[test]
    fn s3_transposition_tail() {
        let s3 = Arc::new(FiniteGroup::symmetric(3).unwrap());
        let t12 = s3.element_by_label("(12)").unwrap();
        let h = Subgroup::new(&s3, [0, t12]).unwrap();
        let noise = NoiseLaw::constant(Measure::haar_subgroup(s3.clone(), &h));
        let res = compute_limit(&noise, &LimitOptions::default()).unwrap();
        assert_eq!(res.case(), Case::C);
        assert_eq!(res.subgroup(), &h);
        assert_eq!(strong_subgroup(&s3, res.subgroup()), Subgroup::whole(&s3));
    }

    #[test]
    fn absorbing_prefix_does_not_hide_the_tail() {
        // μ_0 = ω_G makes λ_0 Haar, but the tail of point masses gives H = {e}
        let g = z4();
        let noise = NoiseLaw::new(
            g.clone(),
            vec![Measure::haar(g.clone())],
            Tail::Constant(Measure::delta(g.clone(), 1).unwrap()),
        )
        .unwrap();
        let res = compute_limit(&noise, &LimitOptions::default()).unwrap();
        assert_eq!(res.case(), Case::B);
        assert_eq!(
            right_stabilizer(res.lambda(0).unwrap(), 1e-6).unwrap(),
            Subgroup::whole(&g)
        );
        assert!(right_stabilizer(res.lambda(-1).unwrap(), 1e-6)
            .unwrap()
            .is_trivial());
    }

    #[test]
    fn subgroup_is_stabilizer_of_every_reported_lambda() {
        let s4 = Arc::new(FiniteGroup::symmetric(4).unwrap());
        let t12 = s4.element_by_label("(12)").unwrap();
        let t34 = s4.element_by_label("(34)").unwrap();
        // δ_(34) * ω_<(12)>: (34) normalizes <(12)>, so H = <(12)>
        let mut weights = vec![0.0; 24];
        weights[t34] = 0.5;
        weights[s4.mul(t34, t12)] = 0.5;
        let noise = NoiseLaw::constant(w(&s4, &weights));
        let res = compute_limit(&noise, &LimitOptions::default()).unwrap();
        assert_eq!(res.subgroup().members(), &[0, t12]);
        for l in res.lambdas() {
            assert_eq!(&right_stabilizer(l, 1e-6).unwrap(), res.subgroup());
        }
        assert!(
            verify_conjugacy_uniqueness(&noise, &LimitOptions::default())
                .unwrap()
                .ok
        );

        // in S3 the same construction spreads over the whole group
        let s3 = Arc::new(FiniteGroup::symmetric(3).unwrap());
        let t12 = s3.element_by_label("(12)").unwrap();
        let c3 = s3.element_by_label("(123)").unwrap();
        let mut weights = vec![0.0; 6];
        weights[c3] = 0.5;
        weights[s3.mul(c3, t12)] = 0.5;
        let res = compute_limit(
            &NoiseLaw::constant(w(&s3, &weights)),
            &LimitOptions::default(),
        )
        .unwrap();
        assert_eq!(res.case(), Case::A);
    }

    #[test]
    fn idempotent_constant_tail_is_a_one_step_fixed_point() {
        let s4 = Arc::new(FiniteGroup::symmetric(4).unwrap());
        for h in crate::group::enumerate_subgroups(&s4, 128).unwrap() {
            let mu = Measure::haar_subgroup(s4.clone(), &h);
            let found = crate::measure::is_haar_idempotent(&mu, 1e-9).unwrap();
            let res = compute_limit(&NoiseLaw::constant(mu), &LimitOptions::default()).unwrap();
            assert_eq!(res.subgroup(), &found);
            assert!(found.is_subset_of(&right_stabilizer(res.lambda(0).unwrap(), 1e-9).unwrap()));
        }
    }

    #[test]
    fn max_depth_is_reported() {
        // mixes at rate 0.8 per step; eps = 1e-9 needs about 90 steps
        let g = Arc::new(FiniteGroup::cyclic(5).unwrap());
        let noise = NoiseLaw::constant(w(&g, &[0.5, 0.5, 0.0, 0.0, 0.0]));
        let opts = LimitOptions {
            max_depth: 30,
            ..Default::default()
        };
        match compute_limit(&noise, &opts) {
            Err(LimitError::NoConvergenceAtDepth {
                max_depth: 30,
                recent,
                ..
            }) => {
                assert_eq!(recent.len(), 25)
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(compute_limit(&noise, &LimitOptions::default()).is_ok());
    }

    #[test]
    fn extend_alphas_matches_precomputed() {
        let g = z4();
        let noise = NoiseLaw::constant(Measure::delta(g.clone(), 1).unwrap());
        let opts = LimitOptions {
            alpha_depth: 300,
            ..Default::default()
        };
        let full = compute_limit(&noise, &opts).unwrap();
        let mut lazy = compute_limit(&noise, &LimitOptions::default()).unwrap();
        lazy.extend_alphas(&noise, 300).unwrap();
        assert_eq!(full.alphas(), lazy.alphas());
    }

    #[test]
    fn gauges_differ_but_are_conjugate() {
        let g = Arc::new(FiniteGroup::cyclic(6).unwrap());
        let noise = NoiseLaw::constant(w(&g, &[0.0, 0.0, 0.0, 0.3, 0.0, 0.7]));
        let a = compute_limit(&noise, &LimitOptions::default()).unwrap();
        let b = compute_limit(
            &noise,
            &LimitOptions {
                gauge: Gauge::SupportMin,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.subgroup(), b.subgroup());
        let check = verify_conjugacy_uniqueness(&noise, &LimitOptions::default()).unwrap();
        assert!(check.ok);
        let g0 = check.witness.unwrap();
        assert!(
            a.lambda(0)
                .unwrap()
                .tv_after_right_shift(g0, b.lambda(0).unwrap())
                < 1e-8
        );
    }
}
