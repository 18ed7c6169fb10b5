//! Probability measures on a finite group as dense weight vectors.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::group::{Element, FiniteGroup, Subgroup};

/// Allowed deviation of the total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Default tolerance for stabilizer and idempotent checks on converged measures.
pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("measures live on different groups")]
    GroupMismatch,
    #[error("expected {expected} weights, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("weight {index} is {value}, must be finite and nonnegative")]
    BadWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("element {0} is outside the group")]
    OutOfRange(Element),
    #[error(
        "near-invariant translations are not closed at tol {tol}: {a} and {b} pass but {product} \
         does not; tighten or loosen the tolerance"
    )]
    NotClosedAtTolerance {
        a: Element,
        b: Element,
        product: Element,
        tol: f64,
    },
}

#[derive(Clone, PartialEq)]
pub struct Measure {
    group: Arc<FiniteGroup>,
    weights: Vec<f64>,
}

impl std::fmt::Debug for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Measure").field(&self.weights).finish()
    }
}

impl Measure {
    pub fn new(group: Arc<FiniteGroup>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if weights.len() != group.order() {
            return Err(MeasureError::WrongLength {
                expected: group.order(),
                got: weights.len(),
            });
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(MeasureError::BadWeight { index, value });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(MeasureError::NotNormalized { sum });
        }
        Ok(Self { group, weights })
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn from_unnormalized(
        group: Arc<FiniteGroup>,
        mut weights: Vec<f64>,
    ) -> Result<Self, MeasureError> {
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(MeasureError::NotNormalized { sum });
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(group, weights)
    }

    pub fn delta(group: Arc<FiniteGroup>, g: Element) -> Result<Self, MeasureError> {
        if g >= group.order() {
            return Err(MeasureError::OutOfRange(g));
        }
        let mut weights = vec![0.0; group.order()];
        weights[g] = 1.0;
        Ok(Self { group, weights })
    }

    /// Uniform measure on the whole group.
    pub fn haar(group: Arc<FiniteGroup>) -> Self {
        let n = group.order();
        Self {
            group,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Uniform measure on a subgroup.
    pub fn haar_subgroup(group: Arc<FiniteGroup>, subgroup: &Subgroup) -> Self {
        let mut weights = vec![0.0; group.order()];
        let w = 1.0 / subgroup.order() as f64;
        for &h in subgroup.members() {
            weights[h] = w;
        }
        Self { group, weights }
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, g: Element) -> f64 {
        self.weights[g]
    }

    pub fn support(&self) -> impl Iterator<Item = Element> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(g, _)| g)
    }

    fn same_group(&self, other: &Measure) -> bool {
        Arc::ptr_eq(&self.group, &other.group) || *self.group == *other.group
    }

    fn renormalized(mut self) -> Self {
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            self.weights.iter_mut().for_each(|w| *w /= sum);
        }
        self
    }

    /// Law of `X * Y` for independent `X ~ self`, `Y ~ other`.
    pub fn convolve(&self, other: &Measure) -> Result<Measure, MeasureError> {
        if !self.same_group(other) {
            return Err(MeasureError::GroupMismatch);
        }
        let g = &self.group;
        let mut out = vec![0.0; g.order()];
        for (a, &wa) in self.weights.iter().enumerate() {
            if wa == 0.0 {
                continue;
            }
            for (b, &wb) in other.weights.iter().enumerate() {
                if wb != 0.0 {
                    out[g.mul(a, b)] += wa * wb;
                }
            }
        }
        Ok(Measure {
            group: self.group.clone(),
            weights: out,
        }
        .renormalized())
    }

    /// `self * delta_g`: the law of `X g`.
    pub fn translate_right(&self, g: Element) -> Measure {
        let mut out = vec![0.0; self.weights.len()];
        for (a, &w) in self.weights.iter().enumerate() {
            out[self.group.mul(a, g)] = w;
        }
        Measure {
            group: self.group.clone(),
            weights: out,
        }
    }

    /// `delta_g * self`: the law of `g X`.
    pub fn translate_left(&self, g: Element) -> Measure {
        let mut out = vec![0.0; self.weights.len()];
        for (a, &w) in self.weights.iter().enumerate() {
            out[self.group.mul(g, a)] = w;
        }
        Measure {
            group: self.group.clone(),
            weights: out,
        }
    }

    /// TV distance between `self * delta_g` and `other`, without allocating.
    pub(crate) fn tv_after_right_shift(&self, g: Element, other: &Measure) -> f64 {
        let mut acc = 0.0;
        let n = self.weights.len();
        // (self * delta_g)(x) = self(x g^{-1})
        let gi = self.group.inv(g);
        for x in 0..n {
            acc += (self.weights[self.group.mul(x, gi)] - other.weights[x]).abs();
        }
        0.5 * acc
    }

    /// Cumulative weights in element index order, for repeated sampling.
    pub fn cdf(&self) -> Cdf {
        let mut acc = 0.0;
        let cum = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let last = self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        Cdf { cum, last }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Element {
        self.cdf().sample(rng)
    }
}

/// Inverse-CDF sampler over element index order.
#[derive(Debug, Clone)]
pub struct Cdf {
    cum: Vec<f64>,
    last: Element,
}

impl Cdf {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Element {
        let u: f64 = rng.random();
        // first index whose cumulative weight exceeds u
        let i = self.cum.partition_point(|&c| c <= u);
        i.min(self.last)
    }
}

/// `½ Σ |mu(g) - nu(g)|`.
///
/// # Panics
/// If the measures have different numbers of weights.
pub fn tv_distance(mu: &Measure, nu: &Measure) -> f64 {
    assert_eq!(
        mu.weights.len(),
        nu.weights.len(),
        "measures on different groups"
    );
    0.5 * mu
        .weights
        .iter()
        .zip(&nu.weights)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// `{h : tv(mu * delta_h, mu) <= tol}`, which must be closed under products.
pub fn right_stabilizer(mu: &Measure, tol: f64) -> Result<Subgroup, MeasureError> {
    let g = mu.group();
    let passing: Vec<Element> = g
        .elements()
        .filter(|&h| mu.tv_after_right_shift(h, mu) <= tol)
        .collect();
    let mut in_set = vec![false; g.order()];
    for &h in &passing {
        in_set[h] = true;
    }
    for &a in &passing {
        for &b in &passing {
            let product = g.mul(a, b);
            if !in_set[product] {
                return Err(MeasureError::NotClosedAtTolerance { a, b, product, tol });
            }
        }
    }
    // finite, nonempty (identity passes) and closed under products: a subgroup
    Ok(Subgroup::new(g, passing).expect("closed finite subset is a subgroup"))
}

/// Returns `H` when `mu` is (within `tol`) the Haar measure of the subgroup `H`
/// carried by its support.
pub fn is_haar_idempotent(mu: &Measure, tol: f64) -> Option<Subgroup> {
    let g = mu.group();
    let support: Vec<Element> = g.elements().filter(|&x| mu.weight(x) > tol).collect();
    let h = Subgroup::new(g, support).ok()?;
    let haar = Measure::haar_subgroup(g.clone(), &h);
    if tv_distance(mu, &haar) > tol {
        return None;
    }
    let square = mu.convolve(mu).ok()?;
    (tv_distance(&square, mu) <= tol).then_some(h)
}
