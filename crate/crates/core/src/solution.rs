//! Sampling solutions of `η_k = ξ_k η_{k-1}` and splitting them as
//! `η_k = φ_k U_k V`.
//!
//! Paths are stored by depth `d = -k`. A path carries noise `ξ_{-d}` for
//! `0 <= d <= L` (the construction depth) and the solution `η_{-d}` on the
//! reporting window `0 <= d <= W`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::group::{
    default_section, left_cosets, max_section, CosetSpace, Element, FiniteGroup, GroupError,
    Section, Subgroup,
};
use crate::limit::{LimitError, LimitResult, NoiseLaw};
use crate::measure::{Cdf, Measure};

/// Environment variable capping the worker threads used for ensembles.
pub const THREADS_ENV: &str = "CONV_LIMIT_THREADS";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(
        "coset of the centered product moved between depth {depth_a} (representative {rep_a}) \
         and depth {depth_b} (representative {rep_b}); increase the depth"
    )]
    CosetNotStabilized {
        depth_a: usize,
        rep_a: Element,
        depth_b: usize,
        rep_b: Element,
    },
    #[error("construction depth {depth} is below the required {required}")]
    DepthTooShallow { depth: usize, required: usize },
    #[error("element {element} is not in the characteristic subgroup")]
    NotInSubgroup { element: Element },
    #[error("path does not match the engine: {0}")]
    PathMismatch(String),
    #[error("grid size {n} is not divisible by p_mu = {p_mu}")]
    GridMismatch { n: usize, p_mu: u64 },
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Independent RNG streams are keyed by `(seed, path, purpose)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Noise = 0,
    /// `η_{-W-1}` for uniform paths, `U_0` for extremal ones.
    Base = 1,
    MixtureV = 2,
}

pub fn stream_rng(seed: u64, path: u64, purpose: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&path.to_le_bytes());
    key[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Uniform,
    Extremal,
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathMeta {
    pub seed: u64,
    pub path_index: u64,
    /// Depth `L` of the noise used to build `φ`.
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    group: Arc<FiniteGroup>,
    xi: Vec<Element>,
    eta: Vec<Element>,
    kind: PathKind,
    meta: PathMeta,
}

impl SolutionPath {
    /// Assembles a path from stored values, checking the defining equation.
    pub fn new(
        group: Arc<FiniteGroup>,
        xi: Vec<Element>,
        eta: Vec<Element>,
        kind: PathKind,
        meta: PathMeta,
    ) -> Result<Self, SolveError> {
        let n = group.order();
        if eta.is_empty() || xi.len() < eta.len() {
            return Err(SolveError::PathMismatch(format!(
                "{} noise values for a window of {} solution values",
                xi.len(),
                eta.len()
            )));
        }
        if let Some(&bad) = xi.iter().chain(&eta).find(|&&x| x >= n) {
            return Err(SolveError::PathMismatch(format!(
                "element {bad} out of range"
            )));
        }
        let path = Self {
            group,
            xi,
            eta,
            kind,
            meta,
        };
        if let Some(d) = path.first_violation() {
            return Err(SolveError::PathMismatch(format!(
                "defining equation fails at k = -{d}"
            )));
        }
        Ok(path)
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    /// `ξ_{-d}` for `d = 0..=L`.
    pub fn xi(&self) -> &[Element] {
        &self.xi
    }

    /// `η_{-d}` for `d = 0..=W`.
    pub fn eta(&self) -> &[Element] {
        &self.eta
    }

    pub fn eta_at(&self, k: i64) -> Option<Element> {
        (k <= 0)
            .then(|| self.eta.get(k.unsigned_abs() as usize).copied())
            .flatten()
    }

    pub fn xi_at(&self, k: i64) -> Option<Element> {
        (k <= 0)
            .then(|| self.xi.get(k.unsigned_abs() as usize).copied())
            .flatten()
    }

    pub fn window(&self) -> usize {
        self.eta.len() - 1
    }

    pub fn noise_depth(&self) -> usize {
        self.xi.len() - 1
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn meta(&self) -> PathMeta {
        self.meta
    }

    fn first_violation(&self) -> Option<usize> {
        (0..self.window()).find(|&d| self.eta[d] != self.group.mul(self.xi[d], self.eta[d + 1]))
    }

    /// `η_k = ξ_k η_{k-1}` for every `-W < k <= 0`.
    pub fn satisfies_equation(&self) -> bool {
        self.first_violation().is_none()
    }
}

/// Left cosets `gH` with a chosen representative per coset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionMap {
    cosets: CosetSpace,
    section: Section,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SectionKind {
    /// Smallest element index in each coset.
    #[default]
    MinIndex,
    MaxIndex,
}

impl SectionMap {
    pub fn new(
        group: &FiniteGroup,
        subgroup: &Subgroup,
        kind: SectionKind,
    ) -> Result<Self, GroupError> {
        let cosets = left_cosets(group, subgroup)?;
        let section = match kind {
            SectionKind::MinIndex => default_section(&cosets),
            SectionKind::MaxIndex => max_section(&cosets),
        };
        Ok(Self { cosets, section })
    }

    pub fn from_parts(cosets: CosetSpace, section: Section) -> Self {
        Self { cosets, section }
    }

    pub fn subgroup(&self) -> &Subgroup {
        self.cosets.subgroup()
    }

    pub fn cosets(&self) -> &CosetSpace {
        &self.cosets
    }

    /// `s(gH)`.
    pub fn rep(&self, g: Element) -> Element {
        self.section.of(&self.cosets, g)
    }

    /// `h(g) = s(gH)^{-1} g`.
    pub fn h_part(&self, group: &FiniteGroup, g: Element) -> Element {
        group.mul(group.inv(self.rep(g)), g)
    }
}

/// `η_k = φ_k U_k V` on the window, `phi[d] = φ_{-d}` and `u[d] = U_{-d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub phi: Vec<Element>,
    pub u: Vec<Element>,
    pub v: Element,
    pub section: Arc<SectionMap>,
}

impl Decomposition {
    /// `φ_k U_k V == η_k` at every window index and every `U_k` lies in `H`.
    pub fn reconstructs(&self, path: &SolutionPath) -> bool {
        let g = path.group();
        self.phi.len() == path.eta.len()
            && self.u.len() == path.eta.len()
            && (0..self.phi.len()).all(|d| {
                self.section.subgroup().contains(self.u[d])
                    && g.mul(g.mul(self.phi[d], self.u[d]), self.v) == path.eta[d]
            })
    }
}

/// Which solutions an ensemble holds.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind {
    Uniform,
    Extremal,
    /// Extremal paths right-multiplied by `V ~ law`.
    Mixture(Measure),
}

impl EnsembleKind {
    pub fn path_kind(&self) -> PathKind {
        match self {
            Self::Uniform => PathKind::Uniform,
            Self::Extremal => PathKind::Extremal,
            Self::Mixture(_) => PathKind::Mixture,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub path_id: u64,
    pub path: SolutionPath,
    /// The decomposition the path was built from (extremal and mixture).
    pub decomposition: Option<Decomposition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub seed: u64,
    pub kind: PathKind,
    pub members: Vec<EnsembleMember>,
    /// Paths whose construction failed, by id.
    pub failures: Vec<(u64, SolveError)>,
}

impl Ensemble {
    pub fn requested(&self) -> usize {
        self.members.len() + self.failures.len()
    }
}

/// Runs `f` on a pool capped by [`THREADS_ENV`] when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    match cap.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Samples and decomposes solutions for one noise law and its limit.
#[derive(Debug, Clone)]
pub struct SolutionEngine {
    noise: NoiseLaw,
    limit: LimitResult,
    depth: usize,
    samplers: Vec<Cdf>,
    prefix_len: usize,
    section: Arc<SectionMap>,
}

impl SolutionEngine {
    /// Smallest construction depth accepted for `limit`.
    pub fn required_depth(limit: &LimitResult) -> usize {
        (2 * limit.depth_used()).max(2 * (limit.window() + 1))
    }

    /// Builds an engine with construction depth `L` (default: the required
    /// minimum) and the min-index section.
    pub fn new(
        noise: &NoiseLaw,
        limit: &LimitResult,
        depth: Option<usize>,
    ) -> Result<Self, SolveError> {
        if noise.group() != limit.group() && **noise.group() != **limit.group() {
            return Err(SolveError::PathMismatch(
                "noise and limit live on different groups".into(),
            ));
        }
        let required = Self::required_depth(limit);
        let depth = depth.unwrap_or(required);
        if depth < required {
            return Err(SolveError::DepthTooShallow { depth, required });
        }
        let mut limit = limit.clone();
        limit.extend_alphas(noise, depth)?;
        let (measures, prefix_len) = noise.distinct_measures();
        let samplers = measures.iter().map(|m| m.cdf()).collect();
        let section = Arc::new(SectionMap::new(
            limit.group(),
            limit.subgroup(),
            SectionKind::MinIndex,
        )?);
        Ok(Self {
            noise: noise.clone(),
            limit,
            depth,
            samplers,
            prefix_len,
            section,
        })
    }

    pub fn with_section(mut self, kind: SectionKind) -> Result<Self, SolveError> {
        self.section = Arc::new(SectionMap::new(
            self.limit.group(),
            self.limit.subgroup(),
            kind,
        )?);
        Ok(self)
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        self.limit.group()
    }

    pub fn noise(&self) -> &NoiseLaw {
        &self.noise
    }

    pub fn limit(&self) -> &LimitResult {
        &self.limit
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn window(&self) -> usize {
        self.limit.window()
    }

    pub fn section(&self) -> &Arc<SectionMap> {
        &self.section
    }

    pub fn subgroup(&self) -> &Subgroup {
        self.limit.subgroup()
    }

    fn sampler(&self, d: usize) -> &Cdf {
        if d < self.prefix_len {
            &self.samplers[d]
        } else {
            let tail = self.samplers.len() - self.prefix_len;
            &self.samplers[self.prefix_len + (d - self.prefix_len) % tail]
        }
    }

    /// Independent draws `ξ_{-d} ~ μ_{-d}` for `d = 0..=depth`.
    pub fn sample_noise<R: rand::Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Vec<Element> {
        (0..=depth).map(|d| self.sampler(d).sample(rng)).collect()
    }

    /// `α_{-d}`; available down to the construction depth.
    pub fn alpha(&self, d: usize) -> Element {
        self.limit.alphas()[d]
    }

    /// `ξ_0 ξ_{-1} ... ξ_{-d}` for `d = 0..xi.len()`.
    fn prefix_products(&self, xi: &[Element]) -> Vec<Element> {
        let g = self.group();
        let mut acc = g.identity();
        xi.iter()
            .map(|&x| {
                acc = g.mul(acc, x);
                acc
            })
            .collect()
    }

    /// `ξ_0 ... ξ_{-d} α_{-d}`, the centered product whose `H`-coset converges.
    pub fn centered_product(&self, xi: &[Element], d: usize) -> Element {
        let g = self.group();
        g.mul(g.product(xi[..=d].iter().copied()), self.alpha(d))
    }

    /// `φ_{-j}` for `j = 0..=window`, using depth `xi.len() - 1`, after
    /// checking the coset against depth `L/2`.
    fn phis(
        &self,
        xi: &[Element],
        window: usize,
        section: &SectionMap,
    ) -> Result<Vec<Element>, SolveError> {
        let g = self.group();
        let l = xi.len() - 1;
        if l > self.depth {
            return Err(SolveError::PathMismatch(format!(
                "path noise depth {l} exceeds the engine depth {}",
                self.depth
            )));
        }
        let required = Self::required_depth(&self.limit).max(2 * (window + 1));
        if l < required {
            return Err(SolveError::DepthTooShallow { depth: l, required });
        }
        let prefix = self.prefix_products(xi);
        let deep = g.mul(prefix[l], self.alpha(l));
        let half = l / 2;
        let shallow = g.mul(prefix[half], self.alpha(half));
        if section.rep(deep) != section.rep(shallow) {
            return Err(SolveError::CosetNotStabilized {
                depth_a: l,
                rep_a: section.rep(deep),
                depth_b: half,
                rep_b: section.rep(shallow),
            });
        }
        // φ_{-j} = s(P_{j-1}^{-1} P_L α_L H) with P_{-1} = e
        Ok((0..=window)
            .map(|j| {
                let before = if j == 0 { g.identity() } else { prefix[j - 1] };
                section.rep(g.mul(g.inv(before), deep))
            })
            .collect())
    }

    fn meta(&self, seed: u64, path_index: u64) -> PathMeta {
        PathMeta {
            seed,
            path_index,
            depth: self.depth,
        }
    }

    /// Solution with `η_{-W-1} ~ ω_G` independent of the noise.
    pub fn uniform_solution(&self, seed: u64, path_index: u64) -> SolutionPath {
        let g = self.group();
        let xi = self.sample_noise(self.depth, &mut stream_rng(seed, path_index, Stream::Noise));
        let w = self.window();
        let mut base_rng = stream_rng(seed, path_index, Stream::Base);
        let mut prev = Measure::haar(g.clone()).sample(&mut base_rng);
        let mut eta = vec![0; w + 1];
        for d in (0..=w).rev() {
            prev = g.mul(xi[d], prev);
            eta[d] = prev;
        }
        SolutionPath {
            group: g.clone(),
            xi,
            eta,
            kind: PathKind::Uniform,
            meta: self.meta(seed, path_index),
        }
    }

    /// Extremal solution `η⁰_k = φ_k U_k` with `U_0` uniform on `H` (or given).
    pub fn extremal_solution(
        &self,
        seed: u64,
        path_index: u64,
        u0: Option<Element>,
    ) -> Result<(SolutionPath, Decomposition), SolveError> {
        let h = self.subgroup();
        let u0 = match u0 {
            Some(u) if !h.contains(u) => return Err(SolveError::NotInSubgroup { element: u }),
            Some(u) => u,
            None => {
                let mut rng = stream_rng(seed, path_index, Stream::Base);
                h.members()[rand::Rng::random_range(&mut rng, 0..h.order())]
            }
        };
        let xi = self.sample_noise(self.depth, &mut stream_rng(seed, path_index, Stream::Noise));
        self.extremal_from_noise(xi, u0, self.meta(seed, path_index))
    }

    /// The extremal path driven by given noise `xi[d] = ξ_{-d}` and `U_0`; a
    /// deterministic function of its inputs.
    pub fn extremal_from_noise(
        &self,
        xi: Vec<Element>,
        u0: Element,
        meta: PathMeta,
    ) -> Result<(SolutionPath, Decomposition), SolveError> {
        let g = self.group();
        if !self.subgroup().contains(u0) {
            return Err(SolveError::NotInSubgroup { element: u0 });
        }
        if let Some(&bad) = xi.iter().find(|&&x| x >= g.order()) {
            return Err(SolveError::PathMismatch(format!(
                "element {bad} out of range"
            )));
        }
        let w = self.window();
        let phi = self.phis(&xi, w, &self.section)?;
        let prefix = self.prefix_products(&xi);
        let top = g.mul(phi[0], u0);
        let mut eta = Vec::with_capacity(w + 1);
        let mut u = Vec::with_capacity(w + 1);
        for j in 0..=w {
            // η⁰_{-j} = (ξ_0 ... ξ_{-j+1})^{-1} φ_0 U_0 and U_{-j} = φ_{-j}^{-1} η⁰_{-j}
            let before = if j == 0 { g.identity() } else { prefix[j - 1] };
            let e = g.mul(g.inv(before), top);
            eta.push(e);
            u.push(g.mul(g.inv(phi[j]), e));
        }
        let path = SolutionPath {
            group: g.clone(),
            xi,
            eta,
            kind: PathKind::Extremal,
            meta,
        };
        let dec = Decomposition {
            phi,
            u,
            v: g.identity(),
            section: self.section.clone(),
        };
        Ok((path, dec))
    }

    /// `η_k = η⁰_k V` with `V ~ v_law` drawn from its own stream.
    pub fn general_solution(
        &self,
        extremal: &(SolutionPath, Decomposition),
        v_law: &Measure,
    ) -> (SolutionPath, Decomposition) {
        let (path, dec) = extremal;
        let meta = path.meta;
        let v = v_law.sample(&mut stream_rng(
            meta.seed,
            meta.path_index,
            Stream::MixtureV,
        ));
        self.mix(path, dec, v)
    }

    /// Right-multiplies an extremal path by a fixed `v`.
    pub fn mix(
        &self,
        path: &SolutionPath,
        dec: &Decomposition,
        v: Element,
    ) -> (SolutionPath, Decomposition) {
        let g = self.group();
        let mixed = SolutionPath {
            eta: path.eta.iter().map(|&e| g.mul(e, v)).collect(),
            kind: PathKind::Mixture,
            ..path.clone()
        };
        let dec = Decomposition {
            v: g.mul(dec.v, v),
            ..dec.clone()
        };
        (mixed, dec)
    }

    /// Recovers `(φ_k, U_k, V)` from a path under `section`, with
    /// `V = s(η_l^{-1} φ_l H)^{-1}` and `U_k = h(η_k V^{-1})`.
    pub fn decompose_path(
        &self,
        path: &SolutionPath,
        section: &Arc<SectionMap>,
    ) -> Result<Decomposition, SolveError> {
        let g = self.group();
        if **path.group() != **g {
            return Err(SolveError::PathMismatch(
                "path lives on a different group".into(),
            ));
        }
        if section.subgroup() != self.subgroup() {
            return Err(SolveError::PathMismatch(
                "section is for a different subgroup".into(),
            ));
        }
        let w = path.window();
        let phi = self.phis(&path.xi, w, section)?;
        let coset_rep = |d: usize| section.rep(g.mul(g.inv(path.eta[d]), phi[d]));
        let deepest = coset_rep(w);
        for d in w - w / 4..w {
            let rep = coset_rep(d);
            if rep != deepest {
                return Err(SolveError::CosetNotStabilized {
                    depth_a: w,
                    rep_a: deepest,
                    depth_b: d,
                    rep_b: rep,
                });
            }
        }
        let v = g.inv(deepest);
        let vi = deepest;
        let u = path
            .eta
            .iter()
            .map(|&e| section.h_part(g, g.mul(e, vi)))
            .collect();
        Ok(Decomposition {
            phi,
            u,
            v,
            section: section.clone(),
        })
    }

    /// Decomposition on `Z_n` read as the `1/n` grid of the torus, using
    /// integer and fractional parts at scale `p_μ`. Agrees with
    /// [`Self::decompose_path`] under the min-index section.
    pub fn torus_decompose(
        &self,
        path: &SolutionPath,
        p_mu: u64,
    ) -> Result<Decomposition, SolveError> {
        let g = self.group();
        let n = g.order();
        if **g != FiniteGroup::cyclic(n)? {
            return Err(SolveError::PathMismatch(
                "torus decomposition needs the cyclic grid group".into(),
            ));
        }
        if p_mu != 0 && !(n as u64).is_multiple_of(p_mu) {
            return Err(SolveError::GridMismatch { n, p_mu });
        }
        // grid points of H are the multiples of m; p_μ = 0 means H = Z_n
        let m = if p_mu == 0 { 1 } else { n / p_mu as usize };
        let h = crate::torus::cyclic_subgroup_of_order(g, p_mu)
            .map_err(|e| SolveError::PathMismatch(e.to_string()))?;
        if &h != self.subgroup() {
            return Err(SolveError::PathMismatch(format!(
                "p_mu = {p_mu} predicts a subgroup other than the limit's"
            )));
        }
        let l = path.noise_depth();
        let w = path.window();
        let required = Self::required_depth(&self.limit).max(2 * (w + 1));
        if l < required || l > self.depth {
            return Err(SolveError::DepthTooShallow { depth: l, required });
        }
        // S[j] = ξ_{-j} + ... + ξ_{-L} + α_{-L}
        let mut sums = vec![0usize; l + 2];
        sums[l + 1] = self.alpha(l) % n;
        for j in (0..=l).rev() {
            sums[j] = (sums[j + 1] + path.xi[j]) % n;
        }
        let half = l / 2;
        let shallow = (path.xi[..=half].iter().sum::<usize>() + self.alpha(half)) % n;
        if sums[0] % m != shallow % m {
            return Err(SolveError::CosetNotStabilized {
                depth_a: l,
                rep_a: sums[0] % m,
                depth_b: half,
                rep_b: shallow % m,
            });
        }
        let phi: Vec<Element> = (0..=w).map(|j| sums[j] % m).collect();
        let v = (n - (phi[w] + n - path.eta[w]) % m) % n;
        let u = (0..=w)
            .map(|j| (2 * n + path.eta[j] - v - phi[j]) % n)
            .collect();
        Ok(Decomposition {
            phi,
            u,
            v,
            section: Arc::new(SectionMap::new(g, &h, SectionKind::MinIndex)?),
        })
    }

    /// Draws `n_paths` solutions in parallel; path `i` uses streams keyed by
    /// `(seed, i)`, so the result does not depend on the thread count.
    pub fn ensemble(&self, kind: &EnsembleKind, n_paths: usize, seed: u64) -> Ensemble {
        let results: Vec<(u64, Result<EnsembleMember, SolveError>)> = with_thread_cap(|| {
            (0..n_paths as u64)
                .into_par_iter()
                .map(|i| (i, self.member(kind, seed, i)))
                .collect()
        });
        let mut members = Vec::with_capacity(n_paths);
        let mut failures = Vec::new();
        for (i, r) in results {
            match r {
                Ok(m) => members.push(m),
                Err(e) => failures.push((i, e)),
            }
        }
        Ensemble {
            seed,
            kind: kind.path_kind(),
            members,
            failures,
        }
    }

    fn member(&self, kind: &EnsembleKind, seed: u64, i: u64) -> Result<EnsembleMember, SolveError> {
        let (path, decomposition) = match kind {
            EnsembleKind::Uniform => (self.uniform_solution(seed, i), None),
            EnsembleKind::Extremal => {
                let (p, d) = self.extremal_solution(seed, i, None)?;
                (p, Some(d))
            }
            EnsembleKind::Mixture(law) => {
                let ext = self.extremal_solution(seed, i, None)?;
                let (p, d) = self.general_solution(&ext, law);
                (p, Some(d))
            }
        };
        Ok(EnsembleMember {
            path_id: i,
            path,
            decomposition,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::{compute_limit, LimitOptions, Tail};
    use crate::measure::tv_distance;

    fn z4() -> Arc<FiniteGroup> {
        Arc::new(FiniteGroup::cyclic(4).unwrap())
    }

    fn engine(noise: &NoiseLaw) -> SolutionEngine {
        let limit = compute_limit(noise, &LimitOptions::default()).unwrap();
        SolutionEngine::new(noise, &limit, None).unwrap()
    }

    fn case_c_z4() -> NoiseLaw {
        let g = z4();
        NoiseLaw::constant(Measure::new(g, vec![0.5, 0.0, 0.5, 0.0]).unwrap())
    }

    fn empirical(g: &Arc<FiniteGroup>, xs: impl Iterator<Item = Element>) -> Measure {
        let mut w = vec![0.0; g.order()];
        for x in xs {
            w[x] += 1.0;
        }
        Measure::from_unnormalized(g.clone(), w).unwrap()
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        use rand::Rng;
        let a: u64 = stream_rng(7, 0, Stream::Noise).random();
        let b: u64 = stream_rng(7, 0, Stream::Noise).random();
        let c: u64 = stream_rng(7, 1, Stream::Noise).random();
        let d: u64 = stream_rng(7, 0, Stream::Base).random();
        assert_eq!(a, b);
        assert!(a != c && a != d && c != d);
    }

    #[test]
    fn dirac_noise_is_deterministic() {
        let g = z4();
        let e = engine(&NoiseLaw::constant(Measure::delta(g, 1).unwrap()));
        let xi = e.sample_noise(30, &mut stream_rng(1, 2, Stream::Noise));
        assert!(xi.iter().all(|&x| x == 1));
    }

    #[test]
    fn haar_noise_sampling_is_uniform() {
        let g = z4();
        let e = engine(&NoiseLaw::constant(Measure::haar(g.clone())));
        let mut rng = stream_rng(3, 0, Stream::Noise);
        let draws = (0..100_000).map(|_| e.sample_noise(0, &mut rng)[0]);
        assert!(tv_distance(&empirical(&g, draws), &Measure::haar(g)) < 0.02);
    }

    #[test]
    fn every_kind_satisfies_the_equation() {
        let noise = case_c_z4();
        let e = engine(&noise);
        let g = e.group().clone();
        for i in 0..50 {
            assert!(e.uniform_solution(9, i).satisfies_equation());
            let ext = e.extremal_solution(9, i, None).unwrap();
            assert!(ext.0.satisfies_equation() && ext.1.reconstructs(&ext.0));
            let (mix, dec) = e.general_solution(&ext, &Measure::haar(g.clone()));
            assert!(mix.satisfies_equation() && dec.reconstructs(&mix));
        }
    }

    #[test]
    fn case_b_extremal_is_noise_measurable() {
        let g = z4();
        let e = engine(&NoiseLaw::constant(Measure::delta(g, 1).unwrap()));
        assert!(e.subgroup().is_trivial());
        let (p1, d1) = e.extremal_solution(5, 0, None).unwrap();
        let (p2, _) = e.extremal_solution(6, 3, None).unwrap();
        assert!(d1.u.iter().all(|&u| u == 0));
        assert_eq!(p1.eta(), p2.eta());
        assert_eq!(p1.eta, d1.phi);
        // λ_0 = δ_0 so η⁰_0 = 0
        assert_eq!(p1.eta[0], 0);
    }

    #[test]
    fn case_c_extremal_marginals_match_lambdas() {
        let noise = case_c_z4();
        let e = engine(&noise);
        let ens = e.ensemble(&EnsembleKind::Extremal, 4000, 11);
        assert!(ens.failures.is_empty());
        let g = e.group().clone();
        for d in 0..=e.window() {
            let emp = empirical(&g, ens.members.iter().map(|m| m.path.eta[d]));
            assert!(
                tv_distance(&emp, e.limit().lambdas().get(d).unwrap()) < 0.05,
                "d = {d}"
            );
        }
        let u0 = empirical(
            &g,
            ens.members
                .iter()
                .map(|m| m.decomposition.as_ref().unwrap().u[0]),
        );
        assert!(tv_distance(&u0, &Measure::haar_subgroup(g, e.subgroup())) < 0.05);
    }

    #[test]
    fn given_u0_must_lie_in_h() {
        let e = engine(&case_c_z4());
        assert!(matches!(
            e.extremal_solution(0, 0, Some(1)),
            Err(SolveError::NotInSubgroup { element: 1 })
        ));
        let (p, d) = e.extremal_solution(0, 0, Some(2)).unwrap();
        assert_eq!(d.u[0], 2);
        assert!(d.reconstructs(&p));
    }

    #[test]
    fn shallow_depth_is_rejected() {
        let noise = case_c_z4();
        let limit = compute_limit(&noise, &LimitOptions::default()).unwrap();
        let required = SolutionEngine::required_depth(&limit);
        assert!(matches!(
            SolutionEngine::new(&noise, &limit, Some(required - 1)),
            Err(SolveError::DepthTooShallow { .. })
        ));
    }

    #[test]
    fn mixing_by_a_point_translates_marginals() {
        let g = z4();
        // Z4 with tail uniform{1,3}: λ_0 = (.5,0,.5,0), λ_{-1} = (0,.5,0,.5)
        let noise = NoiseLaw::constant(Measure::new(g.clone(), vec![0.0, 0.5, 0.0, 0.5]).unwrap());
        let e = engine(&noise);
        let shift = 1;
        let ens = e.ensemble(
            &EnsembleKind::Mixture(Measure::delta(g.clone(), shift).unwrap()),
            4000,
            2,
        );
        for d in 0..=2 {
            let emp = empirical(&g, ens.members.iter().map(|m| m.path.eta[d]));
            let want = e.limit().lambdas()[d].translate_right(shift);
            assert!(tv_distance(&emp, &want) < 0.05);
        }
    }

    #[test]
    fn delta_e_mixture_is_the_extremal_path() {
        let e = engine(&case_c_z4());
        let ext = e.extremal_solution(4, 4, None).unwrap();
        let (mix, dec) = e.general_solution(&ext, &Measure::delta(e.group().clone(), 0).unwrap());
        assert_eq!(mix.eta(), ext.0.eta());
        assert_eq!(dec.v, 0);
    }

    #[test]
    fn round_trip_recovers_v_in_the_section_gauge() {
        let e = engine(&case_c_z4());
        let g = e.group().clone();
        for kind in [SectionKind::MinIndex, SectionKind::MaxIndex] {
            let e = e.clone().with_section(kind).unwrap();
            let sec = e.section().clone();
            for i in 0..40 {
                let ext = e.extremal_solution(8, i, None).unwrap();
                for v_true in g.elements() {
                    let (mix, built) = e.mix(&ext.0, &ext.1, v_true);
                    let dec = e.decompose_path(&mix, &sec).unwrap();
                    assert!(dec.reconstructs(&mix));
                    assert_eq!(dec.phi, built.phi);
                    assert_eq!(dec.v, g.inv(sec.rep(g.inv(v_true))));
                }
            }
        }
    }

    #[test]
    fn reconstruction_is_gauge_invariant() {
        let e = engine(&case_c_z4());
        let min = e.section().clone();
        let max =
            Arc::new(SectionMap::new(e.group(), e.subgroup(), SectionKind::MaxIndex).unwrap());
        for i in 0..30 {
            let p = e.uniform_solution(1, i);
            let a = e.decompose_path(&p, &min).unwrap();
            let b = e.decompose_path(&p, &max).unwrap();
            assert!(a.reconstructs(&p) && b.reconstructs(&p));
            assert_ne!(a.phi, b.phi);
        }
    }

    #[test]
    fn case_a_decomposition_is_degenerate() {
        let g = z4();
        let e = engine(&NoiseLaw::constant(Measure::haar(g)));
        for i in 0..20 {
            let p = e.uniform_solution(2, i);
            let d = e.decompose_path(&p, e.section()).unwrap();
            assert!(d.phi.iter().all(|&x| x == 0));
            assert_eq!(d.v, 0);
            assert_eq!(d.u, p.eta);
        }
    }

    #[test]
    fn torus_and_group_decompositions_agree() {
        let e = engine(&case_c_z4());
        for i in 0..200 {
            let p = e.uniform_solution(21, i);
            let a = e.decompose_path(&p, e.section()).unwrap();
            let b = e.torus_decompose(&p, 2).unwrap();
            assert_eq!((a.phi, a.u, a.v), (b.phi.clone(), b.u.clone(), b.v));
            assert!(b.reconstructs(&p));
        }
        assert!(matches!(
            e.torus_decompose(&e.uniform_solution(0, 0), 3),
            Err(SolveError::GridMismatch { .. })
        ));
    }

    #[test]
    fn torus_decompose_case_b() {
        let g = z4();
        let e = engine(&NoiseLaw::constant(Measure::delta(g, 3).unwrap()));
        let p = e.uniform_solution(0, 1);
        let d = e.torus_decompose(&p, 1).unwrap();
        assert!(d.u.iter().all(|&u| u == 0));
        assert!(d.reconstructs(&p));
    }

    #[test]
    fn wrong_subgroup_fails_to_stabilize() {
        let noise = case_c_z4();
        let limit = compute_limit(&noise, &LimitOptions::default()).unwrap();
        let wrong = limit
            .clone()
            .with_subgroup(Subgroup::trivial(&FiniteGroup::cyclic(4).unwrap()));
        let e = SolutionEngine::new(&noise, &wrong, None).unwrap();
        let ens = e.ensemble(&EnsembleKind::Extremal, 200, 0);
        assert!(ens.failures.len() > 50);
        assert!(ens
            .failures
            .iter()
            .all(|(_, err)| matches!(err, SolveError::CosetNotStabilized { .. })));
    }

    #[test]
    fn prefix_noise_is_respected() {
        let g = z4();
        let d = |x| Measure::delta(g.clone(), x).unwrap();
        let noise = NoiseLaw::new(
            g.clone(),
            vec![d(2), d(3)],
            Tail::Periodic(vec![d(1), d(0)]),
        )
        .unwrap();
        let e = engine(&noise);
        let xi = e.sample_noise(7, &mut stream_rng(0, 0, Stream::Noise));
        assert_eq!(xi, vec![2, 3, 1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn ensembles_ignore_thread_count() {
        let e = engine(&case_c_z4());
        let a = e.ensemble(&EnsembleKind::Extremal, 64, 5);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| e.ensemble(&EnsembleKind::Extremal, 64, 5));
        assert_eq!(a, b);
    }

    #[test]
    fn path_constructor_validates() {
        let g = z4();
        let meta = PathMeta {
            seed: 0,
            path_index: 0,
            depth: 2,
        };
        assert!(SolutionPath::new(
            g.clone(),
            vec![1, 1, 1],
            vec![2, 1],
            PathKind::Uniform,
            meta
        )
        .is_ok());
        assert!(SolutionPath::new(
            g.clone(),
            vec![1, 1, 1],
            vec![2, 2],
            PathKind::Uniform,
            meta
        )
        .is_err());
        assert!(
            SolutionPath::new(g.clone(), vec![1], vec![2, 1], PathKind::Uniform, meta).is_err()
        );
        assert!(SolutionPath::new(g, vec![9, 1], vec![2], PathKind::Uniform, meta).is_err());
    }
}
