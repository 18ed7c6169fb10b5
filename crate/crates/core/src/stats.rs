//! Empirical laws, Pearson chi-square tests and the ensemble verification
//! battery.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::group::{Element, FiniteGroup, Subgroup};
use crate::limit::{Case, LimitResult};
use crate::measure::{tv_distance, Measure};
use crate::solution::{stream_rng, Ensemble, PathKind, SolutionEngine, SolveError, Stream};

/// Cells with expected count below this are pooled in independence tests.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no samples")]
    EmptySample,
    #[error("sample {element} lies outside the tested support")]
    OutOfSupport { element: Element },
    #[error("{got} usable paths, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Normalized counts.
pub fn empirical_law(group: &Arc<FiniteGroup>, samples: &[Element]) -> Result<Measure, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut w = vec![0.0; group.order()];
    for &x in samples {
        if x >= w.len() {
            return Err(StatsError::OutOfSupport { element: x });
        }
        w[x] += 1.0;
    }
    let n = samples.len() as f64;
    w.iter_mut().for_each(|c| *c /= n);
    Ok(Measure::from_unnormalized(group.clone(), w).expect("counts are a valid law"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Nothing to test: fewer than two categories in some margin.
    pub degenerate: bool,
}

impl ChiSquare {
    fn degenerate() -> Self {
        Self {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
            degenerate: true,
        }
    }
}

/// `P(X >= x)` for `X ~ χ²(df)`.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if df == 0 || x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Pearson test of uniformity on the cells of `support`.
pub fn chi_square_uniformity(
    samples: &[Element],
    support: &Subgroup,
) -> Result<ChiSquare, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let cells = support.members();
    let mut counts = vec![0usize; cells.len()];
    for &x in samples {
        match cells.binary_search(&x) {
            Ok(i) => counts[i] += 1,
            Err(_) => return Err(StatsError::OutOfSupport { element: x }),
        }
    }
    if cells.len() == 1 {
        return Ok(ChiSquare::degenerate());
    }
    let expected = samples.len() as f64 / cells.len() as f64;
    let statistic = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let df = cells.len() - 1;
    Ok(ChiSquare {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
        degenerate: false,
    })
}

/// Pearson test of independence for a two-way table of paired labels.
///
/// Rows and columns are the distinct first and second coordinates in
/// increasing order. While the smallest expected count is below
/// [`MIN_EXPECTED`], the category with the smallest marginal total (rows
/// first on ties, then lower position) is merged into the next smallest
/// category of the same margin. A table left with one row or one column is
/// reported as degenerate with `p = 1`.
pub fn chi_square_independence(pairs: &[(Element, Element)]) -> Result<ChiSquare, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut rows: BTreeMap<Element, usize> = BTreeMap::new();
    let mut cols: BTreeMap<Element, usize> = BTreeMap::new();
    for &(a, b) in pairs {
        let r = rows.len();
        rows.entry(a).or_insert(r);
        let c = cols.len();
        cols.entry(b).or_insert(c);
    }
    // positions follow sorted label order
    let row_pos: BTreeMap<Element, usize> = rows.keys().enumerate().map(|(i, &k)| (k, i)).collect();
    let col_pos: BTreeMap<Element, usize> = cols.keys().enumerate().map(|(i, &k)| (k, i)).collect();
    let mut table = vec![vec![0.0f64; col_pos.len()]; row_pos.len()];
    for &(a, b) in pairs {
        table[row_pos[&a]][col_pos[&b]] += 1.0;
    }
    let n = pairs.len() as f64;
    loop {
        let r = table.len();
        let c = table[0].len();
        if r < 2 || c < 2 {
            return Ok(ChiSquare::degenerate());
        }
        let row_tot: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
        let col_tot: Vec<f64> = (0..c)
            .map(|j| table.iter().map(|row| row[j]).sum())
            .collect();
        let (ri, rmin) = smallest(&row_tot);
        let (ci, cmin) = smallest(&col_tot);
        if rmin * cmin / n >= MIN_EXPECTED {
            let mut statistic = 0.0;
            for i in 0..r {
                for j in 0..c {
                    let e = row_tot[i] * col_tot[j] / n;
                    statistic += (table[i][j] - e).powi(2) / e;
                }
            }
            let df = (r - 1) * (c - 1);
            return Ok(ChiSquare {
                statistic,
                df,
                p_value: chi_square_sf(statistic, df),
                degenerate: false,
            });
        }
        if rmin <= cmin {
            let into = next_smallest(&row_tot, ri);
            let moved = table.remove(ri);
            let into = if into > ri { into - 1 } else { into };
            for (x, y) in table[into].iter_mut().zip(moved) {
                *x += y;
            }
        } else {
            let into = next_smallest(&col_tot, ci);
            for row in table.iter_mut() {
                let moved = row.remove(ci);
                let into = if into > ci { into - 1 } else { into };
                row[into] += moved;
            }
        }
    }
}

fn smallest(xs: &[f64]) -> (usize, f64) {
    xs.iter().copied().enumerate().fold(
        (0, f64::INFINITY),
        |best, (i, x)| if x < best.1 { (i, x) } else { best },
    )
}

fn next_smallest(xs: &[f64], skip: usize) -> usize {
    xs.iter()
        .copied()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .fold((usize::MAX, f64::INFINITY), |best, (i, x)| {
            if x < best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisagreementPoint {
    pub depth: usize,
    /// Fraction of paths with `ξ_{0,-L} α_{-L} != ξ_{0,-2L} α_{-2L}`.
    pub element_disagreement: f64,
    /// The same comparison after passing to `H`-cosets.
    pub coset_disagreement: f64,
}

/// Compares centered products at depths `L` and `2L` along the same noise
/// stream, for each `L` in `depths`.
pub fn case_b_convergence_diagnostic(
    engine: &SolutionEngine,
    depths: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<DisagreementPoint>, StatsError> {
    if n_paths == 0 {
        return Err(StatsError::EmptySample);
    }
    let deepest = depths.iter().copied().max().unwrap_or(0);
    if 2 * deepest > engine.depth() {
        return Err(SolveError::DepthTooShallow {
            depth: engine.depth(),
            required: 2 * deepest,
        }
        .into());
    }
    let sec = engine.section();
    let mut element = vec![0usize; depths.len()];
    let mut coset = vec![0usize; depths.len()];
    for i in 0..n_paths as u64 {
        let xi = engine.sample_noise(2 * deepest, &mut stream_rng(seed, i, Stream::Noise));
        for (j, &l) in depths.iter().enumerate() {
            let a = engine.centered_product(&xi, l);
            let b = engine.centered_product(&xi, 2 * l);
            element[j] += usize::from(a != b);
            coset[j] += usize::from(sec.cosets().coset_of(a) != sec.cosets().coset_of(b));
        }
    }
    let n = n_paths as f64;
    Ok(depths
        .iter()
        .enumerate()
        .map(|(j, &depth)| DisagreementPoint {
            depth,
            element_disagreement: element[j] as f64 / n,
            coset_disagreement: coset[j] as f64 / n,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyConfig {
    /// Family-wise level, split evenly over every chi-square test run.
    pub significance: f64,
    /// Empirical TV below this counts `h` as a symmetry of `law(η⁰_0)`.
    pub iso_threshold: f64,
    /// Bound on the TV between empirical and predicted marginals.
    pub marginal_tv: f64,
    pub min_samples: usize,
    /// Noise lags `j` used for `(U_k, ξ_{-j})` independence tests.
    pub noise_lags: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            significance: 0.01,
            iso_threshold: 0.1,
            marginal_tv: 0.05,
            min_samples: 100,
            noise_lags: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KRecord {
    pub k: i64,
    /// TV between the empirical law of `η_k` and its predicted marginal:
    /// `λ_k` for extremal paths, `λ_k * law(V)` for mixtures, `ω_G` for
    /// uniform paths.
    pub tv_to_lambda: f64,
    #[serde(rename = "p_uniformity_Uk")]
    pub p_uniformity_uk: Option<f64>,
    #[serde(rename = "p_independence_Uk_V")]
    pub p_independence_uk_v: Option<f64>,
    /// Smallest p-value over the tested noise lags.
    #[serde(rename = "p_independence_Uk_noise")]
    pub p_independence_uk_noise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseChecks {
    pub detected_case: Case,
    /// Uniform paths: marginal of `η_0` is `ω_G` and independent of `ξ_0`.
    pub uniform_marginal_check: Option<bool>,
    /// Case B: every path equals the noise-determined extremal path times `V`.
    pub strong_determinism_check: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HIsoCheck {
    /// `tv(law(η⁰_0 h), law(η⁰_0))` for every `h`, by element index.
    pub tv: Vec<f64>,
    pub invariant: Vec<Element>,
    pub expected: Vec<Element>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTrip {
    pub checked: usize,
    pub exact: usize,
    /// Recovered `V` equals `s(V_true^{-1} H)^{-1}`.
    pub v_in_gauge: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub n_paths: usize,
    pub n_failed: usize,
    pub kind: PathKind,
    pub significance: f64,
    pub n_tests: usize,
    /// `significance / n_tests`.
    pub per_test_level: f64,
    pub per_k: Vec<KRecord>,
    pub case_checks: CaseChecks,
    pub h_iso: Option<HIsoCheck>,
    pub round_trip: Option<RoundTrip>,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Runs the full battery on an ensemble built by `engine`'s noise, judged
/// against `engine`'s characteristic subgroup.
pub fn verify_theorems(
    engine: &SolutionEngine,
    ensemble: &Ensemble,
    cfg: &VerifyConfig,
) -> Result<EnsembleReport, StatsError> {
    let got = ensemble.members.len();
    if got < cfg.min_samples.max(1) {
        return Err(StatsError::InsufficientSamples {
            got,
            need: cfg.min_samples.max(1),
        });
    }
    let g = engine.group().clone();
    let limit: &LimitResult = engine.limit();
    let h = engine.subgroup();
    let window = ensemble
        .members
        .iter()
        .map(|m| m.path.window())
        .min()
        .unwrap_or(0)
        .min(limit.window());
    let kind = ensemble.kind;
    let mut failures = Vec::new();
    if !ensemble.failures.is_empty() {
        failures.push(format!(
            "{} of {} paths failed to build: {}",
            ensemble.failures.len(),
            ensemble.requested(),
            ensemble.failures[0].1
        ));
    }

    let decs: Vec<_> = ensemble
        .members
        .iter()
        .filter_map(|m| m.decomposition.as_ref())
        .collect();
    let has_dec = kind != PathKind::Uniform && decs.len() == got;
    if kind != PathKind::Uniform && !has_dec {
        failures.push("ensemble lacks recorded decompositions".into());
    }

    let eta_at =
        |d: usize| -> Vec<Element> { ensemble.members.iter().map(|m| m.path.eta()[d]).collect() };
    let xi_at =
        |d: usize| -> Vec<Element> { ensemble.members.iter().map(|m| m.path.xi()[d]).collect() };
    let v_law = if has_dec {
        Some(empirical_law(
            &g,
            &decs.iter().map(|d| d.v).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };

    // p-values are collected first, then judged at the corrected level
    let mut tests: Vec<(String, f64)> = Vec::new();
    let mut per_k = Vec::with_capacity(window + 1);
    for d in 0..=window {
        let k = -(d as i64);
        let emp = empirical_law(&g, &eta_at(d))?;
        let predicted = match (kind, &v_law) {
            (PathKind::Uniform, _) => Measure::haar(g.clone()),
            (_, Some(vl)) => limit.lambdas()[d].convolve(vl).expect("same group"),
            (_, None) => limit.lambdas()[d].clone(),
        };
        let tv = tv_distance(&emp, &predicted);
        if tv >= cfg.marginal_tv {
            failures.push(format!(
                "k = {k}: empirical marginal is {tv:.4} from the prediction"
            ));
        }
        let mut rec = KRecord {
            k,
            tv_to_lambda: tv,
            p_uniformity_uk: None,
            p_independence_uk_v: None,
            p_independence_uk_noise: None,
        };
        if has_dec {
            let u: Vec<Element> = decs.iter().map(|x| x.u[d]).collect();
            let p = match chi_square_uniformity(&u, h) {
                Ok(t) => t.p_value,
                Err(StatsError::OutOfSupport { element }) => {
                    failures.push(format!("k = {k}: U_k = {element} lies outside H"));
                    0.0
                }
                Err(e) => return Err(e),
            };
            tests.push((format!("uniformity of U at k = {k}"), p));
            rec.p_uniformity_uk = Some(p);
            if kind == PathKind::Mixture {
                let pairs: Vec<_> = decs.iter().map(|x| (x.u[d], x.v)).collect();
                let p = chi_square_independence(&pairs)?.p_value;
                tests.push((format!("independence of U and V at k = {k}"), p));
                rec.p_independence_uk_v = Some(p);
            }
            let mut worst = 1.0f64;
            for j in 0..cfg.noise_lags {
                let pairs: Vec<_> = u.iter().copied().zip(xi_at(j)).collect();
                let p = chi_square_independence(&pairs)?.p_value;
                tests.push((format!("independence of U at k = {k} and noise at -{j}"), p));
                worst = worst.min(p);
            }
            rec.p_independence_uk_noise = Some(worst);
        }
        per_k.push(rec);
    }

    let mut uniform_marginal_check = None;
    if kind == PathKind::Uniform {
        let pairs: Vec<_> = eta_at(0).into_iter().zip(xi_at(0)).collect();
        let p = chi_square_independence(&pairs)?.p_value;
        tests.push(("independence of eta_0 and xi_0".into(), p));
        uniform_marginal_check = Some(per_k[0].tv_to_lambda < cfg.marginal_tv);
    }

    let n_tests = tests.len().max(1);
    let level = cfg.significance / n_tests as f64;
    for (name, p) in &tests {
        if *p <= level {
            failures.push(format!("{name}: p = {p:.3e} at level {level:.3e}"));
        }
    }
    if let Some(ok) = uniform_marginal_check.as_mut() {
        *ok = *ok && tests.iter().all(|(_, p)| *p > level);
    }

    let h_iso = (kind == PathKind::Extremal).then(|| {
        let eta0 = eta_at(0);
        let base = empirical_law(&g, &eta0).expect("nonempty");
        let tv: Vec<f64> = g
            .elements()
            .map(|x| tv_distance(&base.translate_right(x), &base))
            .collect();
        let invariant: Vec<Element> = g
            .elements()
            .filter(|&x| tv[x] < cfg.iso_threshold)
            .collect();
        let expected = h.members().to_vec();
        let ok = invariant == expected;
        HIsoCheck {
            tv,
            invariant,
            expected,
            ok,
        }
    });
    if let Some(c) = &h_iso {
        if !c.ok {
            failures.push(format!(
                "translation symmetries {:?} of law(eta_0) differ from H = {:?}",
                c.invariant, c.expected
            ));
        }
    }

    let round_trip = has_dec.then(|| {
        let sec = engine.section();
        let mut rt = RoundTrip {
            checked: 0,
            exact: 0,
            v_in_gauge: 0,
            errors: 0,
        };
        for (m, built) in ensemble.members.iter().zip(&decs) {
            rt.checked += 1;
            match engine.decompose_path(&m.path, sec) {
                Ok(dec) => {
                    rt.exact += usize::from(dec.reconstructs(&m.path));
                    rt.v_in_gauge += usize::from(dec.v == g.inv(sec.rep(g.inv(built.v))));
                }
                Err(_) => rt.errors += 1,
            }
        }
        rt
    });
    if let Some(rt) = &round_trip {
        if rt.exact != rt.checked || rt.v_in_gauge != rt.checked {
            failures.push(format!(
                "round trip: {} exact, {} with V in gauge, {} errors of {}",
                rt.exact, rt.v_in_gauge, rt.errors, rt.checked
            ));
        }
    }

    let strong_determinism_check =
        (limit.case() == Case::B && kind != PathKind::Uniform).then(|| {
            ensemble.members.iter().zip(&decs).all(|(m, built)| {
                let meta = m.path.meta();
                match engine.extremal_from_noise(m.path.xi().to_vec(), g.identity(), meta) {
                    Ok((again, _)) => again
                        .eta()
                        .iter()
                        .zip(m.path.eta())
                        .all(|(&a, &b)| g.mul(a, built.v) == b),
                    Err(_) => false,
                }
            })
        });
    if strong_determinism_check == Some(false) {
        failures.push("case B path is not determined by its noise and V".into());
    }
    if uniform_marginal_check == Some(false) && !failures.iter().any(|f| f.starts_with("k = 0")) {
        failures.push("uniform solution check failed".into());
    }

    Ok(EnsembleReport {
        n_paths: got,
        n_failed: ensemble.failures.len(),
        kind,
        significance: cfg.significance,
        n_tests,
        per_test_level: level,
        per_k,
        case_checks: CaseChecks {
            detected_case: limit.case(),
            uniform_marginal_check,
            strong_determinism_check,
        },
        h_iso,
        round_trip,
        pass: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::{compute_limit, LimitOptions, NoiseLaw};
    use crate::solution::EnsembleKind;
    use rand::Rng;

    fn z4() -> Arc<FiniteGroup> {
        Arc::new(FiniteGroup::cyclic(4).unwrap())
    }

    /// `ln Γ(m/2)` by the recurrence from `Γ(1/2)` and `Γ(1)`.
    fn ln_gamma_half(m: usize) -> f64 {
        let (mut x, mut acc) = if m.is_multiple_of(2) {
            (1.0, 0.0)
        } else {
            (0.5, 0.5 * std::f64::consts::PI.ln())
        };
        while 2.0 * x < m as f64 {
            acc += x.ln();
            x += 1.0;
        }
        acc
    }

    /// Upper tail of the chi-square density by Simpson's rule, after the
    /// substitution `t = x + s²` that removes the endpoint singularity.
    fn sf_oracle(x: f64, df: usize) -> f64 {
        let k = df as f64 / 2.0;
        let ln_norm = -k * 2f64.ln() - ln_gamma_half(df);
        let dens = |t: f64| {
            if t <= 0.0 {
                0.0
            } else {
                ((k - 1.0) * t.ln() - t / 2.0 + ln_norm).exp()
            }
        };
        let f = |s: f64| 2.0 * s * dens(x + s * s);
        let hi = (2.0 * df as f64 + 80.0 + x).sqrt() * 2.5;
        let steps = 40_000;
        let h = hi / steps as f64;
        let mut acc = f(0.0) + f(hi);
        for i in 1..steps {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn chi_square_tail_matches_integration() {
        for df in [1usize, 2, 3, 5, 8, 13, 21, 40, 64] {
            for q in [0.1, 0.5, 1.0, 1.7, 3.0] {
                let x = q * df as f64;
                let want = sf_oracle(x, df);
                let got = chi_square_sf(x, df);
                assert!((got - want).abs() < 1e-8, "df={df} x={x}: {got} vs {want}");
            }
        }
        assert_eq!(chi_square_sf(0.0, 3), 1.0);
        assert_eq!(chi_square_sf(5.0, 0), 1.0);
    }

    #[test]
    fn empirical_laws() {
        let g = z4();
        assert_eq!(
            empirical_law(&g, &[2, 2, 2]).unwrap(),
            Measure::delta(g.clone(), 2).unwrap()
        );
        assert_eq!(empirical_law(&g, &[]), Err(StatsError::EmptySample));
        let mut rng = stream_rng(0, 0, Stream::Noise);
        let draws: Vec<Element> = (0..100_000).map(|_| rng.random_range(0..4)).collect();
        assert!(tv_distance(&empirical_law(&g, &draws).unwrap(), &Measure::haar(g)) < 0.02);
    }

    #[test]
    fn uniformity_test() {
        let g = FiniteGroup::cyclic(4).unwrap();
        let h = Subgroup::new(&g, [0, 2]).unwrap();
        let balanced: Vec<Element> = (0..1000).map(|i| 2 * (i % 2)).collect();
        let t = chi_square_uniformity(&balanced, &h).unwrap();
        assert_eq!((t.statistic, t.p_value), (0.0, 1.0));
        let lopsided = vec![0; 10_000];
        let t = chi_square_uniformity(&lopsided, &h).unwrap();
        assert_eq!(t.statistic, 10_000.0);
        assert!(t.p_value < 1e-10);
        assert_eq!(
            chi_square_uniformity(&[0, 1], &h),
            Err(StatsError::OutOfSupport { element: 1 })
        );
        assert!(
            chi_square_uniformity(&[0, 0], &Subgroup::trivial(&g))
                .unwrap()
                .degenerate
        );
    }

    #[test]
    fn uniformity_calibration() {
        let g = FiniteGroup::cyclic(2).unwrap();
        let whole = Subgroup::whole(&g);
        let low = (0..200)
            .filter(|&s| {
                let mut rng = stream_rng(s, 0, Stream::Base);
                let xs: Vec<Element> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
                chi_square_uniformity(&xs, &whole).unwrap().p_value <= 0.001
            })
            .count();
        assert!(low <= 2, "{low} of 200 seeds below 0.001");
    }

    #[test]
    fn independence_test() {
        let mut rng = stream_rng(1, 0, Stream::Base);
        let same: Vec<(Element, Element)> = (0..10_000)
            .map(|_| {
                let x = rng.random_range(0..2);
                (x, x)
            })
            .collect();
        assert!(chi_square_independence(&same).unwrap().p_value < 1e-10);
        let constant: Vec<(Element, Element)> = (0..100).map(|i| (i % 3, 7)).collect();
        let t = chi_square_independence(&constant).unwrap();
        assert!(t.degenerate && t.p_value == 1.0);
        assert_eq!(chi_square_independence(&[]), Err(StatsError::EmptySample));
        let low = (0..200)
            .filter(|&s| {
                let mut rng = stream_rng(s, 1, Stream::Base);
                let pairs: Vec<_> = (0..10_000)
                    .map(|_| (rng.random_range(0..3), rng.random_range(0..4)))
                    .collect();
                chi_square_independence(&pairs).unwrap().p_value <= 0.001
            })
            .count();
        assert!(low <= 2, "{low} of 200 seeds below 0.001");
    }

    #[test]
    fn independence_matches_hand_computation() {
        // 2x2 table [[30, 10], [20, 40]]: statistic 50/3
        let mut pairs = Vec::new();
        for (a, b, n) in [(0, 0, 30), (0, 1, 10), (1, 0, 20), (1, 1, 40)] {
            pairs.extend(std::iter::repeat_n((a, b), n));
        }
        let t = chi_square_independence(&pairs).unwrap();
        assert!((t.statistic - 50.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.df, 1);
    }

    #[test]
    fn sparse_cells_are_pooled() {
        // a rare third row gets merged into the smaller of the other two
        let mut pairs = Vec::new();
        for (a, b, n) in [
            (0, 0, 50),
            (0, 1, 50),
            (1, 0, 30),
            (1, 1, 30),
            (2, 0, 1),
            (2, 1, 2),
        ] {
            pairs.extend(std::iter::repeat_n((a, b), n));
        }
        let t = chi_square_independence(&pairs).unwrap();
        assert_eq!(t.df, 1);
        // pooled table [[50, 50], [31, 32]]
        let n = 163.0;
        let rows = [100.0, 63.0];
        let cols = [81.0, 82.0];
        let obs = [[50.0, 50.0], [31.0, 32.0]];
        let mut want = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e: f64 = rows[i] * cols[j] / n;
                want += (obs[i][j] - e).powi(2) / e;
            }
        }
        assert!((t.statistic - want).abs() < 1e-12);
    }

    #[test]
    fn planted_effects_are_detected() {
        let g = FiniteGroup::cyclic(4).unwrap();
        let h = Subgroup::new(&g, [0, 2]).unwrap();
        let mut missed_u = 0;
        let mut missed_i = 0;
        for s in 0..100 {
            let mut rng = stream_rng(s, 2, Stream::Base);
            // P(0) = 0.55 vs 0.45
            let xs: Vec<Element> = (0..10_000)
                .map(|_| if rng.random::<f64>() < 0.55 { 0 } else { 2 })
                .collect();
            missed_u += usize::from(chi_square_uniformity(&xs, &h).unwrap().p_value > 0.01);
            // second coordinate copies the first with probability 0.1
            let pairs: Vec<_> = (0..10_000)
                .map(|_| {
                    let a = rng.random_range(0..2);
                    let b = if rng.random::<f64>() < 0.1 {
                        a
                    } else {
                        rng.random_range(0..2)
                    };
                    (a, b)
                })
                .collect();
            missed_i += usize::from(chi_square_independence(&pairs).unwrap().p_value > 0.01);
        }
        assert!(
            missed_u <= 1 && missed_i <= 1,
            "missed {missed_u} / {missed_i}"
        );
    }

    fn engine_for(weights: &[f64], depth: Option<usize>) -> SolutionEngine {
        let noise = NoiseLaw::constant(Measure::new(z4(), weights.to_vec()).unwrap());
        let limit = compute_limit(&noise, &LimitOptions::default()).unwrap();
        SolutionEngine::new(&noise, &limit, depth).unwrap()
    }

    #[test]
    fn diagnostic_by_case() {
        let b = engine_for(&[0.0, 1.0, 0.0, 0.0], Some(200));
        for p in case_b_convergence_diagnostic(&b, &[5, 20, 100], 50, 0).unwrap() {
            assert_eq!((p.element_disagreement, p.coset_disagreement), (0.0, 0.0));
        }
        let a = engine_for(&[0.25; 4], Some(80));
        let pts = case_b_convergence_diagnostic(&a, &[20, 40], 2000, 0).unwrap();
        for p in pts {
            assert!((p.element_disagreement - 0.75).abs() < 0.05);
            assert_eq!(p.coset_disagreement, 0.0);
        }
        let c = engine_for(&[0.5, 0.0, 0.5, 0.0], Some(80));
        for p in case_b_convergence_diagnostic(&c, &[20, 40], 2000, 0).unwrap() {
            assert!((p.element_disagreement - 0.5).abs() < 0.05);
            assert_eq!(p.coset_disagreement, 0.0);
        }
        assert!(case_b_convergence_diagnostic(&c, &[50], 10, 0).is_err());
    }

    #[test]
    fn battery_passes_on_case_c() {
        let e = engine_for(&[0.5, 0.0, 0.5, 0.0], None);
        let ens = e.ensemble(&EnsembleKind::Extremal, 3000, 17);
        let r = verify_theorems(&e, &ens, &VerifyConfig::default()).unwrap();
        assert!(r.pass, "{:?}", r.failures);
        assert_eq!(r.h_iso.unwrap().invariant, vec![0, 2]);
        assert!(r
            .per_k
            .iter()
            .all(|k| k.p_uniformity_uk.is_some_and(|p| (0.0..=1.0).contains(&p))));
    }

    #[test]
    fn battery_flags_a_wrong_subgroup() {
        let noise = NoiseLaw::constant(Measure::new(z4(), vec![0.5, 0.0, 0.5, 0.0]).unwrap());
        let limit = compute_limit(&noise, &LimitOptions::default()).unwrap();
        let truth = SolutionEngine::new(&noise, &limit, None).unwrap();
        let ens = truth.ensemble(&EnsembleKind::Extremal, 1000, 3);
        let wrong = limit.with_subgroup(Subgroup::trivial(&FiniteGroup::cyclic(4).unwrap()));
        let judge = SolutionEngine::new(&noise, &wrong, None).unwrap();
        let r = verify_theorems(&judge, &ens, &VerifyConfig::default()).unwrap();
        assert!(!r.pass);
        assert!(r.failures.iter().any(|f| f.contains("outside H")));
    }

    #[test]
    fn battery_on_uniform_and_case_a() {
        let a = engine_for(&[0.25; 4], None);
        let ens = a.ensemble(&EnsembleKind::Extremal, 3000, 1);
        let r = verify_theorems(&a, &ens, &VerifyConfig::default()).unwrap();
        assert!(r.pass, "{:?}", r.failures);
        assert_eq!(r.h_iso.unwrap().invariant, vec![0, 1, 2, 3]);

        let c = engine_for(&[0.5, 0.0, 0.5, 0.0], None);
        let ens = c.ensemble(&EnsembleKind::Uniform, 3000, 1);
        let r = verify_theorems(&c, &ens, &VerifyConfig::default()).unwrap();
        assert!(r.pass, "{:?}", r.failures);
        assert_eq!(r.case_checks.uniform_marginal_check, Some(true));
    }

    #[test]
    fn battery_on_case_b_mixture() {
        let b = engine_for(&[0.0, 1.0, 0.0, 0.0], None);
        let ens = b.ensemble(&EnsembleKind::Mixture(Measure::haar(z4())), 2000, 4);
        let r = verify_theorems(&b, &ens, &VerifyConfig::default()).unwrap();
        assert!(r.pass, "{:?}", r.failures);
        assert_eq!(r.case_checks.strong_determinism_check, Some(true));
    }

    #[test]
    fn too_few_paths() {
        let c = engine_for(&[0.5, 0.0, 0.5, 0.0], None);
        let ens = c.ensemble(&EnsembleKind::Extremal, 10, 0);
        assert!(matches!(
            verify_theorems(&c, &ens, &VerifyConfig::default()),
            Err(StatsError::InsufficientSamples { got: 10, .. })
        ));
    }
}
