use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use conv_limit_core::limit::{
    compute_limit, verify_conjugacy_uniqueness, LimitError, LimitOptions, LimitResult, NoiseLaw,
};
use conv_limit_core::report::{
    audit_decompositions, conv_eq_csv, ensemble_file, ensemble_summary_csv, shape_curve_csv,
    torus_bounds_csv, torus_curves_csv, ClassifyReport, LimitReport, TorusReport,
};
use conv_limit_core::solution::{EnsembleKind, SolutionEngine, SolveError};
use conv_limit_core::spec::{
    parse_ensemble, to_versioned_json, MeasureSpec, NoiseSpec, SpecError, TorusNoiseSpec,
};
use conv_limit_core::stats::{verify_theorems, StatsError, VerifyConfig};
use conv_limit_core::torus::{compute_p_mu, PMuOptions, TorusError};

#[derive(Debug, Parser)]
#[command(
    name = "conv-limit",
    version,
    about = "Backward convolution limits, solution sampling and verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Case A/B/C and the characteristic subgroup.
    Classify(Common),
    /// Limit laws, centering sequence and convergence curves.
    Limit(Common),
    /// Sample an ensemble of solutions.
    Simulate(Sampling),
    /// Decompose an ensemble file, or a fresh mixture ensemble, as φ U V.
    Decompose(Sampling),
    /// Run the statistical battery; exits 1 when a check fails.
    Verify(Sampling),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Noise spec (JSON); a torus spec with --torus.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for output files; stdout gets the main JSON when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Read the input as a torus noise spec.
    #[arg(long)]
    pub torus: bool,
    #[arg(long, default_value_t = 64)]
    pub p_max: i64,
    /// Shape-stabilization tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub eps: f64,
    /// Largest depth explored while waiting for the shape to settle.
    #[arg(long, default_value_t = 20_000)]
    pub max_depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Uniform,
    Extremal,
    Mixture,
}

#[derive(Debug, Clone, Args)]
pub struct Sampling {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Construction depth L (at least twice the convergence depth).
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Law of V for mixtures, as a measure spec (JSON); Haar by default.
    #[arg(long)]
    pub v_law: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub significance: f64,
}

#[derive(Debug)]
pub enum CliError {
    Parse(String),
    NoConvergence(String),
    Indeterminate(String),
    Failed(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Parse(_) => 2,
            Self::NoConvergence(_) => 3,
            Self::Indeterminate(_) => 4,
            Self::Failed(_) | Self::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Parse(m) => write!(f, "parse error: {m}"),
            Self::NoConvergence(m) => write!(f, "no convergence: {m}"),
            Self::Indeterminate(m) => write!(f, "indeterminate: {m}"),
            Self::Failed(m) => write!(f, "verification failed: {m}"),
            Self::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        Self::Parse(e.to_string())
    }
}

impl From<LimitError> for CliError {
    fn from(e: LimitError) -> Self {
        match e {
            LimitError::NoConvergenceAtDepth { .. } => Self::NoConvergence(e.to_string()),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<TorusError> for CliError {
    fn from(e: TorusError) -> Self {
        match e {
            TorusError::Indeterminate { .. } => Self::Indeterminate(e.to_string()),
            other => Self::Parse(other.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Limit(l) => l.into(),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        Self::Other(e.to_string())
    }
}

/// Files produced by a command, written only once everything succeeded.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, String)>,
    /// Nonzero-exit condition discovered after the output was assembled.
    pub verdict: Option<CliError>,
}

impl Output {
    fn push(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    /// Writes every file into `dir`, or the first one to stdout.
    pub fn emit(&self, dir: Option<&Path>) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Other(format!("writing output: {e}"));
        match dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(io)?;
                for (name, body) in &self.files {
                    let tmp = dir.join(format!(".{name}.tmp"));
                    fs::write(&tmp, body).map_err(io)?;
                    fs::rename(&tmp, dir.join(name)).map_err(io)?;
                }
            }
            None => {
                if let Some((_, body)) = self.files.first() {
                    print!("{body}");
                }
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
}

fn limit_options(c: &Common) -> LimitOptions {
    LimitOptions {
        eps_shape: c.eps,
        max_depth: c.max_depth,
        ..LimitOptions::default()
    }
}

/// The finite-group noise named by the input, plus its spec for re-emission.
fn load_noise(c: &Common) -> Result<(NoiseSpec, NoiseLaw), CliError> {
    let text = read(&c.input)?;
    if c.torus {
        let spec: TorusNoiseSpec = parse_json(&text)?;
        let noise = spec.build_on_grid()?.ok_or_else(|| {
            CliError::Parse("this command needs a \"grid\" size in the torus spec".into())
        })?;
        Ok((grid_noise_spec(&noise), noise))
    } else {
        let spec: NoiseSpec = parse_json(&text)?;
        let noise = spec.build()?;
        Ok((spec, noise))
    }
}

/// A finite-group spec equivalent to a discretized torus noise.
fn grid_noise_spec(noise: &NoiseLaw) -> NoiseSpec {
    use conv_limit_core::limit::Tail;
    use conv_limit_core::spec::{GroupSpec, TailSpec};
    NoiseSpec {
        group: GroupSpec::Builtin {
            name: format!("Z{}", noise.group().order()),
        },
        prefix: noise
            .prefix()
            .iter()
            .map(MeasureSpec::from_measure)
            .collect(),
        tail: match noise.tail() {
            Tail::Constant(m) => TailSpec::Constant {
                mu: MeasureSpec::from_measure(m),
            },
            Tail::Periodic(ms) => TailSpec::Periodic {
                mus: ms.iter().map(MeasureSpec::from_measure).collect(),
            },
        },
    }
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Classify(c) => classify(c),
        Command::Limit(c) => limit(c),
        Command::Simulate(s) => simulate(s),
        Command::Decompose(s) => decompose(s),
        Command::Verify(s) => verify(s),
    }
}

fn classify_group(noise: &NoiseLaw, c: &Common) -> Result<ClassifyReport, CliError> {
    let opts = limit_options(c);
    let res = compute_limit(noise, &opts)?;
    let conj = verify_conjugacy_uniqueness(noise, &opts)?;
    Ok(ClassifyReport::new(noise, &res, Some(conj)))
}

fn classify(c: &Common) -> Result<Output, CliError> {
    let mut out = Output::default();
    if c.torus {
        let spec: TorusNoiseSpec = parse_json(&read(&c.input)?)?;
        let law = spec.build()?;
        let cls = compute_p_mu(
            &law,
            &PMuOptions {
                p_max: c.p_max,
                ..PMuOptions::default()
            },
        )?;
        let grid = match spec.build_on_grid()? {
            Some(noise) => Some(classify_group(&noise, c)?),
            None => None,
        };
        out.push(
            "classify.json",
            to_versioned_json(&TorusReport::new(&cls, grid)),
        );
        out.push("torus_bounds.csv", torus_bounds_csv(&cls));
        out.push("torus_curves.csv", torus_curves_csv(&cls));
    } else {
        let (_, noise) = load_noise(c)?;
        out.push(
            "classify.json",
            to_versioned_json(&classify_group(&noise, c)?),
        );
    }
    Ok(out)
}

fn limit(c: &Common) -> Result<Output, CliError> {
    let (_, noise) = load_noise(c)?;
    let res = compute_limit(&noise, &limit_options(c))?;
    let mut out = Output::default();
    out.push(
        "limit.json",
        to_versioned_json(&LimitReport::new(&noise, &res)),
    );
    out.push("shape_curve.csv", shape_curve_csv(&res));
    out.push("conv_eq.csv", conv_eq_csv(&noise, &res));
    Ok(out)
}

fn seed(s: &Sampling) -> Result<u64, CliError> {
    s.seed
        .ok_or_else(|| CliError::Parse("--seed is required for sampling commands".into()))
}

fn engine(s: &Sampling, noise: &NoiseLaw) -> Result<(LimitResult, SolutionEngine), CliError> {
    let res = compute_limit(noise, &limit_options(&s.common))?;
    let engine = SolutionEngine::new(noise, &res, s.depth)?;
    Ok((res, engine))
}

fn ensemble_kind(s: &Sampling, noise: &NoiseLaw, default: Kind) -> Result<EnsembleKind, CliError> {
    Ok(match s.kind.unwrap_or(default) {
        Kind::Uniform => EnsembleKind::Uniform,
        Kind::Extremal => EnsembleKind::Extremal,
        Kind::Mixture => {
            let law = match &s.v_law {
                Some(json) => parse_json::<MeasureSpec>(json)?.build(noise.group())?,
                None => conv_limit_core::measure::Measure::haar(Arc::clone(noise.group())),
            };
            EnsembleKind::Mixture(law)
        }
    })
}

fn simulate(s: &Sampling) -> Result<Output, CliError> {
    let seed = seed(s)?;
    let (spec, noise) = load_noise(&s.common)?;
    let kind = ensemble_kind(s, &noise, Kind::Extremal)?;
    let (_, engine) = engine(s, &noise)?;
    let ens = engine.ensemble(&kind, s.paths, seed);
    let mut out = Output::default();
    out.push(
        "ensemble.json",
        to_versioned_json(&ensemble_file(&spec, &engine, &ens)),
    );
    if !ens.failures.is_empty() {
        out.verdict = Some(CliError::Other(format!(
            "{} of {} paths failed: {}",
            ens.failures.len(),
            s.paths,
            ens.failures[0].1
        )));
    }
    Ok(out)
}

fn decompose(s: &Sampling) -> Result<Output, CliError> {
    let text = read(&s.common.input)?;
    let is_ensemble = serde_json::from_str::<serde_json::Value>(&text)
        .map_err(|e| CliError::Parse(e.to_string()))?
        .get("paths")
        .is_some();
    let audit = if is_ensemble {
        let loaded = parse_ensemble(&text)?;
        let res = compute_limit(&loaded.noise, &limit_options(&s.common))?;
        let engine =
            SolutionEngine::new(&loaded.noise, &res, Some(s.depth.unwrap_or(loaded.depth)))?;
        let recorded = loaded.decompositions(res.subgroup())?;
        audit_decompositions(
            &engine,
            loaded
                .paths
                .iter()
                .zip(&recorded)
                .map(|((id, p, _), d)| (*id, p, d.as_ref())),
        )
    } else {
        let seed = seed(s)?;
        let (_, noise) = load_noise(&s.common)?;
        let kind = ensemble_kind(s, &noise, Kind::Mixture)?;
        let (_, engine) = engine(s, &noise)?;
        let ens = engine.ensemble(&kind, s.paths, seed);
        let mut audit = audit_decompositions(
            &engine,
            ens.members
                .iter()
                .map(|m| (m.path_id, &m.path, m.decomposition.as_ref())),
        );
        audit
            .errors
            .extend(ens.failures.iter().map(|(i, e)| format!("path {i}: {e}")));
        audit
    };
    let mut out = Output::default();
    let verdict = (!audit.all_exact()).then(|| {
        CliError::Failed(format!(
            "{} of {} paths reconstructed exactly, {} errors",
            audit.exact,
            audit.n_paths,
            audit.errors.len()
        ))
    });
    out.push("decomposition.json", to_versioned_json(&audit));
    out.verdict = verdict;
    Ok(out)
}

fn verify(s: &Sampling) -> Result<Output, CliError> {
    let seed = seed(s)?;
    let (_, noise) = load_noise(&s.common)?;
    let kind = ensemble_kind(s, &noise, Kind::Extremal)?;
    let (_, engine) = engine(s, &noise)?;
    let ens = engine.ensemble(&kind, s.paths, seed);
    let cfg = VerifyConfig {
        significance: s.significance,
        ..VerifyConfig::default()
    };
    let report = verify_theorems(&engine, &ens, &cfg)?;
    let mut out = Output::default();
    out.push("report.json", to_versioned_json(&report));
    out.push("summary.csv", ensemble_summary_csv(&report));
    if !report.pass {
        out.verdict = Some(CliError::Failed(report.failures.join("; ")));
    }
    Ok(out)
}

impl Common {
    pub fn out_dir(&self) -> Option<&Path> {
        self.out.as_deref()
    }
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Self::Classify(c) | Self::Limit(c) => c,
            Self::Simulate(s) | Self::Decompose(s) | Self::Verify(s) => &s.common,
        }
    }
}
