//! Experiment configuration and the four command-line workflows: `construct`,
//! `simulate`, `bounds` and `verify`. Every workflow writes its tables plus a
//! `manifest.json` into one output directory.
//!
//! Configuration precedence: built-in defaults, then the JSON config file,
//! then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{analytic_bounds, default_c_ref, mc_type1, mc_type2, metric_moments, ErrorEstimate};
use crate::bounds::{bound_report, BoundReport};
use crate::channel::{moment_bound_sweep, ChannelParams};
use crate::codec::{DecoderConfig, MetricMode};
use crate::converse::{
    converse_contradiction_demo, gamma_ratio_bounds, likelihood_ratio_product_bounds, min_distance_check,
    random_integer_instance, upper_count_check, ConverseCase, ConverseConfig,
};
use crate::error::{Error, Result};
use crate::packing::{
    count_lower_bound, coupled_packing_constant, construct_saturated, density_estimate_par, repair_saturation,
    saturation_check, Codebook, PackingConfig,
};
use crate::rng::{purpose, SeedStream};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub channel: ChannelParams,
    pub n: usize,
    pub b: f64,
    /// Packing constant; `None` couples it to the channel as `3A/(p T_s)^2`.
    pub a: Option<f64>,
    /// Smallest admissible coordinate as a fraction of `A`.
    pub lower_fraction: f64,
    /// Consecutive rejections before construction stops; `None` means `1000 n`.
    pub stop_k: Option<u64>,
    pub seed: u64,
    pub metric_mode: MetricMode,
    /// Monte Carlo trials per error estimate and per converse demo.
    pub trials: u64,
    /// Number of messages with a type I estimate; `None` means all.
    pub type1_messages: Option<usize>,
    pub type2_pairs: usize,
    pub saturation_trials: u64,
    pub repair_rounds: u32,
    pub density_trials: u64,
    pub n_grid: Vec<u64>,
    pub gamma_pairs: u64,
    pub moment_max_n: u64,
    pub converse_instances: u64,
    pub codebook: Option<PathBuf>,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            channel: ChannelParams::new(0.3, 10.0, 1.0, 1.0).expect("valid defaults"),
            n: 8,
            b: 0.25,
            a: None,
            lower_fraction: 0.05,
            stop_k: None,
            seed: 1,
            metric_mode: MetricMode::ExactFloor,
            trials: 10_000,
            type1_messages: None,
            type2_pairs: 50,
            saturation_trials: 10_000,
            repair_rounds: 20,
            density_trials: 100_000,
            n_grid: vec![1_000, 10_000, 100_000, 1_000_000],
            gamma_pairs: 100_000,
            moment_max_n: 200,
            converse_instances: 1_000,
            codebook: None,
            out: PathBuf::from("out"),
            threads: None,
        }
    }
}

/// Command-line values that override the configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<u64>,
    pub n: Option<usize>,
    pub b: Option<f64>,
    pub threads: Option<usize>,
    pub codebook: Option<PathBuf>,
    pub n_grid: Option<Vec<u64>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Format { line: e.line(), msg: e.to_string() })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Format {
                line: 1,
                msg: format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.trials {
            self.trials = v;
        }
        if let Some(v) = o.n {
            self.n = v;
        }
        if let Some(v) = o.b {
            self.b = v;
        }
        if let Some(v) = o.threads {
            self.threads = Some(v);
        }
        if let Some(v) = &o.codebook {
            self.codebook = Some(v.clone());
        }
        if let Some(v) = &o.n_grid {
            self.n_grid = v.clone();
        }
    }

    /// Packing constant in use; warns on stderr when it breaks the coupling
    /// the type II analysis relies on.
    pub fn packing_constant(&self) -> f64 {
        let coupled = coupled_packing_constant(&self.channel);
        match self.a {
            Some(a) => {
                if (a - coupled).abs() > 1e-12 * coupled {
                    eprintln!("warning: a = {a} overrides the coupled value {coupled}; the type II bound assumes the coupling");
                }
                a
            }
            None => coupled,
        }
    }

    pub fn packing(&self) -> PackingConfig {
        let amplitude = self.channel.amplitude();
        PackingConfig {
            n: self.n,
            a: self.packing_constant(),
            b: self.b,
            amplitude,
            lower: self.lower_fraction * amplitude,
            stop_k: self.stop_k.unwrap_or(1000 * self.n as u64),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Usage("trials must be positive".into()));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::Usage(format!("b must lie in (0, 1), got {}", self.b)));
        }
        if self.n < 2 {
            return Err(Error::Usage(format!("n must be at least 2, got {}", self.n)));
        }
        if !(0.0..1.0).contains(&self.lower_fraction) {
            return Err(Error::Usage(format!("lower_fraction must lie in [0, 1), got {}", self.lower_fraction)));
        }
        if self.threads == Some(0) {
            return Err(Error::Usage("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<OutputFile>,
}

/// Collects output files for one run and writes the manifest at the end.
struct Run {
    command: &'static str,
    dir: PathBuf,
    started: u64,
    outputs: Vec<OutputFile>,
}

impl Run {
    fn start(command: &'static str, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { command, dir: dir.to_path_buf(), started: unix_now(), outputs: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.outputs.push(OutputFile { path: name.to_string(), bytes: bytes.len() as u64, sha256: hex_digest(bytes) });
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(name, &bytes)
    }

    fn finish(self, cfg: &ExperimentConfig) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            started_unix: self.started,
            finished_unix: unix_now(),
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

/// Runs `f` on a pool with the configured thread count. Results do not depend
/// on the count.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Usage(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructSummary {
    pub n: usize,
    pub m: usize,
    pub r0: f64,
    pub log2_m: f64,
    pub log2_count_lower_bound: f64,
    pub certificate: crate::packing::SaturationCertificate,
    pub candidates: u64,
    pub rejections: u64,
    pub repaired: u64,
}

/// Builds a certificate-repaired packing and writes `codebook.txt` and
/// `certificate.json`.
pub fn cmd_construct(cfg: &ExperimentConfig) -> Result<(Codebook, RunManifest)> {
    cfg.validate()?;
    let mut run = Run::start("construct", &cfg.out)?;
    let (cb, cert) = with_threads(cfg.threads, || -> Result<_> {
        let mut cb = construct_saturated(&cfg.packing())?;
        let cert = repair_saturation(&mut cb, cfg.saturation_trials, cfg.repair_rounds);
        cb.validate()?;
        Ok((cb, cert))
    })??;
    run.write("codebook.txt", cb.to_text().as_bytes())?;
    let summary = ConstructSummary {
        n: cb.n(),
        m: cb.len(),
        r0: cb.r0(),
        log2_m: (cb.len() as f64).log2(),
        log2_count_lower_bound: count_lower_bound(cb.n() as u64, cb.edge(), cb.r0()),
        certificate: cert,
        candidates: cb.meta().candidates,
        rejections: cb.meta().rejections,
        repaired: cb.meta().repaired,
    };
    run.write_json("certificate.json", &summary)?;
    let manifest = run.finish(cfg)?;
    Ok((cb, manifest))
}

/// One row of the error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub kind: String,
    pub i: usize,
    pub j: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
    /// Closed-form bound: `type1_bound` for type I, `zeta0 + zeta1` for type II.
    pub analytic_bound: f64,
    /// Exact metric variance over `delta_n^2` (type I only, else NaN).
    pub chebyshev_bound: f64,
    /// `estimate <= min(bounds) + 3 stderr`.
    pub within_bound: bool,
}

fn error_row(e: &ErrorEstimate, analytic: f64, chebyshev: f64) -> ErrorRow {
    let bound = if chebyshev.is_nan() { analytic } else { analytic.min(chebyshev) };
    ErrorRow {
        kind: match e.kind {
            crate::analysis::ErrorKind::Type1 => "type1".into(),
            crate::analysis::ErrorKind::Type2 => "type2".into(),
        },
        i: e.i,
        j: e.j,
        estimate: e.estimate,
        stderr: e.stderr,
        trials: e.trials,
        seed: e.seed,
        analytic_bound: analytic,
        chebyshev_bound: chebyshev,
        within_bound: e.estimate <= bound + 3.0 * e.stderr,
    }
}

/// Deterministic sample of `count` ordered pairs of distinct one-based indices.
pub fn sample_pairs(m: usize, count: usize, stream: &SeedStream) -> Vec<(usize, usize)> {
    let mut rng = stream.substream(&[purpose::PAIRS]);
    (0..count)
        .map(|_| {
            let i = rng.random_range(1..=m);
            let mut j = rng.random_range(1..m);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect()
}

fn load_codebook(cfg: &ExperimentConfig) -> Result<Codebook> {
    let path = cfg.codebook.clone().unwrap_or_else(|| cfg.out.join("codebook.txt"));
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("codebook file {} not found", path.display()),
        )));
    }
    Codebook::load(&path)
}

fn check_codebook_matches(cb: &Codebook, params: &ChannelParams) -> Result<()> {
    let (a_cb, a_ch) = (cb.meta().amplitude, params.amplitude());
    if (a_cb - a_ch).abs() > 1e-12 * a_ch {
        return Err(Error::Usage(format!("codebook amplitude {a_cb} does not match the channel amplitude {a_ch}")));
    }
    if !cb.satisfies_rate_constraints(params) {
        return Err(Error::Usage("codebook violates the channel rate constraints".into()));
    }
    Ok(())
}

/// Type I estimates for the first `type1_messages` messages and type II
/// estimates for `type2_pairs` sampled pairs, each with bound columns.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<(Vec<ErrorRow>, RunManifest)> {
    cfg.validate()?;
    let cb = load_codebook(cfg)?;
    cb.validate()?;
    check_codebook_matches(&cb, &cfg.channel)?;
    if cfg.type2_pairs > 0 && cb.len() < 2 {
        return Err(Error::Usage("type II pairs requested but the codebook has a single codeword".into()));
    }
    let mut run = Run::start("simulate", &cfg.out)?;
    let n = cb.n();
    let b = cb.meta().b;
    let params = cfg.channel;
    let decoder = DecoderConfig::derived(params.amplitude(), n, b, cfg.metric_mode);
    let bounds = analytic_bounds(&params, n, b, default_c_ref(&cb)?)?;
    let stream = SeedStream::new(cfg.seed);
    let rows = with_threads(cfg.threads, || -> Result<Vec<ErrorRow>> {
        let mut rows = Vec::new();
        let count = cfg.type1_messages.unwrap_or(cb.len()).min(cb.len());
        for i in 1..=count {
            let e = mc_type1(i, &cb, &decoder, &params, cfg.trials, &stream)?;
            let var = metric_moments(&cb.release_vector(i - 1), &params, cfg.metric_mode).variance;
            rows.push(error_row(&e, bounds.type1_bound, var / (decoder.delta_n * decoder.delta_n)));
        }
        for (i, j) in sample_pairs(cb.len(), cfg.type2_pairs, &stream) {
            let e = mc_type2(i, j, &cb, &decoder, &params, cfg.trials, &stream)?;
            rows.push(error_row(&e, bounds.type2_bound, f64::NAN));
        }
        Ok(rows)
    })??;
    run.write_csv("errors.csv", &rows)?;
    run.write_json("errors.json", &serde_json::json!({ "decoder": decoder, "bounds": bounds, "rows": rows }))?;
    let manifest = run.finish(cfg)?;
    Ok((rows, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: u64,
    pub b: f64,
    pub amplitude: f64,
    pub a: f64,
    pub p_max: f64,
    pub log2_m_lower: f64,
    pub log2_m_upper: f64,
    pub rate_lower: f64,
    pub rate_upper: f64,
}

/// Rate bounds over `n_grid`, using the channel amplitude and packing constant.
pub fn cmd_bounds(cfg: &ExperimentConfig) -> Result<(Vec<BoundReport>, RunManifest)> {
    if cfg.n_grid.is_empty() {
        return Err(Error::Usage("the n grid is empty".into()));
    }
    if !(cfg.b > 0.0 && cfg.b < 1.0) {
        return Err(Error::Usage(format!("b must lie in (0, 1), got {}", cfg.b)));
    }
    let mut run = Run::start("bounds", &cfg.out)?;
    let a = cfg.packing_constant();
    let reports = cfg
        .n_grid
        .iter()
        .map(|&n| bound_report(n, cfg.channel.amplitude(), a, cfg.channel.peak_rate(), cfg.b))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<BoundRow> = reports
        .iter()
        .map(|r| BoundRow {
            n: r.n,
            b: r.b,
            amplitude: r.amplitude,
            a: r.a,
            p_max: r.p_max,
            log2_m_lower: r.log2_m_lower,
            log2_m_upper: r.log2_m_upper,
            rate_lower: r.rate_lower,
            rate_upper: r.rate_upper,
        })
        .collect();
    run.write_csv("bounds.csv", &rows)?;
    run.write_json("bounds.json", &reports)?;
    let manifest = run.finish(cfg)?;
    Ok((reports, manifest))
}

/// One property of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Asymptotic statements that are reported but do not fail the run.
    pub required: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }

    fn push(&mut self, name: &str, passed: bool, required: bool, detail: String) {
        self.checks.push(Check { name: name.into(), passed, required, detail });
    }
}

fn verify_generic(cfg: &ExperimentConfig, report: &mut VerifyReport) -> Result<()> {
    let stream = SeedStream::new(cfg.seed);
    let mut rng = stream.substream(&[purpose::CONVERSE, 1]);
    let mut worst = 0usize;
    for _ in 0..cfg.gamma_pairs {
        let a = 100.0 * (1.0 - rng.random::<f64>());
        let b = a + (100.0 - a) * (1.0 - rng.random::<f64>());
        if b <= a {
            continue;
        }
        if !gamma_ratio_bounds(a, b)?.sandwich_holds(1e-10) {
            worst += 1;
        }
    }
    report.push("gamma-ratio", worst == 0, true, format!("{worst} of {} pairs outside the bounds", cfg.gamma_pairs));

    let violations = moment_bound_sweep(cfg.moment_max_n, &[0.05, 0.1, 0.3, 0.5, 0.7, 0.9]);
    report.push(
        "moment-bound",
        violations.is_empty(),
        true,
        format!("{} violations for N <= {}", violations.len(), cfg.moment_max_n),
    );

    // likelihood-ratio sandwich on integer instances at n in {2, 3, 4}
    let params = cfg.channel;
    let (mut outside, mut mismatched, mut bernoulli_off, mut total) = (0u64, 0u64, 0u64, 0u64);
    let cases = [ConverseCase::AllUp, ConverseCase::AllDown, ConverseCase::Mixed];
    for k in 0..cfg.converse_instances {
        let n = 2 + (k % 3) as usize;
        let conv = ConverseConfig::derived(&params, n, cfg.b);
        let case = cases[(k / 3 % 3) as usize];
        let (c1, c2, y) = match random_integer_instance(n, case, &params, &conv, &mut rng) {
            Ok(v) => v,
            Err(Error::Precondition(_)) | Err(Error::Domain(_)) => continue,
            Err(e) => return Err(e),
        };
        total += 1;
        let r = likelihood_ratio_product_bounds(&c1, &c2, &y, &params, &conv)?;
        let direct = (crate::channel::n_use_log_likelihood(&c2, &y, &params)?
            - crate::channel::n_use_log_likelihood(&c1, &y, &params)?)
        .exp();
        if (r.exact - direct).abs() > 1e-9 * direct {
            mismatched += 1;
        }
        if !r.sandwich_holds() {
            outside += 1;
        }
        if !r.bernoulli.applicable {
            bernoulli_off += 1;
        }
    }
    report.push("likelihood-ratio-form", mismatched == 0, true, format!("{mismatched} of {total} instances differ from the pmf ratio"));
    report.push(
        "likelihood-ratio-sandwich",
        outside == 0,
        true,
        format!("{outside} of {total} instances outside [1-kappa, 1+kappa]; Bernoulli step outside its range in {bernoulli_off}"),
    );
    Ok(())
}

fn verify_codebook(cfg: &ExperimentConfig, cb: &Codebook, report: &mut VerifyReport) -> Result<()> {
    let params = cfg.channel;
    let n = cb.n();
    let b = cb.meta().b;
    let stream = SeedStream::new(cfg.seed);
    report.push(
        "rate-constraints",
        cb.satisfies_rate_constraints(&params),
        true,
        format!("peak {} and average {}", params.peak_rate(), params.average_rate()),
    );
    let mut rng = stream.substream(&[purpose::SATURATION, 1]);
    let cert = saturation_check(cb, cfg.saturation_trials, &mut rng);
    report.push(
        "saturation",
        cert.is_saturated(),
        true,
        format!("{} of {} samples within 2 r0", cert.covered, cert.trials),
    );
    let log2_m = (cb.len() as f64).log2();
    let lb = count_lower_bound(n as u64, cb.edge(), cb.r0());
    report.push("count-lower-bound", log2_m >= lb, true, format!("log2 M = {log2_m}, bound {lb}"));
    let dens = with_threads(cfg.threads, || density_estimate_par(cb, cfg.density_trials, &stream))?;
    let nf = n as f64;
    report.push(
        "density-lower",
        dens.estimate >= 2f64.powf(-nf) * (1.0 - 3.0 * dens.stderr),
        true,
        format!("density {} +- {}, 2^-n = {}", dens.estimate, dens.stderr, 2f64.powf(-nf)),
    );
    report.push(
        "density-upper",
        dens.estimate <= 2f64.powf(-0.599 * nf) * (1.0 + 3.0 * dens.stderr),
        false,
        format!("density {}, 2^-0.599n = {}", dens.estimate, 2f64.powf(-0.599 * nf)),
    );
    let conv = ConverseConfig::derived(&params, n, b);
    if cb.len() >= 2 {
        let md = min_distance_check(cb, conv.eps_prime)?;
        report.push(
            "min-distance",
            md.passed(),
            true,
            format!("{} of {} pairs within eps' = {}", md.offending.len(), md.pairs_checked, conv.eps_prime),
        );
    }
    let uc = upper_count_check(cb, &params, b);
    report.push("upper-count", uc.holds, true, format!("log2 M = {}, bound {}", uc.log2_m, uc.log2_bound));
    report.push("kappa-below-one", conv.kappa_below_one(), false, format!("kappa = {}", conv.kappa));

    // contradiction demo: first codeword against a copy shifted by eps'/2
    let c1 = cb.release_vector(0);
    let shifted: Vec<f64> = c1
        .as_slice()
        .iter()
        .map(|&x| {
            let up = x + 0.5 * conv.eps_prime;
            if up <= cb.meta().amplitude { up } else { x - 0.5 * conv.eps_prime }
        })
        .collect();
    let c2 = crate::channel::ReleaseVector::new(shifted)?;
    let decoder = DecoderConfig::derived(params.amplitude(), n, b, cfg.metric_mode);
    let demo = with_threads(cfg.threads, || {
        converse_contradiction_demo(&c1, &c2, &params, &conv, &decoder, cfg.trials, &stream)
    })??;
    report.push(
        "contradiction-demo",
        demo.passed,
        true,
        format!("P1 + P2 = {} (threshold {})", demo.sum, demo.threshold),
    );
    Ok(())
}

/// Property suite. Checks on a codebook run when one is configured or
/// present in the output directory; a codebook that fails to load or
/// violates an invariant is reported as a failed check.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<(VerifyReport, RunManifest)> {
    cfg.validate()?;
    let mut run = Run::start("verify", &cfg.out)?;
    let mut report = VerifyReport { checks: Vec::new() };
    verify_generic(cfg, &mut report)?;
    let path = cfg.codebook.clone().unwrap_or_else(|| cfg.out.join("codebook.txt"));
    if path.exists() {
        match Codebook::load(&path).and_then(|cb| cb.validate().map(|_| cb)) {
            Ok(cb) => {
                report.push("codebook-invariants", true, true, format!("{} codewords", cb.len()));
                verify_codebook(cfg, &cb, &mut report)?;
            }
            Err(Error::Invariant { name, detail }) => {
                report.push(&name, false, true, detail);
            }
            Err(Error::Format { line, msg }) => {
                report.push("codebook-format", false, true, format!("line {line}: {msg}"));
            }
            Err(e) => return Err(e),
        }
    } else if cfg.codebook.is_some() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("codebook file {} not found", path.display()),
        )));
    }
    run.write_json("verify.json", &report)?;
    let manifest = run.finish(cfg)?;
    Ok((report, manifest))
}

/// Process exit code for an error: 1 for usage and domain problems, 2 for
/// verification failures, 3 for I/O and format problems.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format { .. } => 3,
        Error::Invariant { .. } => 2,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig {
            a: Some(0.5),
            stop_k: Some(7),
            codebook: Some("x.txt".into()),
            ..Default::default()
        };
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"n": 5, "seed": 9}"#).unwrap();
        assert_eq!((cfg.n, cfg.seed, cfg.trials), (5, 9, 10_000));
    }

    #[test]
    fn bad_config_reports_line() {
        let err = ExperimentConfig::from_json("{\n  \"n\": 5,\n  \"bogus\": 1\n}").unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }), "{err}");
        let err = ExperimentConfig::from_json("{\"channel\": {\"p\": 2.0, \"t_s\": 10, \"p_max\": 1, \"p_ave\": 1}}")
            .unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 2}"#).is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = ExperimentConfig::from_json(r#"{"n": 5, "seed": 9}"#).unwrap();
        cfg.apply(&Overrides { seed: Some(3), n: Some(6), ..Default::default() });
        assert_eq!((cfg.n, cfg.seed), (6, 3));
    }

    #[test]
    fn pairs_are_distinct_and_deterministic() {
        let s = SeedStream::new(5);
        let p = sample_pairs(4, 100, &s);
        assert_eq!(p, sample_pairs(4, 100, &s));
        assert!(p.iter().all(|&(i, j)| i != j && (1..=4).contains(&i) && (1..=4).contains(&j)));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Usage("x".into())), 1);
        assert_eq!(exit_code(&Error::Format { line: 1, msg: "x".into() }), 3);
        assert_eq!(exit_code(&Error::Invariant { name: "x".into(), detail: String::new() }), 2);
    }
}
