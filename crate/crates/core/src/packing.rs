//! Sphere-packing codebooks inside the hypercube of admissible release rates.
//!
//! Codewords are centers of radius-`r0` spheres, `r0 = sqrt(n * eps_n)` with
//! `eps_n = a / n^((1-b)/2)`. The construction is random sequential insertion:
//! uniform candidates are accepted when they sit at distance `>= 2 r0` from
//! every accepted center, and insertion stops after `stop_k` consecutive
//! rejections. A saturation check afterwards looks for points of the cube that
//! are farther than `2 r0` from all centers; such points are valid new centers
//! and can be inserted to repair the packing.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::channel::{ChannelParams, ReleaseVector};
use crate::error::{Error, Result};
use crate::rng::{purpose, SeedStream};

pub const FORMAT_VERSION: u32 = 1;
const HEADER_TAG: &str = "#bdi-codebook";

/// Volume of an n-ball, kept as `log2` so that it survives any dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Volume {
    pub log2: f64,
}

impl Volume {
    /// Linear value, or `None` when it over- or underflows `f64`.
    pub fn value(&self) -> Option<f64> {
        let v = self.log2.exp2();
        (v.is_finite() && v > 0.0).then_some(v)
    }
}

/// `pi^(n/2) r^n / Gamma(n/2 + 1)`.
pub fn sphere_volume(n: u64, r: f64) -> Volume {
    Volume { log2: log2_sphere_volume(n, r) }
}

pub fn log2_sphere_volume(n: u64, r: f64) -> f64 {
    let nf = n as f64;
    let ln = 0.5 * nf * std::f64::consts::PI.ln() + nf * r.ln() - ln_gamma(0.5 * nf + 1.0);
    ln / std::f64::consts::LN_2
}

/// `log2( 2^-n * edge^n / Vol(S(n, r0)) )`, the guaranteed size of a
/// saturated packing.
pub fn count_lower_bound(n: u64, edge: f64, r0: f64) -> f64 {
    let nf = n as f64;
    -nf + nf * edge.log2() - log2_sphere_volume(n, r0)
}

/// `a = 3A / (p^2 T_s^2)`, which makes `T_s^2 p^2 eps_n = 3 delta_n`.
pub fn coupled_packing_constant(params: &ChannelParams) -> f64 {
    let pt = params.p() * params.symbol_duration();
    3.0 * params.amplitude() / (pt * pt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingConfig {
    pub n: usize,
    /// Packing constant `a`.
    pub a: f64,
    /// Exponent constant `b` in (0, 1).
    pub b: f64,
    /// Cube edge `A`.
    pub amplitude: f64,
    /// Smallest admissible coordinate; candidates live in `[lower, A]^n`.
    pub lower: f64,
    pub stop_k: u64,
    pub seed: u64,
}

impl PackingConfig {
    /// Defaults tied to a channel: coupled `a`, `lower = 0.05 A`,
    /// `stop_k = 1000 n`.
    pub fn coupled(n: usize, b: f64, params: &ChannelParams, seed: u64) -> Self {
        Self {
            n,
            a: coupled_packing_constant(params),
            b,
            amplitude: params.amplitude(),
            lower: 0.05 * params.amplitude(),
            stop_k: 1000 * n as u64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Domain(format!("blocklength must be >= 2, got {}", self.n)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Domain(format!("packing constant a must be positive, got {}", self.a)));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::Domain(format!("b must lie in (0,1), got {}", self.b)));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Domain(format!("amplitude must be positive, got {}", self.amplitude)));
        }
        if !(self.lower >= 0.0 && self.lower < self.amplitude) {
            return Err(Error::Domain(format!(
                "lower coordinate bound must lie in [0, A), got {}",
                self.lower
            )));
        }
        if self.stop_k == 0 {
            return Err(Error::Domain("stop_k must be >= 1".into()));
        }
        Ok(())
    }

    /// `eps_n = a / n^((1-b)/2)`.
    pub fn epsilon_n(&self) -> f64 {
        self.a / (self.n as f64).powf(0.5 * (1.0 - self.b))
    }

    /// `r0 = sqrt(n eps_n) = sqrt(a) n^((1+b)/4)`.
    pub fn radius(&self) -> f64 {
        (self.n as f64 * self.epsilon_n()).sqrt()
    }
}

/// Provenance and rejection statistics of a codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookMeta {
    pub a: f64,
    pub b: f64,
    pub amplitude: f64,
    pub lower: f64,
    pub seed: u64,
    pub stop_k: u64,
    pub method: String,
    pub candidates: u64,
    pub rejections: u64,
    /// Centers added by saturation repair.
    pub repaired: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    n: usize,
    codewords: Vec<Vec<f64>>,
    r0: f64,
    meta: CodebookMeta,
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Codebook {
    /// Wraps explicit codewords. No separation is enforced here; call
    /// [`Codebook::validate`] to check the packing invariants.
    pub fn from_codewords(codewords: Vec<Vec<f64>>, r0: f64, meta: CodebookMeta) -> Result<Self> {
        let n = codewords.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(Error::Domain("codebook needs at least one nonempty codeword".into()));
        }
        if let Some(bad) = codewords.iter().find(|c| c.len() != n) {
            return Err(Error::Shape { expected: n, actual: bad.len() });
        }
        Ok(Self { n, codewords, r0, meta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn meta(&self) -> &CodebookMeta {
        &self.meta
    }

    pub fn codewords(&self) -> &[Vec<f64>] {
        &self.codewords
    }

    /// Codeword by zero-based position.
    pub fn codeword(&self, idx: usize) -> &[f64] {
        &self.codewords[idx]
    }

    pub fn release_vector(&self, idx: usize) -> ReleaseVector {
        ReleaseVector::new(self.codewords[idx].clone()).expect("codewords are validated")
    }

    pub fn edge(&self) -> f64 {
        self.meta.amplitude - self.meta.lower
    }

    /// Smallest strictly positive coordinate over all codewords.
    pub fn min_positive_coordinate(&self) -> Option<f64> {
        self.codewords
            .iter()
            .flatten()
            .copied()
            .filter(|&x| x > 0.0)
            .min_by(f64::total_cmp)
    }

    pub fn min_pairwise_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = dist2(&self.codewords[i], &self.codewords[j]);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best.map(f64::sqrt)
    }

    /// Checks the packing invariants: pairwise distance `>= 2 r0` and every
    /// coordinate inside `[lower, A]`.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.meta.lower, self.meta.amplitude);
        for (i, c) in self.codewords.iter().enumerate() {
            if let Some(x) = c.iter().find(|&&x| !(x >= lo && x <= hi)) {
                return Err(Error::Invariant {
                    name: "coordinate-range".into(),
                    detail: format!("codeword {} has coordinate {x} outside [{lo}, {hi}]", i + 1),
                });
            }
        }
        let min2 = 4.0 * self.r0 * self.r0;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = dist2(&self.codewords[i], &self.codewords[j]);
                if d < min2 {
                    return Err(Error::Invariant {
                        name: "min-distance".into(),
                        detail: format!(
                            "codewords {} and {} are {} apart, need >= {}",
                            i + 1,
                            j + 1,
                            d.sqrt(),
                            2.0 * self.r0
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Every codeword meets the peak and average release constraints.
    pub fn satisfies_rate_constraints(&self, params: &ChannelParams) -> bool {
        self.codewords
            .iter()
            .all(|c| ReleaseVector::new(c.clone()).is_ok_and(|x| x.satisfies_rate_constraints(params)))
    }

    fn is_free(&self, x: &[f64]) -> bool {
        let min2 = 4.0 * self.r0 * self.r0;
        self.codewords.iter().all(|c| dist2(c, x) >= min2)
    }

    fn covered_within(&self, x: &[f64], radius: f64) -> bool {
        let r2 = radius * radius;
        self.codewords.iter().any(|c| dist2(c, x) <= r2)
    }

    /// Drops the codeword at a zero-based position.
    pub fn remove(&mut self, idx: usize) -> Vec<f64> {
        self.codewords.remove(idx)
    }

    /// Serializes to the versioned text format: one header line, then one
    /// line per codeword with 17 significant digits per value.
    pub fn to_text(&self) -> String {
        let m = &self.meta;
        let mut s = format!(
            "{HEADER_TAG} v{FORMAT_VERSION} n={} M={} A={:?} a={:?} b={:?} r0={:?} seed={} stop_K={} c_min={:?}\n",
            self.n,
            self.len(),
            m.amplitude,
            m.a,
            m.b,
            self.r0,
            m.seed,
            m.stop_k,
            m.lower
        );
        for c in &self.codewords {
            let mut first = true;
            for x in c {
                if !first {
                    s.push(' ');
                }
                first = false;
                write!(s, "{x:.16e}").expect("writing to a String");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Format { line: 1, msg: "empty file".into() })?;
        let fmt_err = |line: usize, msg: String| Error::Format { line, msg };
        let mut parts = header.split_whitespace();
        if parts.next() != Some(HEADER_TAG) {
            return Err(fmt_err(1, format!("expected header tag {HEADER_TAG}")));
        }
        let version = parts.next().unwrap_or_default();
        if version != format!("v{FORMAT_VERSION}") {
            return Err(fmt_err(1, format!("unsupported format version {version:?}")));
        }
        let mut fields = std::collections::BTreeMap::new();
        for kv in parts {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| fmt_err(1, format!("malformed header field {kv:?}")))?;
            fields.insert(k, v);
        }
        fn get<T: std::str::FromStr>(
            fields: &std::collections::BTreeMap<&str, &str>,
            key: &str,
        ) -> Result<T> {
            let raw = fields.get(key).ok_or(Error::Format {
                line: 1,
                msg: format!("missing header field {key}"),
            })?;
            raw.parse().map_err(|_| Error::Format { line: 1, msg: format!("bad value for {key}: {raw}") })
        }
        let n: usize = get(&fields, "n")?;
        let m: usize = get(&fields, "M")?;
        let meta = CodebookMeta {
            a: get(&fields, "a")?,
            b: get(&fields, "b")?,
            amplitude: get(&fields, "A")?,
            lower: fields.get("c_min").map_or(Ok(0.0), |_| get(&fields, "c_min"))?,
            seed: get(&fields, "seed")?,
            stop_k: get(&fields, "stop_K")?,
            method: "file".into(),
            candidates: 0,
            rejections: 0,
            repaired: 0,
        };
        let r0: f64 = get(&fields, "r0")?;
        let mut codewords = Vec::with_capacity(m);
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fmt_err(idx + 1, format!("bad number: {e}")))?;
            if row.len() != n {
                return Err(fmt_err(idx + 1, format!("expected {n} values, found {}", row.len())));
            }
            codewords.push(row);
        }
        if codewords.len() != m {
            return Err(fmt_err(1, format!("header declares M={m} but found {} codewords", codewords.len())));
        }
        Codebook::from_codewords(codewords, r0, meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn uniform_point<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
}

/// Random sequential insertion with a consecutive-rejection stopping rule.
pub fn construct_saturated(config: &PackingConfig) -> Result<Codebook> {
    config.validate()?;
    let r0 = config.radius();
    let edge = config.amplitude - config.lower;
    if r0 >= edge * (config.n as f64).sqrt() {
        return Err(Error::Precondition(format!(
            "radius {r0} is not below the cube diagonal {}",
            edge * (config.n as f64).sqrt()
        )));
    }
    let mut rng = SeedStream::new(config.seed).substream(&[purpose::CONSTRUCT]);
    let mut cb = Codebook {
        n: config.n,
        codewords: Vec::new(),
        r0,
        meta: CodebookMeta {
            a: config.a,
            b: config.b,
            amplitude: config.amplitude,
            lower: config.lower,
            seed: config.seed,
            stop_k: config.stop_k,
            method: "random-sequential-insertion".into(),
            candidates: 0,
            rejections: 0,
            repaired: 0,
        },
    };
    let mut run = 0u64;
    while run < config.stop_k {
        let x = uniform_point(config.n, config.lower, config.amplitude, &mut rng);
        cb.meta.candidates += 1;
        if cb.is_free(&x) {
            cb.codewords.push(x);
            run = 0;
        } else {
            cb.meta.rejections += 1;
            run += 1;
        }
    }
    Ok(cb)
}

/// Monte Carlo evidence of saturation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationCertificate {
    pub trials: u64,
    /// Samples within `2 r0` of some center.
    pub covered: u64,
    pub covered_fraction: f64,
    /// First uncovered sample, if any.
    pub witness: Option<Vec<f64>>,
}

impl SaturationCertificate {
    pub fn is_saturated(&self) -> bool {
        self.witness.is_none()
    }
}

/// Samples `trials` uniform points of the codebook cube and counts those within
/// `2 r0` of a center.
pub fn saturation_check<R: Rng + ?Sized>(cb: &Codebook, trials: u64, rng: &mut R) -> SaturationCertificate {
    let (lo, hi) = (cb.meta.lower, cb.meta.amplitude);
    let mut covered = 0;
    let mut witness = None;
    for _ in 0..trials {
        let x = uniform_point(cb.n, lo, hi, rng);
        if cb.covered_within(&x, 2.0 * cb.r0) {
            covered += 1;
        } else if witness.is_none() {
            witness = Some(x);
        }
    }
    SaturationCertificate {
        trials,
        covered,
        covered_fraction: covered as f64 / trials.max(1) as f64,
        witness,
    }
}

/// Repeats saturation rounds of `trials` uniform samples, inserting every
/// sample that is still free, until a round inserts nothing or `max_rounds`
/// rounds have run. The last round is returned as the certificate: when it
/// inserted nothing, all of its samples were covered.
pub fn repair_saturation(cb: &mut Codebook, trials: u64, max_rounds: u32) -> SaturationCertificate {
    let stream = SeedStream::new(cb.meta.seed);
    let (lo, hi) = (cb.meta.lower, cb.meta.amplitude);
    let mut round = 0u64;
    loop {
        let mut rng = stream.substream(&[purpose::SATURATION, round]);
        let mut covered = 0;
        let mut witness = None;
        for _ in 0..trials {
            let x = uniform_point(cb.n, lo, hi, &mut rng);
            if cb.covered_within(&x, 2.0 * cb.r0) {
                covered += 1;
            } else {
                if witness.is_none() {
                    witness = Some(x.clone());
                }
                cb.codewords.push(x);
                cb.meta.repaired += 1;
            }
        }
        round += 1;
        if witness.is_none() || round >= max_rounds as u64 {
            return SaturationCertificate {
                trials,
                covered,
                covered_fraction: covered as f64 / trials.max(1) as f64,
                witness,
            };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
}

/// Fraction of the codebook cube covered by the union of radius-`r0` balls.
pub fn density_estimate<R: Rng + ?Sized>(cb: &Codebook, trials: u64, rng: &mut R) -> DensityEstimate {
    let (lo, hi) = (cb.meta.lower, cb.meta.amplitude);
    let hits = (0..trials)
        .filter(|_| cb.covered_within(&uniform_point(cb.n, lo, hi, rng), cb.r0))
        .count() as f64;
    let t = trials.max(1) as f64;
    let estimate = hits / t;
    DensityEstimate { estimate, stderr: (estimate * (1.0 - estimate) / t).sqrt(), trials }
}

/// Parallel version of [`density_estimate`] drawing from per-batch substreams.
pub fn density_estimate_par(cb: &Codebook, trials: u64, stream: &SeedStream) -> DensityEstimate {
    let (lo, hi) = (cb.meta.lower, cb.meta.amplitude);
    let [hits] = stream.count_events(&[purpose::DENSITY], trials, |rng| {
        [cb.covered_within(&uniform_point(cb.n, lo, hi, rng), cb.r0)]
    });
    let t = trials.max(1) as f64;
    let estimate = hits as f64 / t;
    DensityEstimate { estimate, stderr: (estimate * (1.0 - estimate) / t).sqrt(), trials }
}
