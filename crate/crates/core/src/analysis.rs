//! Type I / type II error probabilities: Monte Carlo estimates, exact metric
//! moments, and the closed-form Chebyshev bounds of the achievability
//! argument.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, ChannelSampler, ReleaseVector};
use crate::codec::{check_index, symbol_mean, DecoderConfig, MetricMode};
use crate::error::{domain, Error, Result};
use crate::packing::Codebook;
use crate::rng::{purpose, SeedStream};

/// Smallest trial count accepted by the Monte Carlo estimators.
pub const MIN_TRIALS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Type1,
    Type2,
}

/// A Monte Carlo error-probability estimate with everything needed to replay it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub kind: ErrorKind,
    /// Sent message (one-based).
    pub i: usize,
    /// Target message (one-based).
    pub j: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

impl ErrorEstimate {
    fn from_count(kind: ErrorKind, i: usize, j: usize, hits: u64, trials: u64, seed: u64) -> Self {
        let estimate = hits as f64 / trials as f64;
        Self {
            kind,
            i,
            j,
            estimate,
            stderr: binomial_stderr(estimate, trials),
            trials,
            seed,
        }
    }
}

pub fn binomial_stderr(estimate: f64, trials: u64) -> f64 {
    (estimate * (1.0 - estimate) / trials as f64).sqrt()
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::Usage(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    Ok(())
}

/// Draws `Y ~ W(.|sent)` symbol by symbol and returns `T(Y, target)` without
/// materializing `Y`.
#[inline]
fn sampled_metric<R: Rng + ?Sized>(
    sampler: &ChannelSampler,
    sent: &[f64],
    target: &[f64],
    mode: MetricMode,
    rng: &mut R,
) -> f64 {
    let params = sampler.params();
    let q = 1.0 - params.p();
    let mut s = 0.0;
    for (&xs, &ct) in sent.iter().zip(target) {
        let y = sampler.draw(params.molecule_count(xs), rng) as f64;
        let d = y - symbol_mean(ct, params, mode);
        s += d * d - q * y;
    }
    s / sent.len() as f64
}

/// `P_{e,1}(i)`: fraction of outputs of `c_i` rejected by decoder `i`.
pub fn mc_type1(
    i: usize,
    cb: &Codebook,
    cfg: &DecoderConfig,
    params: &ChannelParams,
    trials: u64,
    stream: &SeedStream,
) -> Result<ErrorEstimate> {
    check_index(i, cb)?;
    check_trials(trials)?;
    let sampler = ChannelSampler::new(params);
    let c = cb.codeword(i - 1);
    let [hits] = stream.count_events(&[purpose::TYPE1, i as u64], trials, |rng| {
        [sampled_metric(&sampler, c, c, cfg.metric_mode, rng).abs() > cfg.delta_n]
    });
    Ok(ErrorEstimate::from_count(ErrorKind::Type1, i, i, hits, trials, stream.root()))
}

/// `P_{e,2}(i, j)`: fraction of outputs of `c_i` accepted by decoder `j`.
pub fn mc_type2(
    i: usize,
    j: usize,
    cb: &Codebook,
    cfg: &DecoderConfig,
    params: &ChannelParams,
    trials: u64,
    stream: &SeedStream,
) -> Result<ErrorEstimate> {
    check_index(i, cb)?;
    check_index(j, cb)?;
    if i == j {
        return Err(Error::Usage("type II error needs distinct sent and target messages".into()));
    }
    check_trials(trials)?;
    let sampler = ChannelSampler::new(params);
    let (ci, cj) = (cb.codeword(i - 1), cb.codeword(j - 1));
    let [hits] = stream.count_events(&[purpose::TYPE2, i as u64, j as u64], trials, |rng| {
        [sampled_metric(&sampler, ci, cj, cfg.metric_mode, rng).abs() <= cfg.delta_n]
    });
    Ok(ErrorEstimate::from_count(ErrorKind::Type2, i, j, hits, trials, stream.root()))
}

/// Frequencies of the events used to split the type II error, all on the
/// same samples (un-normalized sums, thresholds scaled by `n`):
///
/// * `accept`: `|sum (Y - mu_j)^2 - (1-p) Y| <= n delta` (the decision itself)
/// * `relaxed`: `sum (Y - mu_j)^2 - (1-p) Y <= n delta`
/// * `cross`: `|sum (Y - mu_i)(mu_i - mu_j)| > n delta`
/// * `shifted`: `sum (Y - mu_i)^2 + |mu_i - mu_j|^2 - (1-p) Y <= 2 n delta`
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Type2Events {
    pub trials: u64,
    pub accept: f64,
    pub relaxed: f64,
    pub cross: f64,
    pub shifted: f64,
    /// Samples where `|a| - |b| <= |a - b|` failed (must be zero).
    pub reverse_triangle_failures: u64,
}

pub fn mc_type2_events(
    i: usize,
    j: usize,
    cb: &Codebook,
    cfg: &DecoderConfig,
    params: &ChannelParams,
    trials: u64,
    stream: &SeedStream,
) -> Result<Type2Events> {
    check_index(i, cb)?;
    check_index(j, cb)?;
    if i == j {
        return Err(Error::Usage("type II events need distinct messages".into()));
    }
    check_trials(trials)?;
    let sampler = ChannelSampler::new(params);
    let mode = cfg.metric_mode;
    let (ci, cj) = (cb.codeword(i - 1), cb.codeword(j - 1));
    let mu_i: Vec<f64> = ci.iter().map(|&c| symbol_mean(c, params, mode)).collect();
    let mu_j: Vec<f64> = cj.iter().map(|&c| symbol_mean(c, params, mode)).collect();
    let shift2: f64 = mu_i.iter().zip(&mu_j).map(|(a, b)| (a - b) * (a - b)).sum();
    let n_delta = cb.n() as f64 * cfg.delta_n;
    let q = 1.0 - params.p();
    let counts = stream.count_events(&[purpose::TYPE2, i as u64, j as u64, 1], trials, |rng| {
        let (mut full, mut centered, mut cross, mut qy) = (0.0, 0.0, 0.0, 0.0);
        for t in 0..ci.len() {
            let y = sampler.draw(params.molecule_count(ci[t]), rng) as f64;
            let dj = y - mu_j[t];
            let di = y - mu_i[t];
            full += dj * dj;
            centered += di * di;
            cross += di * (mu_i[t] - mu_j[t]);
            qy += q * y;
        }
        let reverse_ok = full.abs() - qy.abs() <= (full - qy).abs();
        [
            (full - qy).abs() <= n_delta,
            full - qy <= n_delta,
            cross.abs() > n_delta,
            centered + shift2 - qy <= 2.0 * n_delta,
            !reverse_ok,
        ]
    });
    let f = |c: u64| c as f64 / trials as f64;
    Ok(Type2Events {
        trials,
        accept: f(counts[0]),
        relaxed: f(counts[1]),
        cross: f(counts[2]),
        shifted: f(counts[3]),
        reverse_triangle_failures: counts[4],
    })
}

/// Monte Carlo mean of `T(Y, c)` for `Y ~ W(.|c)`, with its standard error.
pub fn mc_metric_mean(
    c: &ReleaseVector,
    params: &ChannelParams,
    mode: MetricMode,
    trials: u64,
    stream: &SeedStream,
) -> Result<(f64, f64)> {
    check_trials(trials)?;
    let sampler = ChannelSampler::new(params);
    let x = c.as_slice();
    let (s, s2) = stream.sum_moments(&[purpose::SWEEP, 0], trials, |rng| {
        sampled_metric(&sampler, x, x, mode, rng)
    });
    let t = trials as f64;
    let mean = s / t;
    let var = (s2 / t - mean * mean).max(0.0) * t / (t - 1.0);
    Ok((mean, (var / t).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Exact mean and variance of `T(Y, c)` when `c` itself is sent, from the
/// Binomial central moments of each symbol.
pub fn metric_moments(c: &ReleaseVector, params: &ChannelParams, mode: MetricMode) -> MetricMoments {
    let p = params.p();
    let q = 1.0 - p;
    let n = c.len() as f64;
    let (mut mean, mut var) = (0.0, 0.0);
    for &x in c.as_slice() {
        let count = params.molecule_count(x) as f64;
        let m2 = count * p * q;
        let m3 = m2 * (q - p);
        let m4 = m2 * (1.0 + 3.0 * (count - 2.0) * p * q);
        // Z = D^2 + k D + shift^2 - q N p with D = Y - Np centered
        let shift = count * p - symbol_mean(x, params, mode);
        let k = 2.0 * shift - q;
        mean += shift * shift;
        var += m4 - m2 * m2 + 2.0 * k * m3 + k * k * m2;
    }
    MetricMoments { mean: mean / n, variance: var / (n * n) }
}

/// Closed-form Chebyshev bounds for the threshold decoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticBounds {
    pub type1_bound: f64,
    pub zeta0: f64,
    pub zeta1: f64,
    pub type2_bound: f64,
    /// Codeword amplitude used inside `exp(8 / (p T_s c))`.
    pub c_ref: f64,
}

/// Numerator shared by the type I bound and `zeta1`:
/// `A^4 T^4 e + (2AT+1)^2 AT + (2AT+1) A^2 T^2 sqrt(e AT)` with
/// `e = exp(8 / (p T c_ref))`.
fn variance_numerator(params: &ChannelParams, c_ref: f64) -> Result<f64> {
    if !(c_ref > 0.0 && c_ref.is_finite()) {
        return Err(domain(format!("c_ref must be positive, got {c_ref}")));
    }
    let at = params.amplitude() * params.symbol_duration();
    let e = (8.0 / (params.p() * params.symbol_duration() * c_ref)).exp();
    let lin = 2.0 * at + 1.0;
    Ok(at.powi(4) * e + lin * lin * at + lin * at * at * (e * at).sqrt())
}

fn n_pow_b(n: usize, b: f64) -> f64 {
    (n as f64).powf(b)
}

pub fn analytic_type1_bound(params: &ChannelParams, n: usize, b: f64, c_ref: f64) -> Result<f64> {
    Ok(variance_numerator(params, c_ref)? / n_pow_b(n, b))
}

/// `zeta0 = 4 A^3 T^3 p^3 (1-p) / n^b`.
pub fn zeta0(params: &ChannelParams, n: usize, b: f64) -> f64 {
    let apt = params.amplitude() * params.symbol_duration() * params.p();
    4.0 * apt.powi(3) * (1.0 - params.p()) / n_pow_b(n, b)
}

pub fn zeta1(params: &ChannelParams, n: usize, b: f64, c_ref: f64) -> Result<f64> {
    analytic_type1_bound(params, n, b, c_ref)
}

pub fn analytic_bounds(params: &ChannelParams, n: usize, b: f64, c_ref: f64) -> Result<AnalyticBounds> {
    let type1_bound = analytic_type1_bound(params, n, b, c_ref)?;
    let z0 = zeta0(params, n, b);
    let z1 = zeta1(params, n, b, c_ref)?;
    Ok(AnalyticBounds { type1_bound, zeta0: z0, zeta1: z1, type2_bound: z0 + z1, c_ref })
}

/// Default `c_ref`: the smallest positive coordinate in the codebook.
pub fn default_c_ref(cb: &Codebook) -> Result<f64> {
    cb.min_positive_coordinate()
        .ok_or_else(|| domain("codebook has no positive coordinate; c_ref is undefined"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::log_pmf;
    use crate::packing::CodebookMeta;

    fn params() -> ChannelParams {
        ChannelParams::new(0.3, 10.0, 1.0, 1.0).unwrap()
    }

    fn book(words: Vec<Vec<f64>>) -> Codebook {
        let meta = CodebookMeta {
            a: 1.0 / 3.0,
            b: 0.25,
            amplitude: 1.0,
            lower: 0.0,
            seed: 0,
            stop_k: 1,
            method: "manual".into(),
            candidates: 0,
            rejections: 0,
            repaired: 0,
        };
        Codebook::from_codewords(words, 0.1, meta).unwrap()
    }

    #[test]
    fn exact_mean_is_zero_in_exact_mode() {
        let c = ReleaseVector::new(vec![0.05, 0.37, 0.999, 0.5, 1.0]).unwrap();
        let m = metric_moments(&c, &params(), MetricMode::ExactFloor);
        assert_eq!(m.mean, 0.0);
        let zero = metric_moments(&ReleaseVector::new(vec![0.0; 3]).unwrap(), &params(), MetricMode::ExactFloor);
        assert_eq!((zero.mean, zero.variance), (0.0, 0.0));
    }

    #[test]
    fn variance_matches_exhaustive_support() {
        // n = 1, N = 10, p = 0.5
        let params = ChannelParams::new(0.5, 10.0, 1.0, 1.0).unwrap();
        let c = ReleaseVector::new(vec![1.0]).unwrap();
        for mode in [MetricMode::ExactFloor, MetricMode::PaperApprox] {
            let mut e1 = 0.0;
            let mut e2 = 0.0;
            for y in 0..=10u64 {
                let w = log_pmf(10, 0.5, y).unwrap().exp();
                let t = (y as f64 - 5.0).powi(2) - 0.5 * y as f64;
                e1 += w * t;
                e2 += w * t * t;
            }
            let m = metric_moments(&c, &params, mode);
            assert!((m.mean - e1).abs() < 1e-12);
            assert!((m.variance - (e2 - e1 * e1)).abs() < 1e-10, "{m:?}");
        }
    }

    #[test]
    fn approx_mode_moments_match_enumeration() {
        // T_s c non-integer so the two modes differ
        let params = ChannelParams::new(0.35, 7.0, 1.0, 1.0).unwrap();
        let c = ReleaseVector::new(vec![0.9, 0.45]).unwrap();
        let m = metric_moments(&c, &params, MetricMode::PaperApprox);
        let n0 = params.molecule_count(0.9);
        let n1 = params.molecule_count(0.45);
        let mu = [0.35 * 7.0 * 0.9, 0.35 * 7.0 * 0.45];
        let (mut e1, mut e2) = (0.0, 0.0);
        for y0 in 0..=n0 {
            for y1 in 0..=n1 {
                let w = (log_pmf(n0, 0.35, y0).unwrap() + log_pmf(n1, 0.35, y1).unwrap()).exp();
                let z = |y: u64, m: f64| (y as f64 - m).powi(2) - 0.65 * y as f64;
                let t = (z(y0, mu[0]) + z(y1, mu[1])) / 2.0;
                e1 += w * t;
                e2 += w * t * t;
            }
        }
        assert!((m.mean - e1).abs() < 1e-10);
        assert!((m.variance - (e2 - e1 * e1)).abs() < 1e-9);
    }

    #[test]
    fn type1_bound_direct_value_and_scaling() {
        let p = params();
        let got = analytic_type1_bound(&p, 64, 0.25, 1.0).unwrap();
        // independent recomputation: A=1, T=10, p=0.3, c_ref=1
        let e = (8.0f64 / 3.0).exp();
        let expected = (1e4 * e + 441.0 * 10.0 + 21.0 * 100.0 * (10.0 * e).sqrt()) / 64f64.powf(0.25);
        assert!((got - expected).abs() / expected < 1e-14);
        let doubled = analytic_type1_bound(&p, 128, 0.25, 1.0).unwrap();
        assert!((doubled / got - 2f64.powf(-0.25)).abs() < 1e-14);
        let far = analytic_type1_bound(&p, 1 << 40, 0.25, 1.0).unwrap();
        assert!(far < got * 1e-2);
        assert!(analytic_type1_bound(&p, 64, 0.25, 0.0).is_err());
    }

    #[test]
    fn zeta_values() {
        let z = zeta0(&params(), 64, 0.25);
        let expected = 4.0 * 1000.0 * 0.027 * 0.7 / 64f64.powf(0.25);
        assert!((z - expected).abs() / expected < 1e-13);
        let tiny = ChannelParams::new(1e-6, 10.0, 1.0, 1.0).unwrap();
        assert!(zeta0(&tiny, 64, 0.25) < 1e-12);
        let b = analytic_bounds(&params(), 64, 0.25, 0.5).unwrap();
        assert_eq!(b.type2_bound, b.zeta0 + b.zeta1);
        assert_eq!(b.zeta1, b.type1_bound);
    }

    #[test]
    fn usage_errors() {
        let cb = book(vec![vec![0.5; 4], vec![0.2; 4]]);
        let cfg = DecoderConfig::derived(1.0, 4, 0.25, MetricMode::ExactFloor);
        let s = SeedStream::new(1);
        assert!(matches!(mc_type2(1, 1, &cb, &cfg, &params(), 1000, &s), Err(Error::Usage(_))));
        assert!(matches!(mc_type1(1, &cb, &cfg, &params(), 10, &s), Err(Error::Usage(_))));
        assert!(mc_type1(3, &cb, &cfg, &params(), 1000, &s).is_err());
    }

    #[test]
    fn infinite_threshold_never_rejects() {
        let cb = book(vec![vec![0.5; 8]]);
        let cfg = DecoderConfig { delta_n: f64::INFINITY, metric_mode: MetricMode::ExactFloor, b: 0.25 };
        let e = mc_type1(1, &cb, &cfg, &params(), 1000, &SeedStream::new(2)).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn duplicate_codewords_are_complementary() {
        let cb = book(vec![vec![0.6; 16], vec![0.6; 16]]);
        let cfg = DecoderConfig::derived(1.0, 16, 0.25, MetricMode::ExactFloor);
        let s = SeedStream::new(4);
        let t1 = mc_type1(1, &cb, &cfg, &params(), 20_000, &s).unwrap();
        let t2 = mc_type2(1, 2, &cb, &cfg, &params(), 20_000, &s).unwrap();
        let se = (t1.stderr.powi(2) + t2.stderr.powi(2)).sqrt();
        assert!((t1.estimate + t2.estimate - 1.0).abs() < 4.0 * se);
    }
}
