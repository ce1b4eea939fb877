//! Numerical checks of the converse argument: the minimum-gap property every
//! good DI code must have, the two-sided bound on ratios of Gamma functions,
//! and the likelihood-ratio product bounds for codeword pairs that violate the
//! gap property.

use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::channel::{ChannelParams, ChannelSampler, ObservationVector, ReleaseVector};
use crate::codec::{metric_raw, DecoderConfig};
use crate::error::{domain, Error, Result};
use crate::packing::{log2_sphere_volume, Codebook};
use crate::rng::{purpose, SeedStream};

/// Converse constants for one blocklength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConverseConfig {
    pub b: f64,
    /// Minimum per-coordinate gap `eps'_n = P_max / n^(1+b)`.
    pub eps_prime: f64,
    /// `kappa = 2 A T_s * T_s P_max / n^b`.
    pub kappa: f64,
}

impl ConverseConfig {
    pub fn derived(params: &ChannelParams, n: usize, b: f64) -> Self {
        let nf = n as f64;
        let t = params.symbol_duration();
        Self {
            b,
            eps_prime: params.peak_rate() / nf.powf(1.0 + b),
            kappa: 2.0 * params.amplitude() * t * t * params.peak_rate() / nf.powf(b),
        }
    }

    pub fn kappa_below_one(&self) -> bool {
        self.kappa < 1.0
    }
}

pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffendingPair {
    pub i: usize,
    pub j: usize,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinDistanceReport {
    pub eps_prime: f64,
    pub pairs_checked: u64,
    pub offending: Vec<OffendingPair>,
}

impl MinDistanceReport {
    pub fn passed(&self) -> bool {
        self.offending.is_empty()
    }
}

/// Flags every pair of codewords whose coordinates all agree to within
/// `eps_prime`.
pub fn min_distance_check(cb: &Codebook, eps_prime: f64) -> Result<MinDistanceReport> {
    if cb.len() < 2 {
        return Err(Error::Precondition(format!("need at least two codewords, got {}", cb.len())));
    }
    let mut offending = Vec::new();
    let mut pairs = 0;
    for i in 0..cb.len() {
        for j in i + 1..cb.len() {
            pairs += 1;
            let linf = linf_distance(cb.codeword(i), cb.codeword(j));
            if linf <= eps_prime {
                offending.push(OffendingPair { i: i + 1, j: j + 1, linf });
            }
        }
    }
    Ok(MinDistanceReport { eps_prime, pairs_checked: pairs, offending })
}

/// `(Gamma(a)/Gamma(b))^(1/(a-b))` with its bracketing values
/// `min/max{a, (a+b-1)/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaRatio {
    pub a: f64,
    pub b: f64,
    pub lower: f64,
    pub upper: f64,
    pub exact: f64,
    pub ln_exact: f64,
}

impl GammaRatio {
    /// `lower <= exact <= upper`, compared in the log domain with relative
    /// slack `rel`.
    pub fn sandwich_holds(&self, rel: f64) -> bool {
        let tol = rel * self.ln_exact.abs().max(1.0);
        let lower_ok = self.lower <= 0.0 || self.lower.ln() <= self.ln_exact + tol;
        let upper_ok = self.ln_exact <= self.upper.ln() + tol;
        lower_ok && upper_ok
    }
}

pub fn gamma_ratio_bounds(a: f64, b: f64) -> Result<GammaRatio> {
    if !(a > 0.0 && b > a && b.is_finite()) {
        return Err(domain(format!("need 0 < a < b, got a={a}, b={b}")));
    }
    let (ga, gb) = (ln_gamma(a), ln_gamma(b));
    if !(ga.is_finite() && gb.is_finite()) {
        return Err(domain(format!("log-gamma not finite at a={a}, b={b}")));
    }
    let ln_exact = (ga - gb) / (a - b);
    let mid = 0.5 * (a + b - 1.0);
    Ok(GammaRatio { a, b, lower: a.min(mid), upper: a.max(mid), exact: ln_exact.exp(), ln_exact })
}

/// `(1 + x)^r <= 1 + r x`, which holds for `x >= -1` and `r` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernoulliCheck {
    pub x: f64,
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `x >= -1` and `0 <= r <= 1`.
    pub applicable: bool,
    pub holds: bool,
}

pub fn bernoulli_check(x: f64, r: f64) -> BernoulliCheck {
    let lhs = (1.0 + x).powf(r);
    let rhs = 1.0 + r * x;
    BernoulliCheck {
        x,
        r,
        lhs,
        rhs,
        applicable: x >= -1.0 && (0.0..=1.0).contains(&r),
        holds: lhs <= rhs * (1.0 + 1e-12),
    }
}

/// Sign pattern of `c2 - c1` over the coordinates that differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConverseCase {
    Identical,
    /// `c1 < c2` wherever they differ.
    AllUp,
    /// `c2 < c1` wherever they differ.
    AllDown,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodRatioReport {
    pub case: ConverseCase,
    pub n_up: usize,
    pub n_down: usize,
    /// `W^n(y|c2) / W^n(y|c1)` in factorial-product form.
    pub exact: f64,
    pub ln_exact: f64,
    pub kappa: f64,
    pub lower: f64,
    pub upper: f64,
    /// Case-specific lower value before relaxing to `1 - kappa`.
    pub case_lower: f64,
    /// `(1 + 2 A T_s)^(T_s P_max / n^b)`, the upper chain before the
    /// Bernoulli step.
    pub case_upper: f64,
    pub bernoulli: BernoulliCheck,
}

impl LikelihoodRatioReport {
    pub fn sandwich_holds(&self) -> bool {
        let tol = 1e-10 * self.exact.abs().max(1.0);
        self.lower <= self.exact + tol && self.exact <= self.upper + tol
    }
}

fn ln_factorial(x: f64) -> f64 {
    ln_gamma(x + 1.0)
}

/// Evaluates the likelihood-ratio product
/// `prod_t (T c2)!/(T c1)! * (T c1 - y)!/(T c2 - y)! * (1-p)^(T (c2 - c1))`
/// with real-argument factorials, together with the bounds `1 -/+ kappa`.
pub fn likelihood_ratio_product_bounds(
    c1: &ReleaseVector,
    c2: &ReleaseVector,
    y: &ObservationVector,
    params: &ChannelParams,
    cfg: &ConverseConfig,
) -> Result<LikelihoodRatioReport> {
    let n = c1.len();
    if c2.len() != n {
        return Err(Error::Shape { expected: n, actual: c2.len() });
    }
    if y.len() != n {
        return Err(Error::Shape { expected: n, actual: y.len() });
    }
    let gap = linf_distance(c1.as_slice(), c2.as_slice());
    if gap > cfg.eps_prime {
        return Err(Error::Precondition(format!(
            "codewords differ by {gap} in some coordinate, more than eps'={}",
            cfg.eps_prime
        )));
    }
    let t = params.symbol_duration();
    let ln_q = (-params.p()).ln_1p();
    let (mut ln_ratio, mut up, mut down) = (0.0, 0, 0);
    for ((&a, &b), &yt) in c1.as_slice().iter().zip(c2.as_slice()).zip(y.as_slice()) {
        let (n1, n2, yf) = (t * a, t * b, yt as f64);
        if yf > n1 + 1e-9 || yf > n2 + 1e-9 {
            return Err(Error::Support(format!("y={yt} exceeds T_s c = {} or {}", n1, n2)));
        }
        match a.partial_cmp(&b) {
            Some(std::cmp::Ordering::Less) => up += 1,
            Some(std::cmp::Ordering::Greater) => down += 1,
            _ => {}
        }
        ln_ratio += ln_factorial(n2) - ln_factorial(n1) + ln_factorial((n1 - yf).max(0.0))
            - ln_factorial((n2 - yf).max(0.0))
            + (n2 - n1) * ln_q;
    }
    let case = match (up, down) {
        (0, 0) => ConverseCase::Identical,
        (_, 0) => ConverseCase::AllUp,
        (0, _) => ConverseCase::AllDown,
        _ => ConverseCase::Mixed,
    };
    let nb = (n as f64).powf(cfg.b);
    let at = params.amplitude() * t;
    let r = t * params.peak_rate() / nb;
    let case_lower = match case {
        ConverseCase::Identical | ConverseCase::AllDown => 1.0,
        ConverseCase::AllUp => 1.0 - params.p() * t * params.peak_rate() / nb,
        ConverseCase::Mixed => 1.0 - cfg.kappa,
    };
    Ok(LikelihoodRatioReport {
        case,
        n_up: up,
        n_down: down,
        exact: ln_ratio.exp(),
        ln_exact: ln_ratio,
        kappa: cfg.kappa,
        lower: 1.0 - cfg.kappa,
        upper: 1.0 + cfg.kappa,
        case_lower,
        case_upper: (1.0 + 2.0 * at).powf(r),
        bernoulli: bernoulli_check(2.0 * at, r),
    })
}

/// Result of simulating the decoder for `c1` on outputs of `c1` and `c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContradictionReport {
    pub linf_gap: f64,
    pub type1: f64,
    pub type2: f64,
    pub sum: f64,
    pub stderr: f64,
    pub trials: u64,
    pub kappa: f64,
    /// `1 - kappa - 3 stderr`.
    pub threshold: f64,
    pub passed: bool,
}

/// Estimates `P_{e,1}(1) + P_{e,2}(2, 1)` for a pair that violates the gap
/// property. Both estimates share one random stream, so identical codewords
/// give a sum of exactly one.
pub fn converse_contradiction_demo(
    c1: &ReleaseVector,
    c2: &ReleaseVector,
    params: &ChannelParams,
    cfg: &ConverseConfig,
    decoder: &DecoderConfig,
    trials: u64,
    stream: &SeedStream,
) -> Result<ContradictionReport> {
    if c1.len() != c2.len() {
        return Err(Error::Shape { expected: c1.len(), actual: c2.len() });
    }
    if trials == 0 {
        return Err(Error::Usage("trials must be positive".into()));
    }
    let gap = linf_distance(c1.as_slice(), c2.as_slice());
    if gap > cfg.eps_prime {
        return Err(Error::Precondition(format!(
            "pair is {gap} apart in l-inf, above eps'={}; the gap property is not violated",
            cfg.eps_prime
        )));
    }
    let sampler = ChannelSampler::new(params);
    let target = c1.as_slice();
    let run = |sent: &[f64], reject: bool| {
        let [hits] = stream.count_events(&[purpose::CONVERSE], trials, |rng| {
            let mut y = Vec::with_capacity(sent.len());
            sampler.sample_into(sent, rng, &mut y);
            let inside = metric_raw(&y, target, params, decoder.metric_mode).abs() <= decoder.delta_n;
            [inside != reject]
        });
        hits
    };
    let h1 = run(c1.as_slice(), true);
    let h2 = run(c2.as_slice(), false);
    let tf = trials as f64;
    let (e1, e2) = (h1 as f64 / tf, h2 as f64 / tf);
    let stderr = ((e1 * (1.0 - e1) + e2 * (1.0 - e2)) / tf).sqrt();
    let sum = (h1 + h2) as f64 / tf;
    let threshold = 1.0 - cfg.kappa - 3.0 * stderr;
    Ok(ContradictionReport {
        linf_gap: gap,
        type1: e1,
        type2: e2,
        sum,
        stderr,
        trials,
        kappa: cfg.kappa,
        threshold,
        passed: sum >= threshold,
    })
}

/// A random pair `(c1, c2, y)` with integer molecule counts `T_s c`, gaps of
/// at most `floor(T_s eps')` molecules per coordinate, and `y_t` drawn from
/// `Bin(min(N1_t, N2_t), p)`. `case` picks the sign pattern of the gaps;
/// `Mixed` needs `n >= 2`. Requires an integer `T_s`.
pub fn random_integer_instance<R: Rng + ?Sized>(
    n: usize,
    case: ConverseCase,
    params: &ChannelParams,
    cfg: &ConverseConfig,
    rng: &mut R,
) -> Result<(ReleaseVector, ReleaseVector, ObservationVector)> {
    let t = params.symbol_duration();
    if t.fract() != 0.0 {
        return Err(domain(format!("integer instances need an integer T_s, got {t}")));
    }
    let top = (t * params.amplitude()).floor() as i64;
    let max_gap = ((t * cfg.eps_prime).floor() as i64).min(top);
    let needs_gap = case != ConverseCase::Identical;
    if needs_gap && max_gap < 1 {
        return Err(Error::Precondition(format!(
            "no integer gap fits: T_s eps' = {}",
            t * cfg.eps_prime
        )));
    }
    if case == ConverseCase::Mixed && n < 2 {
        return Err(Error::Precondition("a mixed instance needs n >= 2".into()));
    }
    let mixed_up = if case == ConverseCase::Mixed { rng.random_range(1..n) } else { 0 };
    let (mut k1, mut k2) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for idx in 0..n {
        let up = match case {
            ConverseCase::Identical => None,
            ConverseCase::AllUp => Some(true),
            ConverseCase::AllDown => Some(false),
            ConverseCase::Mixed => Some(idx < mixed_up),
        };
        let (a, b) = match up {
            None => {
                let k = rng.random_range(0..=top);
                (k, k)
            }
            Some(dir) => {
                let g = rng.random_range(1..=max_gap);
                let lo = rng.random_range(0..=top - g);
                if dir { (lo, lo + g) } else { (lo + g, lo) }
            }
        };
        k1.push(a);
        k2.push(b);
    }
    let sampler = ChannelSampler::new(params);
    let y = k1.iter().zip(&k2).map(|(&a, &b)| sampler.draw(a.min(b) as u64, rng)).collect();
    let to_rates = |k: &[i64]| ReleaseVector::new(k.iter().map(|&v| v as f64 / t).collect());
    Ok((to_rates(&k1)?, to_rates(&k2)?, ObservationVector::new(y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpperCountReport {
    pub log2_m: f64,
    /// `n log2 P_max - log2 Vol(S(n, eps')) - 0.599 n`.
    pub log2_bound: f64,
    pub holds: bool,
}

pub fn upper_count_check(cb: &Codebook, params: &ChannelParams, b: f64) -> UpperCountReport {
    let n = cb.n();
    let nf = n as f64;
    let eps = params.peak_rate() / nf.powf(1.0 + b);
    let log2_bound = nf * params.peak_rate().log2() - log2_sphere_volume(n as u64, eps) - 0.599 * nf;
    let log2_m = (cb.len() as f64).log2();
    UpperCountReport { log2_m, log2_bound, holds: log2_m <= log2_bound }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::n_use_log_likelihood;
    use crate::codec::MetricMode;
    use crate::packing::CodebookMeta;

    fn meta() -> CodebookMeta {
        CodebookMeta {
            a: 1.0,
            b: 0.25,
            amplitude: 1.0,
            lower: 0.0,
            seed: 0,
            stop_k: 1,
            method: "manual".into(),
            candidates: 0,
            rejections: 0,
            repaired: 0,
        }
    }

    #[test]
    fn gamma_ratio_examples() {
        let g = gamma_ratio_bounds(2.0, 3.0).unwrap();
        assert!((g.exact - 2.0).abs() < 1e-12);
        assert_eq!((g.lower, g.upper), (2.0, 2.0));
        assert!(g.sandwich_holds(1e-10));
        let g = gamma_ratio_bounds(1.0, 2.0).unwrap();
        assert!((g.exact - 1.0).abs() < 1e-12);
        assert_eq!((g.lower, g.upper), (1.0, 1.0));
        assert!(gamma_ratio_bounds(2.0, 2.0).is_err());
        assert!(gamma_ratio_bounds(-1.0, 2.0).is_err());
    }

    #[test]
    fn duplicates_are_flagged() {
        let cb = Codebook::from_codewords(vec![vec![0.3, 0.4], vec![0.3, 0.4], vec![0.9, 0.1]], 0.1, meta())
            .unwrap();
        let r = min_distance_check(&cb, 0.01).unwrap();
        assert_eq!(r.offending.len(), 1);
        assert_eq!((r.offending[0].i, r.offending[0].j), (1, 2));
        assert_eq!(r.pairs_checked, 3);
        let single = Codebook::from_codewords(vec![vec![0.3]], 0.1, meta()).unwrap();
        assert!(min_distance_check(&single, 0.1).is_err());
    }

    #[test]
    fn half_gap_pair_is_flagged() {
        let eps = 0.01;
        let c1 = vec![0.2, 0.5, 0.7];
        let c2: Vec<f64> = c1.iter().map(|x| x + eps / 2.0).collect();
        let cb = Codebook::from_codewords(vec![c1, c2], 0.1, meta()).unwrap();
        assert!(!min_distance_check(&cb, eps).unwrap().passed());
    }

    #[test]
    fn identical_codewords_give_unit_ratio() {
        let params = ChannelParams::new(0.3, 10.0, 1.0, 1.0).unwrap();
        let cfg = ConverseConfig::derived(&params, 4, 0.1);
        let c = ReleaseVector::new(vec![0.5, 0.3, 1.0, 0.8]).unwrap();
        let y = ObservationVector::new(vec![2, 1, 5, 0]);
        let r = likelihood_ratio_product_bounds(&c, &c, &y, &params, &cfg).unwrap();
        assert_eq!(r.case, ConverseCase::Identical);
        assert!((r.exact - 1.0).abs() < 1e-12);
        assert!(r.sandwich_holds());
    }

    #[test]
    fn factorial_form_matches_pmf_ratio() {
        let params = ChannelParams::new(0.4, 10.0, 1.0, 1.0).unwrap();
        let cfg = ConverseConfig::derived(&params, 3, 0.1);
        assert!(cfg.eps_prime * 10.0 >= 2.0);
        let c1 = ReleaseVector::new(vec![0.3, 0.5, 0.6]).unwrap();
        let c2 = ReleaseVector::new(vec![0.4, 0.6, 0.8]).unwrap();
        let y = ObservationVector::new(vec![2, 3, 1]);
        let r = likelihood_ratio_product_bounds(&c1, &c2, &y, &params, &cfg).unwrap();
        assert_eq!(r.case, ConverseCase::AllUp);
        let direct = (n_use_log_likelihood(&c2, &y, &params).unwrap()
            - n_use_log_likelihood(&c1, &y, &params).unwrap())
        .exp();
        assert!((r.exact - direct).abs() <= 1e-9 * direct);
    }

    #[test]
    fn preconditions_are_enforced() {
        let params = ChannelParams::new(0.4, 10.0, 1.0, 1.0).unwrap();
        let cfg = ConverseConfig::derived(&params, 3, 0.1);
        let c1 = ReleaseVector::new(vec![0.3, 0.5, 0.6]).unwrap();
        let far = ReleaseVector::new(vec![0.9, 0.5, 0.6]).unwrap();
        let y = ObservationVector::new(vec![0, 0, 0]);
        assert!(matches!(
            likelihood_ratio_product_bounds(&c1, &far, &y, &params, &cfg),
            Err(Error::Precondition(_))
        ));
        let too_many = ObservationVector::new(vec![4, 0, 0]);
        assert!(matches!(
            likelihood_ratio_product_bounds(&c1, &c1, &too_many, &params, &cfg),
            Err(Error::Support(_))
        ));
    }

    #[test]
    fn bernoulli_inequality() {
        let ok = bernoulli_check(3.0, 0.4);
        assert!(ok.applicable && ok.holds);
        let off = bernoulli_check(3.0, 2.0);
        assert!(!off.applicable && !off.holds);
    }

    #[test]
    fn contradiction_for_identical_codewords_is_exact() {
        let params = ChannelParams::new(0.3, 10.0, 1.0, 1.0).unwrap();
        let cfg = ConverseConfig::derived(&params, 16, 0.25);
        let dec = DecoderConfig::derived(1.0, 16, 0.25, MetricMode::ExactFloor);
        let c = ReleaseVector::new(vec![0.7; 16]).unwrap();
        let r = converse_contradiction_demo(&c, &c, &params, &cfg, &dec, 5000, &SeedStream::new(3)).unwrap();
        assert_eq!(r.sum, 1.0);
        let far = ReleaseVector::new(vec![0.1; 16]).unwrap();
        assert!(matches!(
            converse_contradiction_demo(&c, &far, &params, &cfg, &dec, 5000, &SeedStream::new(3)),
            Err(Error::Precondition(_))
        ));
    }
}
