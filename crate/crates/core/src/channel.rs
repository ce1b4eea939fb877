//! Binomial channel law.
//!
//! A symbol with release rate `x` emits `N = floor(T_s * x)` molecules, each of
//! which reaches the receiver independently with probability `p`. The
//! observation is the arrival count `Y ~ Binomial(N, p)`, and the `n` channel
//! uses of a block are independent.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{domain, Error, Result};

/// Largest molecule count served by the tabulated inverse-CDF sampler.
pub const INVERSE_CDF_MAX_N: u64 = 64;

/// Probability that a molecule released at distance `d` is inside a
/// transparent receiver of volume `v_rx` at time `tau`, for free 3-D diffusion
/// with coefficient `diffusion`.
pub fn capture_probability(v_rx: f64, diffusion: f64, d: f64, tau: f64) -> Result<f64> {
    for (name, v) in [("V_rx", v_rx), ("D", diffusion), ("d", d), ("tau", tau)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let spread = 4.0 * PI * diffusion * tau;
    let p = v_rx / spread.powf(1.5) * (-(d * d) / (4.0 * diffusion * tau)).exp();
    if p >= 1.0 {
        return Err(Error::InvalidGeometry(p));
    }
    Ok(p)
}

/// Physical channel parameters. The effective amplitude `A` is derived on
/// demand and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannelParams", into = "RawChannelParams")]
pub struct ChannelParams {
    p: f64,
    t_s: f64,
    p_max: f64,
    p_ave: f64,
}

#[derive(Serialize, Deserialize)]
struct RawChannelParams {
    p: f64,
    t_s: f64,
    p_max: f64,
    p_ave: f64,
}

impl TryFrom<RawChannelParams> for ChannelParams {
    type Error = Error;
    fn try_from(r: RawChannelParams) -> Result<Self> {
        ChannelParams::new(r.p, r.t_s, r.p_max, r.p_ave)
    }
}

impl From<ChannelParams> for RawChannelParams {
    fn from(c: ChannelParams) -> Self {
        RawChannelParams { p: c.p, t_s: c.t_s, p_max: c.p_max, p_ave: c.p_ave }
    }
}

impl ChannelParams {
    pub fn new(p: f64, t_s: f64, p_max: f64, p_ave: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("capture probability must lie in (0,1), got {p}")));
        }
        for (name, v) in [("T_s", t_s), ("P_max", p_max), ("P_ave", p_ave)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { p, t_s, p_max, p_ave })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn symbol_duration(&self) -> f64 {
        self.t_s
    }

    pub fn peak_rate(&self) -> f64 {
        self.p_max
    }

    pub fn average_rate(&self) -> f64 {
        self.p_ave
    }

    /// `A = min(P_max, P_ave)`.
    pub fn amplitude(&self) -> f64 {
        self.p_max.min(self.p_ave)
    }

    /// Molecules released for rate `x`: `floor(T_s * x)`. Products within
    /// 1e-9 (relative) of an integer are snapped to it so that rates such as
    /// `0.3` with `T_s = 10` release exactly 3 molecules.
    pub fn molecule_count(&self, x: f64) -> u64 {
        let v = self.t_s * x;
        let r = v.round();
        if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
            r.max(0.0) as u64
        } else {
            v.floor().max(0.0) as u64
        }
    }
}

/// One codeword: release rates for `n` channel uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseVector(Vec<f64>);

impl ReleaseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(domain("release vector must have at least one entry"));
        }
        if let Some(x) = entries.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(domain(format!("release rates must be finite and nonnegative, got {x}")));
        }
        Ok(Self(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Peak and average release-rate constraints.
    pub fn satisfies_rate_constraints(&self, params: &ChannelParams) -> bool {
        let peak_ok = self.0.iter().all(|&x| (0.0..=params.peak_rate()).contains(&x));
        let mean = self.0.iter().sum::<f64>() / self.0.len() as f64;
        peak_ok && mean <= params.average_rate()
    }

    /// `0 <= x_t <= A` for every entry.
    pub fn within_amplitude(&self, params: &ChannelParams) -> bool {
        let a = params.amplitude();
        self.0.iter().all(|&x| (0.0..=a).contains(&x))
    }
}

/// Molecule counts observed over `n` channel uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationVector(Vec<u64>);

impl ObservationVector {
    pub fn new(entries: Vec<u64>) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

/// `log P(Y = y)` for `Y ~ Binomial(n_molecules, p)`; `-inf` outside the support.
pub fn log_pmf(n_molecules: u64, p: f64, y: u64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("p must lie in (0,1), got {p}")));
    }
    Ok(log_pmf_unchecked(n_molecules, p, y))
}

pub(crate) fn log_pmf_unchecked(n_molecules: u64, p: f64, y: u64) -> f64 {
    if y > n_molecules {
        return f64::NEG_INFINITY;
    }
    ln_binomial(n_molecules, y) + y as f64 * p.ln() + (n_molecules - y) as f64 * (-p).ln_1p()
}

/// `log W^n(y | x)`, summed over channel uses in index order.
pub fn n_use_log_likelihood(
    x: &ReleaseVector,
    y: &ObservationVector,
    params: &ChannelParams,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), actual: y.len() });
    }
    let mut total = 0.0;
    for (&xt, &yt) in x.as_slice().iter().zip(y.as_slice()) {
        total += log_pmf_unchecked(params.molecule_count(xt), params.p(), yt);
    }
    Ok(total)
}

/// Channel sampler with precomputed inverse-CDF tables for small molecule
/// counts. Counts above [`INVERSE_CDF_MAX_N`] fall back to `rand_distr`'s
/// Binomial generator.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    params: ChannelParams,
    cdf: Vec<Vec<f64>>,
}

impl ChannelSampler {
    pub fn new(params: &ChannelParams) -> Self {
        let p = params.p();
        let cdf = (0..=INVERSE_CDF_MAX_N)
            .map(|n| {
                let mut acc = 0.0;
                (0..=n)
                    .map(|y| {
                        acc += log_pmf_unchecked(n, p, y).exp();
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { params: *params, cdf }
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// One draw from `Binomial(n_molecules, p)`.
    pub fn draw<R: Rng + ?Sized>(&self, n_molecules: u64, rng: &mut R) -> u64 {
        if n_molecules == 0 {
            return 0;
        }
        if n_molecules <= INVERSE_CDF_MAX_N {
            let table = &self.cdf[n_molecules as usize];
            let u: f64 = rng.random();
            let k = table.partition_point(|&c| c <= u);
            return (k as u64).min(n_molecules);
        }
        Binomial::new(n_molecules, self.params.p())
            .expect("p validated at construction")
            .sample(rng)
    }

    /// Fills `out` with one channel output for codeword `x`.
    pub fn sample_into<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut Vec<u64>) {
        out.clear();
        out.extend(x.iter().map(|&xt| self.draw(self.params.molecule_count(xt), rng)));
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &ReleaseVector, rng: &mut R) -> ObservationVector {
        let mut out = Vec::with_capacity(x.len());
        self.sample_into(x.as_slice(), rng, &mut out);
        ObservationVector(out)
    }
}

/// Draws one observation for `x`. Builds a fresh sampler; use
/// [`ChannelSampler`] directly in loops.
pub fn sample<R: Rng + ?Sized>(
    x: &ReleaseVector,
    params: &ChannelParams,
    rng: &mut R,
) -> ObservationVector {
    ChannelSampler::new(params).sample(x, rng)
}

/// Exact `E[Y^k]` for `Y ~ Binomial(n, p)` by summation over the support.
pub fn binomial_raw_moment(n_molecules: u64, p: f64, k: u32) -> f64 {
    (0..=n_molecules)
        .map(|y| log_pmf_unchecked(n_molecules, p, y).exp() * (y as f64).powi(k as i32))
        .sum()
}

/// A case where `E[Y^k] > (Np)^k exp(k^2 / (2Np))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentBoundViolation {
    pub n_molecules: u64,
    pub p: f64,
    pub k: u32,
    pub exact: f64,
    pub bound: f64,
}

/// Checks the raw-moment bound `E[Y^k] <= (Np)^k exp(k^2/(2Np))` for every
/// `N` in `1..=max_n`, every `p` in `ps`, `k` in `1..=4`, restricted to
/// `Np >= 1`. Returns all violations.
pub fn moment_bound_sweep(max_n: u64, ps: &[f64]) -> Vec<MomentBoundViolation> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        for &p in ps {
            let mean = n as f64 * p;
            if mean < 1.0 {
                continue;
            }
            for k in 1..=4u32 {
                let exact = binomial_raw_moment(n, p, k);
                let kf = k as f64;
                let bound = mean.powi(k as i32) * (kf * kf / (2.0 * mean)).exp();
                if exact > bound * (1.0 + 1e-12) {
                    out.push(MomentBoundViolation { n_molecules: n, p, k, exact, bound });
                }
            }
        }
    }
    out
}
