//! Encoder and threshold decoder.
//!
//! The decoder for target `j` accepts an observation `y` iff
//! `|T(y, c_j)| <= delta_n`, where
//! `T(y, c) = (1/n) sum_t [(y_t - mu_t)^2 - (1 - p) y_t]` and `mu_t` is the
//! mean molecule count of symbol `t`.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, ObservationVector, ReleaseVector};
use crate::error::{Error, Result};
use crate::packing::Codebook;

/// How the per-symbol mean `mu_t` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMode {
    /// `mu_t = p * floor(T_s c_t)`; the metric has mean exactly zero under the
    /// sent codeword.
    #[default]
    ExactFloor,
    /// `mu_t = p * T_s * c_t`.
    PaperApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub delta_n: f64,
    pub metric_mode: MetricMode,
    pub b: f64,
}

impl DecoderConfig {
    /// `delta_n = A / n^((1-b)/2)`.
    pub fn derived(amplitude: f64, n: usize, b: f64, metric_mode: MetricMode) -> Self {
        Self { delta_n: amplitude / (n as f64).powf(0.5 * (1.0 - b)), metric_mode, b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentificationOutcome {
    /// One-based target index.
    pub target: usize,
    pub accepted: bool,
    pub metric_value: f64,
}

/// Codeword for one-based message index `i`.
pub fn encode(i: usize, cb: &Codebook) -> Result<ReleaseVector> {
    check_index(i, cb)?;
    Ok(cb.release_vector(i - 1))
}

pub(crate) fn check_index(i: usize, cb: &Codebook) -> Result<()> {
    if i == 0 || i > cb.len() {
        return Err(Error::IndexOutOfRange { index: i, size: cb.len() });
    }
    Ok(())
}

#[inline]
pub(crate) fn symbol_mean(c: f64, params: &ChannelParams, mode: MetricMode) -> f64 {
    match mode {
        MetricMode::ExactFloor => params.p() * params.molecule_count(c) as f64,
        MetricMode::PaperApprox => params.p() * params.symbol_duration() * c,
    }
}

/// Metric on raw slices; lengths must already agree.
#[inline]
pub(crate) fn metric_raw(y: &[u64], c: &[f64], params: &ChannelParams, mode: MetricMode) -> f64 {
    let q = 1.0 - params.p();
    let mut s = 0.0;
    for (&yt, &ct) in y.iter().zip(c) {
        let yf = yt as f64;
        let d = yf - symbol_mean(ct, params, mode);
        s += d * d - q * yf;
    }
    s / y.len() as f64
}

pub fn decoding_metric(
    y: &ObservationVector,
    c: &ReleaseVector,
    params: &ChannelParams,
    mode: MetricMode,
) -> Result<f64> {
    if y.len() != c.len() {
        return Err(Error::Shape { expected: c.len(), actual: y.len() });
    }
    Ok(metric_raw(y.as_slice(), c.as_slice(), params, mode))
}

/// Worst-case gap between the two metric modes for a given observation:
/// `p * (2 max_t y_t + 2 p T_s A)`, from `0 <= T_s c - floor(T_s c) < 1`.
pub fn mode_gap_bound(y: &ObservationVector, params: &ChannelParams) -> f64 {
    let ymax = y.as_slice().iter().copied().max().unwrap_or(0) as f64;
    let p = params.p();
    p * (2.0 * ymax + 2.0 * p * params.symbol_duration() * params.amplitude())
}

/// Accept/reject decision for one-based target `j`.
pub fn identify(
    y: &ObservationVector,
    j: usize,
    cb: &Codebook,
    cfg: &DecoderConfig,
    params: &ChannelParams,
) -> Result<IdentificationOutcome> {
    check_index(j, cb)?;
    let c = cb.codeword(j - 1);
    if y.len() != c.len() {
        return Err(Error::Shape { expected: c.len(), actual: y.len() });
    }
    let metric_value = metric_raw(y.as_slice(), c, params, cfg.metric_mode);
    Ok(IdentificationOutcome { target: j, accepted: metric_value.abs() <= cfg.delta_n, metric_value })
}

/// Every target that accepts `y`. Several may; identification is a set of
/// independent yes/no tests, not a classifier.
pub fn scan(
    y: &ObservationVector,
    cb: &Codebook,
    cfg: &DecoderConfig,
    params: &ChannelParams,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for j in 1..=cb.len() {
        if identify(y, j, cb, cfg, params)?.accepted {
            out.push(j);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packing::CodebookMeta;
    use proptest::prelude::*;

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

    fn book(words: Vec<Vec<f64>>) -> Codebook {
        Codebook::from_codewords(words, 0.1, meta()).unwrap()
    }

    #[test]
    fn encode_bounds() {
        let cb = book(vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]]);
        assert_eq!(encode(1, &cb).unwrap().as_slice(), &[0.1, 0.2]);
        assert_eq!(encode(3, &cb).unwrap().as_slice(), &[0.5, 0.6]);
        assert!(matches!(encode(4, &cb), Err(Error::IndexOutOfRange { index: 4, size: 3 })));
        assert!(encode(0, &cb).is_err());
    }

    #[test]
    fn metric_examples() {
        let params = ChannelParams::new(0.5, 10.0, 1.0, 1.0).unwrap();
        let y = ObservationVector::new(vec![5]);
        let c = ReleaseVector::new(vec![1.0]).unwrap();
        for mode in [MetricMode::ExactFloor, MetricMode::PaperApprox] {
            assert_eq!(decoding_metric(&y, &c, &params, mode).unwrap(), -2.5);
        }
        let zero_y = ObservationVector::new(vec![0; 5]);
        let zero_c = ReleaseVector::new(vec![0.0; 5]).unwrap();
        assert_eq!(decoding_metric(&zero_y, &zero_c, &params, MetricMode::ExactFloor).unwrap(), 0.0);
        assert!(decoding_metric(&zero_y, &c, &params, MetricMode::ExactFloor).is_err());
    }

    #[test]
    fn infinite_threshold_accepts_everything() {
        let params = ChannelParams::new(0.3, 10.0, 1.0, 1.0).unwrap();
        let cb = book(vec![vec![0.2, 0.9], vec![1.0, 0.1]]);
        let cfg = DecoderConfig { delta_n: f64::INFINITY, metric_mode: MetricMode::ExactFloor, b: 0.25 };
        let y = ObservationVector::new(vec![9, 0]);
        assert_eq!(scan(&y, &cb, &cfg, &params).unwrap(), vec![1, 2]);
    }

    #[test]
    fn decision_ignores_other_codewords() {
        let params = ChannelParams::new(0.3, 10.0, 1.0, 1.0).unwrap();
        let cfg = DecoderConfig::derived(1.0, 2, 0.25, MetricMode::ExactFloor);
        let y = ObservationVector::new(vec![2, 3]);
        let a = book(vec![vec![0.5, 0.9], vec![0.8, 0.8]]);
        let b = book(vec![vec![0.5, 0.9], vec![0.0, 0.1], vec![1.0, 1.0]]);
        assert_eq!(identify(&y, 1, &a, &cfg, &params).unwrap(), identify(&y, 1, &b, &cfg, &params).unwrap());
    }

    proptest! {
        #[test]
        fn metric_is_permutation_invariant(
            pairs in prop::collection::vec((0.0f64..=1.0, 0u64..12), 1..20),
            rot in 0usize..20,
        ) {
            let params = ChannelParams::new(0.3, 10.0, 1.0, 1.0).unwrap();
            let (c, y): (Vec<f64>, Vec<u64>) = pairs.iter().copied().unzip();
            let k = rot % c.len();
            let mut c2 = c.clone();
            let mut y2 = y.clone();
            c2.rotate_left(k);
            y2.rotate_left(k);
            c2.reverse();
            y2.reverse();
            for mode in [MetricMode::ExactFloor, MetricMode::PaperApprox] {
                let a = metric_raw(&y, &c, &params, mode);
                let b = metric_raw(&y2, &c2, &params, mode);
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn mode_gap_is_bounded(
            pairs in prop::collection::vec((0.0f64..=1.0, 0u64..12), 1..30),
            p in 0.05f64..0.95,
            t_s in 1.0f64..40.0,
        ) {
            let params = ChannelParams::new(p, t_s, 1.0, 1.0).unwrap();
            let (c, y): (Vec<f64>, Vec<u64>) = pairs.into_iter().unzip();
            let y = ObservationVector::new(y);
            let c = ReleaseVector::new(c).unwrap();
            let exact = decoding_metric(&y, &c, &params, MetricMode::ExactFloor).unwrap();
            let approx = decoding_metric(&y, &c, &params, MetricMode::PaperApprox).unwrap();
            prop_assert!((exact - approx).abs() <= mode_gap_bound(&y, &params) + 1e-12);
        }
    }
}
