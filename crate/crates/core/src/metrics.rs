//! Performance metrics: NMSE, frame error rate with the asynchronous
//! window rules, per-symbol detection rates and the per-iteration
//! operation-count model.

use crate::scenario::FrameType;
use crate::{ComplexMat, Error, Result};
use ndarray::Array2;

// ---------------------------------------------------------------------------
// NMSE
// ---------------------------------------------------------------------------

/// `||est - truth||_F^2 / ||truth||_F^2`.
pub fn nmse(est: &ComplexMat, truth: &ComplexMat) -> Result<f64> {
    if est.dim() != truth.dim() {
        return Err(Error::InvalidDimension(format!(
            "shape mismatch {:?} vs {:?}",
            est.dim(),
            truth.dim()
        )));
    }
    let denom: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("zero-norm truth in NMSE".into()));
    }
    let num: f64 = est
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (e - t).norm_sqr())
        .sum();
    Ok(num / denom)
}

// ---------------------------------------------------------------------------
// Frame error rate
// ---------------------------------------------------------------------------

/// One device's frame as the error-rate accounting sees it.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub device: usize,
    pub active: bool,
    pub frame_type: FrameType,
    /// Frame start; meaningful for type-1 frames.
    pub start: i64,
    /// Whether the receiver declared the device active.
    pub detected: bool,
    /// Whether the decoded information bits match the transmitted ones.
    pub info_match: bool,
}

/// Count frame outcomes over one window. Only frames fully inside the
/// window enter the denominator; a frame counts as correct when it was
/// detected, its information bits match, and no false alarm sits in
/// the symbol interval immediately before or after it.
pub fn fer_counts(
    frames: &[FrameRecord],
    gamma_hat: &Array2<bool>,
    gamma_true: &Array2<bool>,
    frame_len: usize,
) -> (usize, usize) {
    let window_len = gamma_true.ncols();
    let mut total = 0usize;
    let mut errors = 0usize;
    for f in frames {
        if !f.active || f.frame_type != FrameType::Type1 {
            continue;
        }
        total += 1;
        let mut correct = f.detected && f.info_match;
        if correct {
            for t in [f.start - 1, f.start + frame_len as i64] {
                if t >= 0 && (t as usize) < window_len {
                    let t = t as usize;
                    if gamma_hat[(f.device, t)] && !gamma_true[(f.device, t)] {
                        correct = false;
                    }
                }
            }
        }
        if !correct {
            errors += 1;
        }
    }
    (total, errors)
}

// ---------------------------------------------------------------------------
// Detection rates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl DetectionCounts {
    pub fn merge(&mut self, other: &DetectionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn mdr(&self) -> Result<f64> {
        let pos = self.fn_ + self.tp;
        if pos == 0 {
            return Err(Error::UndefinedMetric(
                "no positives for missed-detection rate".into(),
            ));
        }
        Ok(self.fn_ as f64 / pos as f64)
    }

    pub fn far(&self) -> Result<f64> {
        let neg = self.fp + self.tn;
        if neg == 0 {
            return Err(Error::UndefinedMetric(
                "no negatives for false-alarm rate".into(),
            ));
        }
        Ok(self.fp as f64 / neg as f64)
    }
}

/// Per-symbol detection counts over the cells selected by `mask`
/// (`None` evaluates every cell).
pub fn detection_counts(
    gamma_hat: &Array2<bool>,
    gamma_true: &Array2<bool>,
    mask: Option<&Array2<bool>>,
) -> Result<DetectionCounts> {
    if gamma_hat.dim() != gamma_true.dim() {
        return Err(Error::InvalidDimension("detection shape mismatch".into()));
    }
    if let Some(m) = mask {
        if m.dim() != gamma_true.dim() {
            return Err(Error::InvalidDimension("mask shape mismatch".into()));
        }
    }
    let mut counts = DetectionCounts::default();
    for ((idx, &est), &truth) in gamma_hat.indexed_iter().zip(gamma_true.iter()) {
        if let Some(m) = mask {
            if !m[idx] {
                continue;
            }
        }
        match (est, truth) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    Ok(counts)
}

/// Threshold the activity posteriors into per-symbol decisions and
/// count detection outcomes; the standard entry point for
/// MDR/FAR sweeps.
pub fn mdr_far(
    rho_hat: &crate::RealMat,
    gamma_true: &Array2<bool>,
    threshold: f64,
    mask: Option<&Array2<bool>>,
) -> Result<(f64, f64)> {
    let gamma_hat = rho_hat.mapv(|p| p > threshold);
    let counts = detection_counts(&gamma_hat, gamma_true, mask)?;
    Ok((counts.mdr()?, counts.far()?))
}

/// Device-level frame detection: `frame_len` consecutive active
/// symbols starting at `start`.
pub fn frame_detected(gamma_hat_row: ndarray::ArrayView1<bool>, start: usize, frame_len: usize) -> bool {
    if start + frame_len > gamma_hat_row.len() {
        return false;
    }
    (start..start + frame_len).all(|t| gamma_hat_row[t])
}

// ---------------------------------------------------------------------------
// Operation-count model
// ---------------------------------------------------------------------------

/// Receiver families of the per-iteration operation-count table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Amp,
    JointEmAmp,
    BigAmp,
    TurboBigAmp,
    HyGamp,
    BimsGampType,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "amp" => Ok(Algorithm::Amp),
            "joint-em-amp" | "jointemamp" => Ok(Algorithm::JointEmAmp),
            "big-amp" | "bigamp" => Ok(Algorithm::BigAmp),
            "turbo-big-amp" | "turbobigamp" => Ok(Algorithm::TurboBigAmp),
            "hygamp" => Ok(Algorithm::HyGamp),
            "bimsgamp" | "bimsgamp-type" => Ok(Algorithm::BimsGampType),
            other => Err(Error::UnknownAlgorithm(other.into())),
        }
    }
}

/// Dimension arguments of the operation-count formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopParams {
    pub n_devices: usize,
    pub n_antennas: usize,
    pub frame_len: usize,
    pub pilot_len: usize,
    pub data_len: usize,
    pub set_size: usize,
    pub alphabet_size: usize,
    /// Window parameter of the asynchronous turbo variant.
    pub t_prime: usize,
}

/// Per-iteration operation counts split by class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlopCount {
    pub add_sub_mul: f64,
    pub div_sqrt: f64,
    pub modulus: f64,
    pub sin_exp_log: f64,
}

/// Per-class weights for collapsing a [`FlopCount`] into one number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpWeights {
    pub add_sub_mul: f64,
    pub div_sqrt: f64,
    pub modulus: f64,
    pub sin_exp_log: f64,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            add_sub_mul: 1.0,
            div_sqrt: 8.0,
            modulus: 2.0,
            sin_exp_log: 20.0,
        }
    }
}

impl FlopCount {
    pub fn weighted(&self, w: &OpWeights) -> f64 {
        self.add_sub_mul * w.add_sub_mul
            + self.div_sqrt * w.div_sqrt
            + self.modulus * w.modulus
            + self.sin_exp_log * w.sin_exp_log
    }
}

/// Evaluate one row of the per-iteration operation-count table.
pub fn flop_count(algorithm: Algorithm, p: &FlopParams) -> Result<FlopCount> {
    for (name, v) in [
        ("n_devices", p.n_devices),
        ("n_antennas", p.n_antennas),
        ("frame_len", p.frame_len),
        ("pilot_len", p.pilot_len),
        ("data_len", p.data_len),
        ("alphabet_size", p.alphabet_size),
    ] {
        if v < 1 {
            return Err(Error::InvalidDimension(format!("{name} must be >= 1")));
        }
    }
    let n = p.n_devices as f64;
    let m = p.n_antennas as f64;
    let l = p.frame_len as f64;
    let lp = p.pilot_len as f64;
    let ld = p.data_len as f64;
    let s = p.set_size as f64;
    let a = p.alphabet_size as f64;
    let tp = p.t_prime as f64;

    let count = match algorithm {
        Algorithm::Amp => FlopCount {
            add_sub_mul: l * (n * (6.0 * m + 1.0) + 3.0 * m - 2.0),
            div_sqrt: l * (m + 3.0),
            modulus: 0.0,
            sin_exp_log: 0.0,
        },
        Algorithm::JointEmAmp => FlopCount {
            add_sub_mul: lp * (n * (6.0 * m + 1.0) + 3.0 * m - 2.0)
                + ld * ((n + l) * (10.0 * a * a + 16.0 * a + 7.0 * m + 27.0)
                    + (m + l) * (9.0 * n - 2.0)
                    + n * l * (6.0 * a * a + 17.0 * a + 11.0)
                    - n),
            div_sqrt: lp * (m + 3.0)
                + ld * (n * (m + l + 1.0) + 2.0 * (n + l) * (m + a + 1.0)),
            modulus: (n + l) * (3.0 * a + m + 1.0) + 2.0 * n * (a + m) + n * (l + 1.0),
            sin_exp_log: 0.0,
        },
        Algorithm::BigAmp => FlopCount {
            add_sub_mul: (m + l) * (12.0 * n + 10.0)
                + (n + l) * (7.0 * m + 55.0)
                + (m + n) * (7.0 * l + 47.0),
            div_sqrt: 12.0 * m + 11.0 * (n + l),
            modulus: l * (3.0 * n + m + 8.0) + 2.0 * m * (n + 8.0) + 16.0 * n,
            sin_exp_log: 7.0 * (m + l + 2.0 * n),
        },
        Algorithm::TurboBigAmp => FlopCount {
            add_sub_mul: (m + l) * (12.0 * n + 10.0)
                + (n + l) * (7.0 * m + 55.0)
                + (m + n) * (7.0 * l + 47.0)
                + (3.0 * (l + tp) + 2.0 * n - 1.0) * (n + tp),
            div_sqrt: 12.0 * m + 11.0 * (n + l) + 3.0 * (n + tp),
            modulus: l * (3.0 * n + m + 8.0) + 2.0 * m * (n + 8.0) + 16.0 * n + (n + tp) * l,
            sin_exp_log: 7.0 * (m + l + 2.0 * n),
        },
        Algorithm::HyGamp => FlopCount {
            add_sub_mul: l * (n * (17.0 * m + 72.0) + 9.0 * m),
            div_sqrt: l * (3.0 * n * (m + 2.0) + 5.0 * m),
            modulus: l * (2.0 * n * (m + 4.0)),
            sin_exp_log: l * (n * (3.0 * m + 1.0)),
        },
        Algorithm::BimsGampType => FlopCount {
            add_sub_mul: (m + l) * (12.0 * s + 10.0)
                + (s + l) * (7.0 * m + 55.0)
                + (m + s) * (7.0 * l + 47.0)
                + 8.0 * s * (m + 2.0),
            div_sqrt: 12.0 * m + 3.0 * s * m + 11.0 * (s + l),
            modulus: l * (3.0 * s + m + 8.0) + 2.0 * m * (s + 8.0) + 16.0 * s,
            sin_exp_log: 7.0 * (m + l + 2.0 * s) + 3.0 * s * m,
        },
    };
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use num_complex::Complex64;

    fn params(n: usize, m: usize, lp: usize, ld: usize, s: usize) -> FlopParams {
        FlopParams {
            n_devices: n,
            n_antennas: m,
            frame_len: lp + ld,
            pilot_len: lp,
            data_len: ld,
            set_size: s,
            alphabet_size: 4,
            t_prime: lp + ld,
        }
    }

    #[test]
    fn nmse_basic_identities() {
        let truth =
            Array2::from_shape_fn((3, 4), |(i, j)| Complex64::new(i as f64 + 1.0, j as f64));
        assert_eq!(nmse(&truth, &truth).unwrap(), 0.0);
        let zero = Array2::zeros((3, 4));
        assert!((nmse(&zero, &truth).unwrap() - 1.0).abs() < 1e-15);
        let double = truth.mapv(|z| 2.0 * z);
        assert!((nmse(&double, &truth).unwrap() - 1.0).abs() < 1e-15);
        assert!(nmse(&truth, &zero).is_err());
    }

    #[test]
    fn detection_counting_and_rates() {
        let truth = Array2::from_shape_fn((2, 4), |(i, _)| i == 0);
        let mut est = truth.clone();
        est[(1, 2)] = true; // one false alarm
        est[(0, 0)] = false; // one miss
        let c = detection_counts(&est, &truth, None).unwrap();
        assert_eq!(c.tp, 3);
        assert_eq!(c.fn_, 1);
        assert_eq!(c.fp, 1);
        assert_eq!(c.tn, 3);
        assert_eq!(c.total(), 8);
        assert!((c.mdr().unwrap() - 0.25).abs() < 1e-15);
        assert!((c.far().unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn perfect_posteriors_give_zero_rates() {
        let truth = Array2::from_shape_fn((3, 5), |(i, j)| (i + j) % 2 == 0);
        let rho = truth.mapv(|b| if b { 1.0 } else { 0.0 });
        let (mdr, far) = mdr_far(&rho, &truth, 0.5, None).unwrap();
        assert_eq!(mdr, 0.0);
        assert_eq!(far, 0.0);
    }

    #[test]
    fn single_false_alarm_in_thousand() {
        let truth = Array2::from_elem((10, 100), false);
        let mut est = truth.clone();
        est[(4, 2)] = true;
        let c = detection_counts(&est, &truth, None).unwrap();
        assert!((c.far().unwrap() - 1e-3).abs() < 1e-12);
        assert!(c.mdr().is_err(), "no positives: MDR undefined");
    }

    #[test]
    fn roc_sweep_is_monotone() {
        // Synthetic posteriors: actives around 0.8, silents around 0.2.
        let truth = Array2::from_shape_fn((4, 50), |(i, _)| i < 2);
        let rho = Array2::from_shape_fn((4, 50), |(i, j)| {
            let base: f64 = if i < 2 { 0.8 } else { 0.2 };
            base + 0.15 * ((j as f64 * 0.37).sin())
        });
        let mut last_mdr = -1.0;
        let mut last_far = 2.0;
        for thr in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let (mdr, far) = mdr_far(&rho, &truth, thr, None).unwrap();
            assert!(mdr >= last_mdr - 1e-12, "MDR must grow with threshold");
            assert!(far <= last_far + 1e-12, "FAR must shrink with threshold");
            last_mdr = mdr;
            last_far = far;
        }
    }

    #[test]
    fn fer_adjacent_false_alarm_marks_frame_wrong() {
        let n = 2;
        let t_len = 20;
        let frame_len = 6;
        let mut gamma_true = Array2::from_elem((n, t_len), false);
        for t in 5..11 {
            gamma_true[(0, t)] = true;
        }
        let mut gamma_hat = gamma_true.clone();
        let frames = vec![FrameRecord {
            device: 0,
            active: true,
            frame_type: FrameType::Type1,
            start: 5,
            detected: true,
            info_match: true,
        }];
        let (total, errors) = fer_counts(&frames, &gamma_hat, &gamma_true, frame_len);
        assert_eq!((total, errors), (1, 0));

        // False alarm for the same device immediately before the frame.
        gamma_hat[(0, 4)] = true;
        let (total, errors) = fer_counts(&frames, &gamma_hat, &gamma_true, frame_len);
        assert_eq!((total, errors), (1, 1));
    }

    #[test]
    fn fer_excludes_partial_frames() {
        let gamma = Array2::from_elem((1, 10), false);
        let frames = vec![FrameRecord {
            device: 0,
            active: true,
            frame_type: FrameType::Type2,
            start: -3,
            detected: false,
            info_match: false,
        }];
        let (total, errors) = fer_counts(&frames, &gamma, &gamma, 6);
        assert_eq!((total, errors), (0, 0));
    }

    #[test]
    fn frame_detection_needs_full_run() {
        let mut row = ndarray::Array1::from_elem(10, false);
        for t in 2..8 {
            row[t] = true;
        }
        assert!(frame_detected(row.view(), 2, 6));
        row[5] = false;
        assert!(!frame_detected(row.view(), 2, 6));
    }

    #[test]
    fn flop_amp_row_hand_value() {
        // N=100, M=32, L=192: 192 (100 * 193 + 94) = 3,723,648.
        let c = flop_count(Algorithm::Amp, &params(100, 32, 64, 128, 100)).unwrap();
        assert_eq!(c.add_sub_mul, 3_723_648.0);
        assert_eq!(c.div_sqrt, (192 * 35) as f64);
    }

    #[test]
    fn flop_bimsgamp_row_hand_value() {
        // M=32, L=192, |S|=10: 224*130 + 202*279 + 42*1391 + 80*34 = 146,620.
        let c = flop_count(Algorithm::BimsGampType, &params(100, 32, 64, 128, 10)).unwrap();
        assert_eq!(c.add_sub_mul, 146_620.0);
    }

    #[test]
    fn bimsgamp_at_full_set_exceeds_bigamp_by_extra_terms() {
        let p = params(100, 32, 64, 128, 100);
        let big = flop_count(Algorithm::BigAmp, &p).unwrap();
        let bims = flop_count(Algorithm::BimsGampType, &p).unwrap();
        let n = 100.0;
        let m = 32.0;
        assert_eq!(bims.add_sub_mul - big.add_sub_mul, 8.0 * n * (m + 2.0));
        assert_eq!(bims.div_sqrt - big.div_sqrt, 3.0 * n * m);
        assert_eq!(bims.modulus, big.modulus);
        assert_eq!(bims.sin_exp_log - big.sin_exp_log, 3.0 * n * m);
    }

    #[test]
    fn flop_counts_monotone_in_dimensions() {
        let base = params(50, 16, 32, 64, 20);
        let w = OpWeights::default();
        for algo in [
            Algorithm::Amp,
            Algorithm::JointEmAmp,
            Algorithm::BigAmp,
            Algorithm::TurboBigAmp,
            Algorithm::HyGamp,
            Algorithm::BimsGampType,
        ] {
            let c0 = flop_count(algo, &base).unwrap().weighted(&w);
            for grow in 0..4 {
                let mut p = base;
                match grow {
                    0 => p.n_devices *= 2,
                    1 => p.n_antennas *= 2,
                    2 => {
                        p.data_len *= 2;
                        p.frame_len = p.pilot_len + p.data_len;
                    }
                    _ => p.set_size *= 2,
                }
                let c1 = flop_count(algo, &p).unwrap().weighted(&w);
                assert!(c1 >= c0, "{algo:?} not monotone in dim {grow}");
            }
        }
    }

    #[test]
    fn scheduled_set_is_cheaper_than_full() {
        let w = OpWeights::default();
        let full = flop_count(Algorithm::BimsGampType, &params(100, 32, 64, 128, 100))
            .unwrap()
            .weighted(&w);
        let small = flop_count(Algorithm::BimsGampType, &params(100, 32, 64, 128, 10))
            .unwrap()
            .weighted(&w);
        assert!(small < 0.6 * full);
    }

    #[test]
    fn rejects_unknown_dimension_zero() {
        let mut p = params(10, 4, 8, 16, 5);
        p.n_antennas = 0;
        assert!(flop_count(Algorithm::Amp, &p).is_err());
    }
}
