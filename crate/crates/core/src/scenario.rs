//! Synchronous and asynchronous grant-free uplink realizations.
//!
//! A scenario draws the activity pattern, frame start times, block-fading
//! channels, pilot/data frames and the noisy observation of one window.
//! Instances are immutable after construction and safe to share across
//! trial workers.

use crate::config::{AccessMode, SystemConfig};
use crate::denoisers::Constellation;
use crate::ldpc::LdpcCode;
use crate::{ComplexMat, Error, Result};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::io::{Read, Write};

const REJECTION_CAP: usize = 10_000;

/// Placement of one frame relative to the observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameType {
    /// Fully inside the window; the only kind the receiver decodes.
    Type1,
    /// Started before the window opened; only its tail is observed.
    Type2,
    /// Ends after the window closes; only its head is observed.
    Type3,
}

impl FrameType {
    fn to_u8(self) -> u8 {
        match self {
            FrameType::Type1 => 1,
            FrameType::Type2 => 2,
            FrameType::Type3 => 3,
        }
    }

    fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(FrameType::Type1),
            2 => Ok(FrameType::Type2),
            3 => Ok(FrameType::Type3),
            other => Err(Error::Malformed(format!("bad frame type tag {other}"))),
        }
    }
}

/// Classify a frame of length `frame_len` starting at symbol `start`
/// (possibly negative) against a window of `window_len` symbols.
pub fn classify_frame(start: i64, frame_len: usize, window_len: usize) -> FrameType {
    if start < 0 {
        FrameType::Type2
    } else if start as usize + frame_len <= window_len {
        FrameType::Type1
    } else {
        FrameType::Type3
    }
}

/// One realized observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInstance {
    /// Effective per-window channel, `n_antennas x n_devices`. Columns of
    /// silent devices are zero. The formal time-stacked form of the
    /// block-fading model is available via
    /// [`stacked_channel`](Self::stacked_channel).
    pub channel: ComplexMat,
    /// Transmitted symbols, `n_devices x window_len`.
    pub tx: ComplexMat,
    /// Per-symbol activity indicators, `n_devices x window_len`.
    pub activity: Array2<bool>,
    /// Per-device transmission flag for this window.
    pub active: Vec<bool>,
    /// Per-device frame start (candidate slot for silent devices);
    /// negative starts belong to frames that began before the window.
    pub start_times: Vec<i64>,
    /// Frame classification of each device's (candidate) slot.
    pub frame_types: Vec<FrameType>,
    /// Frame length `L = L_p + L_d` in symbols.
    pub frame_len: usize,
    /// Per-device pilot sequences, `n_devices x pilot_len`, unit norm.
    pub pilots: ComplexMat,
    /// Effective per-device channel variances after shadowing.
    pub channel_var: Vec<f64>,
    /// Noise variance per complex observation entry.
    pub noise_var: f64,
    /// Received window, `n_antennas x window_len`.
    pub rx: ComplexMat,
    /// The stored noise realization, so `rx = channel . tx + noise` exactly.
    pub noise: ComplexMat,
    /// Information bits of transmitting devices (empty for silent ones).
    pub info_bits: Vec<Vec<u8>>,
    /// Encoded bits of transmitting devices (empty for silent ones).
    pub codewords: Vec<Vec<u8>>,
}

// ---------------------------------------------------------------------------
// Generation primitives
// ---------------------------------------------------------------------------

/// Draw one unit-norm pilot sequence, `phi_k = exp(j pi a_k) / ||.||`
/// with `a_k` uniform on [-1, 1].
pub fn gen_pilots(pilot_len: usize, rng: &mut impl Rng) -> Result<Array1<Complex64>> {
    if pilot_len == 0 {
        return Err(Error::InvalidDimension("pilot_len must be >= 1".into()));
    }
    let mut phi = Array1::zeros(pilot_len);
    for v in phi.iter_mut() {
        let a: f64 = rng.gen_range(-1.0..=1.0);
        *v = Complex64::from_polar(1.0, std::f64::consts::PI * a);
    }
    let norm = phi
        .iter()
        .map(|z: &Complex64| z.norm_sqr())
        .sum::<f64>()
        .sqrt();
    phi.mapv_inplace(|z| z / norm);
    Ok(phi)
}

/// Draw the activity pattern and frame start times. Synchronous mode
/// activates whole-window frames at `t = 0`. Asynchronous mode draws
/// starts uniformly over the fully-observed positions `[0, T-L]`, or
/// over all overlapping positions `[-(L-1), T-1]` (on which every
/// frame classification is realizable) when partial frames are
/// enabled. Rejection sampling enforces the cap on the number of
/// active devices.
pub fn gen_activity(
    cfg: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<(Array2<bool>, Vec<i64>, Vec<bool>)> {
    let n = cfg.n_devices;
    let t_len = cfg.window_len;
    let l = cfg.frame_len();
    let cap = cfg.max_active_frac * n as f64;

    for _ in 0..REJECTION_CAP {
        let active: Vec<bool> = (0..n).map(|i| rng.gen_bool(cfg.activity_prob[i])).collect();
        let start_times: Vec<i64> = match (cfg.mode, cfg.async_partial_frames) {
            (AccessMode::Synchronous, _) => vec![0; n],
            (AccessMode::Asynchronous, false) => (0..n)
                .map(|_| rng.gen_range(0..=(t_len - l) as i64))
                .collect(),
            (AccessMode::Asynchronous, true) => (0..n)
                .map(|_| rng.gen_range(-(l as i64 - 1)..=(t_len as i64 - 1)))
                .collect(),
        };
        let count = active.iter().filter(|&&a| a).count();
        if count as f64 > cap {
            continue;
        }
        let mut gamma = Array2::from_elem((n, t_len), false);
        for dev in 0..n {
            if !active[dev] {
                continue;
            }
            let start = start_times[dev];
            for t in start.max(0)..(start + l as i64).min(t_len as i64) {
                gamma[(dev, t as usize)] = true;
            }
        }
        return Ok((gamma, start_times, active));
    }
    Err(Error::RejectionCap(REJECTION_CAP))
}

/// Draw the effective block-fading channel: column `n` is
/// `sqrt(beta_n) a_n` with `a_n ~ CN(0, I)` for transmitting devices and
/// zero otherwise. Returns the matrix together with the effective
/// per-device variances (after optional log-normal shadowing).
pub fn gen_channel(
    cfg: &SystemConfig,
    active: &[bool],
    rng: &mut impl Rng,
) -> Result<(ComplexMat, Vec<f64>)> {
    if active.len() != cfg.n_devices {
        return Err(Error::InvalidDimension(format!(
            "activity length {} != n_devices {}",
            active.len(),
            cfg.n_devices
        )));
    }
    let m = cfg.n_antennas;
    let n = cfg.n_devices;
    let mut beta = cfg.channel_var.clone();
    if let Some(sigma_db) = cfg.shadowing_sigma_db {
        for b in beta.iter_mut() {
            let z: f64 = sample_std_normal(rng);
            *b *= 10f64.powf(sigma_db * z / 10.0);
        }
    }
    let mut h = Array2::zeros((m, n));
    for dev in 0..n {
        let scale = beta[dev].sqrt();
        for ant in 0..m {
            let a = sample_std_complex(rng);
            if active[dev] {
                h[(ant, dev)] = scale * a;
            }
        }
    }
    Ok((h, beta))
}

/// Place pilots and mapped data symbols into the transmit matrix:
/// pilots on `[t_n, t_n + L_p)`, data on `[t_n + L_p, t_n + L)`, zeros
/// elsewhere; only the in-window part of partially covered frames
/// appears.
pub fn gen_frames(
    cfg: &SystemConfig,
    active: &[bool],
    start_times: &[i64],
    pilots: &ComplexMat,
    codewords: &[Vec<u8>],
) -> Result<ComplexMat> {
    let n = cfg.n_devices;
    let t_len = cfg.window_len;
    let lp = cfg.pilot_len;
    let l = cfg.frame_len();
    let constellation = Constellation::new(cfg.modulation);
    let bps = constellation.bits_per_symbol();

    let mut x = Array2::zeros((n, t_len));
    for dev in 0..n {
        if !active[dev] {
            continue;
        }
        if codewords[dev].len() != cfg.codeword_len() {
            return Err(Error::InvalidDimension(format!(
                "device {dev}: codeword length {} != {}",
                codewords[dev].len(),
                cfg.codeword_len()
            )));
        }
        let start = start_times[dev];
        for t in start.max(0)..(start + l as i64).min(t_len as i64) {
            let k = (t - start) as usize;
            x[(dev, t as usize)] = if k < lp {
                pilots[(dev, k)]
            } else {
                let sym = k - lp;
                constellation.map_bits(&codewords[dev][sym * bps..(sym + 1) * bps])
            };
        }
    }
    Ok(x)
}

/// Form the noisy observation `Y = H X + W`. The noise variance follows
/// the average-SNR definition `sigma_w^2 = N R sigma_x^2 / 10^(snr/10)`.
pub fn observe(
    h: &ComplexMat,
    x: &ComplexMat,
    snr_db: f64,
    cfg: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<(ComplexMat, f64, ComplexMat)> {
    if h.ncols() != x.nrows() {
        return Err(Error::InvalidDimension(format!(
            "H is {}x{} but X is {}x{}",
            h.nrows(),
            h.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    let sigma_x2 = 1.0;
    let noise_var = cfg.n_devices as f64 * cfg.code_rate * sigma_x2 / 10f64.powf(snr_db / 10.0);
    let mut w = Array2::zeros((h.nrows(), x.ncols()));
    let sd = (noise_var / 2.0).sqrt();
    for v in w.iter_mut() {
        *v = Complex64::new(sd * sample_std_normal(rng), sd * sample_std_normal(rng));
    }
    let y = h.dot(x) + &w;
    Ok((y, noise_var, w))
}

fn sample_std_normal(rng: &mut impl Rng) -> f64 {
    // Marsaglia polar method, one variate per call.
    loop {
        let u: f64 = rng.gen_range(-1.0..1.0);
        let v: f64 = rng.gen_range(-1.0..1.0);
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

fn sample_std_complex(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(
        sample_std_normal(rng) * std::f64::consts::FRAC_1_SQRT_2,
        sample_std_normal(rng) * std::f64::consts::FRAC_1_SQRT_2,
    )
}

// ---------------------------------------------------------------------------
// Instance assembly and serialization
// ---------------------------------------------------------------------------

impl ScenarioInstance {
    /// Generate one window from the configured seed. Bit-identical for
    /// equal configurations.
    pub fn generate(cfg: &SystemConfig, code: &LdpcCode) -> Result<Self> {
        cfg.validate()?;
        if code.codeword_len() != cfg.codeword_len() {
            return Err(Error::InvalidDimension(format!(
                "code length {} != configured codeword length {}",
                code.codeword_len(),
                cfg.codeword_len()
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

        let (activity, start_times, active) = gen_activity(cfg, &mut rng)?;
        let (channel, channel_var) = gen_channel(cfg, &active, &mut rng)?;

        let mut pilots = Array2::zeros((cfg.n_devices, cfg.pilot_len));
        for dev in 0..cfg.n_devices {
            let phi = gen_pilots(cfg.pilot_len, &mut rng)?;
            pilots.row_mut(dev).assign(&phi);
        }

        let mut info_bits = vec![Vec::new(); cfg.n_devices];
        let mut codewords = vec![Vec::new(); cfg.n_devices];
        for dev in 0..cfg.n_devices {
            if active[dev] {
                let info: Vec<u8> = (0..code.info_len()).map(|_| rng.gen_range(0..2u8)).collect();
                codewords[dev] = code.encode(&info)?;
                info_bits[dev] = info;
            }
        }

        let tx = gen_frames(cfg, &active, &start_times, &pilots, &codewords)?;
        let (rx, noise_var, noise) = observe(&channel, &tx, cfg.snr_db, cfg, &mut rng)?;
        let frame_types = start_times
            .iter()
            .map(|&s| classify_frame(s, cfg.frame_len(), cfg.window_len))
            .collect();

        Ok(ScenarioInstance {
            channel,
            tx,
            activity,
            active,
            start_times,
            frame_types,
            frame_len: cfg.frame_len(),
            pilots,
            channel_var,
            noise_var,
            rx,
            noise,
            info_bits,
            codewords,
        })
    }

    pub fn n_devices(&self) -> usize {
        self.tx.nrows()
    }

    pub fn n_antennas(&self) -> usize {
        self.channel.nrows()
    }

    pub fn window_len(&self) -> usize {
        self.tx.ncols()
    }

    /// Materialize the time-stacked `(n_antennas * window_len) x n_devices`
    /// channel of the block-fading model: row block `t` holds each
    /// device's coefficients when its frame covers symbol `t` and zeros
    /// elsewhere.
    pub fn stacked_channel(&self) -> ComplexMat {
        let m = self.n_antennas();
        let t_len = self.window_len();
        let n = self.n_devices();
        let mut stacked = Array2::zeros((m * t_len, n));
        for t in 0..t_len {
            for dev in 0..n {
                if !self.active[dev] {
                    continue;
                }
                let start = self.start_times[dev];
                if (t as i64) >= start && (t as i64) < start + self.frame_len as i64 {
                    for ant in 0..m {
                        stacked[(t * m + ant, dev)] = self.channel[(ant, dev)];
                    }
                }
            }
        }
        stacked
    }

    const MAGIC: &'static [u8; 8] = b"GFSCEN01";

    /// Serialize to a self-describing binary bundle: magic, `u64`
    /// dimension header, then matrices in row-major order with
    /// re/im-interleaved little-endian 64-bit floats.
    pub fn dump(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        let dims = [
            self.n_antennas() as u64,
            self.n_devices() as u64,
            self.window_len() as u64,
            self.pilots.ncols() as u64,
            self.frame_len as u64,
        ];
        for d in dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&self.noise_var.to_le_bytes())?;
        write_complex_mat(w, &self.channel)?;
        write_complex_mat(w, &self.tx)?;
        write_complex_mat(w, &self.pilots)?;
        write_complex_mat(w, &self.rx)?;
        write_complex_mat(w, &self.noise)?;
        for v in self.activity.iter() {
            w.write_all(&[*v as u8])?;
        }
        for &v in &self.active {
            w.write_all(&[v as u8])?;
        }
        for ft in &self.frame_types {
            w.write_all(&[ft.to_u8()])?;
        }
        for &s in &self.start_times {
            w.write_all(&s.to_le_bytes())?;
        }
        for &b in &self.channel_var {
            w.write_all(&b.to_le_bytes())?;
        }
        for bits in self.info_bits.iter().chain(self.codewords.iter()) {
            w.write_all(&(bits.len() as u64).to_le_bytes())?;
            w.write_all(bits)?;
        }
        Ok(())
    }

    pub fn load(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Malformed("bad scenario magic".into()));
        }
        let m = read_u64(r)? as usize;
        let n = read_u64(r)? as usize;
        let t_len = read_u64(r)? as usize;
        let lp = read_u64(r)? as usize;
        let frame_len = read_u64(r)? as usize;
        let noise_var = read_f64(r)?;
        let channel = read_complex_mat(r, m, n)?;
        let tx = read_complex_mat(r, n, t_len)?;
        let pilots = read_complex_mat(r, n, lp)?;
        let rx = read_complex_mat(r, m, t_len)?;
        let noise = read_complex_mat(r, m, t_len)?;
        let mut activity = Array2::from_elem((n, t_len), false);
        for v in activity.iter_mut() {
            *v = read_u8(r)? != 0;
        }
        let mut active = vec![false; n];
        for v in active.iter_mut() {
            *v = read_u8(r)? != 0;
        }
        let mut frame_types = Vec::with_capacity(n);
        for _ in 0..n {
            frame_types.push(FrameType::from_u8(read_u8(r)?)?);
        }
        let mut start_times = vec![0i64; n];
        for v in start_times.iter_mut() {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            *v = i64::from_le_bytes(buf);
        }
        let mut channel_var = vec![0.0; n];
        for v in channel_var.iter_mut() {
            *v = read_f64(r)?;
        }
        let mut read_bit_blocks = |count: usize| -> Result<Vec<Vec<u8>>> {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let len = read_u64(r)? as usize;
                let mut bits = vec![0u8; len];
                r.read_exact(&mut bits)?;
                out.push(bits);
            }
            Ok(out)
        };
        let info_bits = read_bit_blocks(n)?;
        let codewords = read_bit_blocks(n)?;
        Ok(ScenarioInstance {
            channel,
            tx,
            activity,
            active,
            start_times,
            frame_types,
            frame_len,
            pilots,
            channel_var,
            noise_var,
            rx,
            noise,
            info_bits,
            codewords,
        })
    }
}

fn write_complex_mat(w: &mut impl Write, m: &ComplexMat) -> Result<()> {
    for v in m.iter() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_complex_mat(r: &mut impl Read, rows: usize, cols: usize) -> Result<ComplexMat> {
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        *v = Complex64::new(re, im);
    }
    Ok(m)
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Modulation;
    use approx::assert_abs_diff_eq;

    fn small_cfg() -> SystemConfig {
        let n = 12;
        SystemConfig {
            n_devices: n,
            n_antennas: 4,
            window_len: 24,
            window_step: 24,
            pilot_len: 8,
            data_len: 16,
            activity_prob: vec![0.3; n],
            channel_var: vec![1.0; n],
            max_active_frac: 0.5,
            seed: 7,
            ..SystemConfig::default_sync()
        }
    }

    fn small_async_cfg() -> SystemConfig {
        let mut cfg = small_cfg();
        cfg.mode = AccessMode::Asynchronous;
        cfg.window_len = 48;
        cfg.window_step = 24;
        cfg
    }

    fn small_code(cfg: &SystemConfig) -> LdpcCode {
        LdpcCode::construct(cfg.codeword_len(), 0.5, 3).unwrap()
    }

    #[test]
    fn pilots_unit_norm_and_unit_modulus_entries() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let phi = gen_pilots(64, &mut rng).unwrap();
        let norm: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);

        let phi4 = gen_pilots(4, &mut rng).unwrap();
        for z in phi4.iter() {
            assert_abs_diff_eq!(z.norm(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn pilots_deterministic_in_seed() {
        let a = gen_pilots(32, &mut ChaCha12Rng::seed_from_u64(3)).unwrap();
        let b = gen_pilots(32, &mut ChaCha12Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pilots_reject_zero_length() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(gen_pilots(0, &mut rng).is_err());
    }

    #[test]
    fn activity_zero_prob_gives_empty_pattern() {
        let mut cfg = small_cfg();
        cfg.activity_prob = vec![0.0; cfg.n_devices];
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (gamma, _, active) = gen_activity(&cfg, &mut rng).unwrap();
        assert!(gamma.iter().all(|&g| !g));
        assert!(active.iter().all(|&a| !a));
    }

    #[test]
    fn activity_respects_cap() {
        // Mean activity 8 against a cap of 10 forces frequent rejections
        // without exhausting the retry budget.
        let mut cfg = small_cfg();
        cfg.n_devices = 100;
        cfg.activity_prob = vec![0.08; 100];
        cfg.channel_var = vec![1.0; 100];
        cfg.max_active_frac = 0.10;
        for seed in 0..50 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let (_, _, active) = gen_activity(&cfg, &mut rng).unwrap();
            assert!(active.iter().filter(|&&a| a).count() <= 10);
        }
    }

    #[test]
    fn sync_active_rows_are_all_ones() {
        let cfg = small_cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (gamma, starts, active) = gen_activity(&cfg, &mut rng).unwrap();
        assert!(active.iter().any(|&a| a), "want at least one active device");
        for dev in 0..cfg.n_devices {
            assert_eq!(starts[dev], 0);
            if active[dev] {
                assert!(gamma.row(dev).iter().all(|&g| g));
            } else {
                assert!(gamma.row(dev).iter().all(|&g| !g));
            }
        }
    }

    #[test]
    fn inactive_channel_columns_are_zero() {
        let cfg = small_cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (_, _, active) = gen_activity(&cfg, &mut rng).unwrap();
        let (h, _) = gen_channel(&cfg, &active, &mut rng).unwrap();
        for dev in 0..cfg.n_devices {
            let col_energy: f64 = h.column(dev).iter().map(|z| z.norm_sqr()).sum();
            if active[dev] {
                assert!(col_energy > 0.0);
            } else {
                assert_eq!(col_energy, 0.0);
            }
        }
    }

    #[test]
    fn channel_sample_variance_matches_beta() {
        // beta = 4, Monte Carlo second moment within 5%.
        let mut cfg = small_cfg();
        cfg.n_devices = 50;
        cfg.n_antennas = 20;
        cfg.activity_prob = vec![1.0; 50];
        cfg.channel_var = vec![4.0; 50];
        cfg.max_active_frac = 1.0;
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..10 {
            let (h, _) = gen_channel(&cfg, &vec![true; 50], &mut rng).unwrap();
            acc += h.iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += h.len();
        }
        let var = acc / count as f64;
        assert!((var - 4.0).abs() / 4.0 < 0.05, "sample variance {var}");
    }

    #[test]
    fn frames_place_pilots_and_unit_energy_data() {
        let cfg = small_async_cfg();
        let code = small_code(&cfg);
        let inst = ScenarioInstance::generate(&cfg, &code).unwrap();
        for dev in 0..cfg.n_devices {
            if !inst.active[dev] {
                assert!(inst.tx.row(dev).iter().all(|z| z.norm() == 0.0));
                continue;
            }
            let start = inst.start_times[dev];
            for t in 0..cfg.window_len as i64 {
                let x = inst.tx[(dev, t as usize)];
                let k = t - start;
                if k >= 0 && k < cfg.pilot_len as i64 {
                    assert_eq!(x, inst.pilots[(dev, k as usize)]);
                } else if k >= cfg.pilot_len as i64 && k < cfg.frame_len() as i64 {
                    assert_abs_diff_eq!(x.norm(), 1.0, epsilon = 1e-12);
                } else {
                    assert_eq!(x.norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn observe_noise_variance_and_noiseless_limit() {
        let mut cfg = small_cfg();
        cfg.n_devices = 100;
        cfg.activity_prob = vec![0.05; 100];
        cfg.channel_var = vec![1.0; 100];
        // N=100, R=0.5, snr=20 dB -> sigma_w^2 = 0.5.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let h = Array2::zeros((4, 100));
        let x = Array2::zeros((100, 24));
        let (_, nv, _) = observe(&h, &x, 20.0, &cfg, &mut rng).unwrap();
        assert_abs_diff_eq!(nv, 0.5, epsilon = 1e-12);

        // Monte Carlo check of the realized noise energy.
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..200 {
            let (y, _, w) = observe(&h, &x, 20.0, &cfg, &mut rng).unwrap();
            assert_eq!(y, w); // H X = 0 here
            acc += w.iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += w.len();
        }
        let measured = acc / count as f64;
        assert!((measured - 0.5).abs() / 0.5 < 0.05, "noise energy {measured}");
    }

    #[test]
    fn generate_is_bit_identical_for_same_seed() {
        let cfg = small_async_cfg();
        let code = small_code(&cfg);
        let a = ScenarioInstance::generate(&cfg, &code).unwrap();
        let b = ScenarioInstance::generate(&cfg, &code).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rx_consistent_with_stored_noise() {
        let cfg = small_async_cfg();
        let code = small_code(&cfg);
        let inst = ScenarioInstance::generate(&cfg, &code).unwrap();
        let recomputed = inst.channel.dot(&inst.tx) + &inst.noise;
        let err: f64 = (&recomputed - &inst.rx)
            .iter()
            .map(|z| z.norm_sqr())
            .sum();
        assert_abs_diff_eq!(err, 0.0, epsilon = 1e-20);
    }

    #[test]
    fn stacked_channel_support_and_blockwise_product() {
        let cfg = small_async_cfg();
        let code = small_code(&cfg);
        let inst = ScenarioInstance::generate(&cfg, &code).unwrap();
        let stacked = inst.stacked_channel();
        let m = cfg.n_antennas;
        // Support: column dev nonzero exactly on its frame's row blocks.
        for dev in 0..cfg.n_devices {
            for t in 0..cfg.window_len {
                let block_energy: f64 = (0..m)
                    .map(|ant| stacked[(t * m + ant, dev)].norm_sqr())
                    .sum();
                let in_span = inst.active[dev]
                    && (t as i64) >= inst.start_times[dev]
                    && (t as i64) < inst.start_times[dev] + inst.frame_len as i64;
                if in_span {
                    assert!(block_energy > 0.0);
                } else {
                    assert_eq!(block_energy, 0.0);
                }
            }
        }
        // Per-symbol product of the stacked block equals the effective product.
        for t in 0..cfg.window_len {
            for ant in 0..m {
                let mut z = Complex64::new(0.0, 0.0);
                for dev in 0..cfg.n_devices {
                    z += stacked[(t * m + ant, dev)] * inst.tx[(dev, t)];
                }
                let eff: Complex64 = (0..cfg.n_devices)
                    .map(|dev| inst.channel[(ant, dev)] * inst.tx[(dev, t)])
                    .sum();
                assert_abs_diff_eq!((z - eff).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sync_is_async_special_case() {
        // With every frame pinned at t_n = 0 the async placement code
        // reproduces the synchronous transmit matrix.
        let cfg = small_cfg();
        let code = small_code(&cfg);
        let inst = ScenarioInstance::generate(&cfg, &code).unwrap();
        let x_again = gen_frames(
            &cfg,
            &inst.active,
            &vec![0; cfg.n_devices],
            &inst.pilots,
            &inst.codewords,
        )
        .unwrap();
        assert_eq!(inst.tx, x_again);
    }

    #[test]
    fn dump_load_round_trip() {
        let cfg = small_async_cfg();
        let code = small_code(&cfg);
        let inst = ScenarioInstance::generate(&cfg, &code).unwrap();
        let mut buf = Vec::new();
        inst.dump(&mut buf).unwrap();
        let loaded = ScenarioInstance::load(&mut buf.as_slice()).unwrap();
        assert_eq!(inst, loaded);
    }

    #[test]
    fn qpsk_data_symbols_unit_modulus() {
        let mut cfg = small_cfg();
        cfg.modulation = Modulation::Qpsk;
        let code = small_code(&cfg);
        let inst = ScenarioInstance::generate(&cfg, &code).unwrap();
        for dev in 0..cfg.n_devices {
            if !inst.active[dev] {
                continue;
            }
            for t in cfg.pilot_len..cfg.frame_len() {
                assert_abs_diff_eq!(inst.tx[(dev, t)].norm(), 1.0, epsilon = 1e-12);
            }
        }
    }
}
