//! Scenario dimensions, priors and receiver knobs.

use crate::{Error, Result};

/// Frame-level synchronization model of the observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessMode {
    /// Every active device starts at the beginning of the window; `T = L`.
    Synchronous,
    /// Frames start at arbitrary symbol offsets inside a sliding window
    /// of `T > L` symbols with step `window_step`.
    Asynchronous,
}

impl AccessMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessMode::Synchronous => "sync",
            AccessMode::Asynchronous => "async",
        }
    }
}

impl std::str::FromStr for AccessMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sync" | "synchronous" => Ok(AccessMode::Synchronous),
            "async" | "asynchronous" => Ok(AccessMode::Asynchronous),
            other => Err(Error::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Data-symbol constellation. QPSK carries two code bits per symbol on
/// independent I/Q rails; both constellations have unit symbol energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    Bpsk,
    Qpsk,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
        }
    }
}

impl std::str::FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            other => Err(Error::config(
                "modulation",
                format!("unknown modulation `{other}`"),
            )),
        }
    }
}

/// Receiver-side knobs of the message-passing iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverParams {
    /// Maximum outer iterations `I`.
    pub max_iters: usize,
    /// Damping factor applied to the refreshed quantities.
    pub damping: f64,
    /// Relative-change stop threshold.
    pub stop_tol: f64,
    /// Symmetric clamp applied to every log-likelihood ratio.
    pub llr_clamp: f64,
    /// Activity-posterior threshold for set membership under the
    /// activity-detection scheduling policy.
    pub aud_threshold: f64,
    /// Fraction of devices kept when the residual policy rebuilds its set.
    pub rbp_frac: f64,
    /// Sum-product iterations of the inner LDPC decoder per outer iteration.
    pub ldpc_inner_iters: usize,
    /// Variance assigned to the known pilot symbols in the linear step.
    pub pilot_var: f64,
    /// Feed decoder beliefs back into the symbol prior and the activity
    /// refinement. Disabled for state-evolution validation runs, which
    /// model the uncoded symbol prior.
    pub decoder_coupling: bool,
    /// Per-symbol activity decision threshold used for detection metrics.
    pub detection_threshold: f64,
}

impl Default for ReceiverParams {
    fn default() -> Self {
        ReceiverParams {
            max_iters: 20,
            damping: 0.95,
            stop_tol: 1e-4,
            llr_clamp: 30.0,
            aud_threshold: 0.95,
            rbp_frac: 0.05,
            ldpc_inner_iters: 25,
            pilot_var: 0.0,
            decoder_coupling: true,
            detection_threshold: 0.95,
        }
    }
}

/// Full description of one simulated scenario: population, window
/// geometry, priors, noise level and receiver knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of devices `N`.
    pub n_devices: usize,
    /// Number of base-station antennas `M'`.
    pub n_antennas: usize,
    /// Observation window length `T` in symbol intervals.
    pub window_len: usize,
    /// Sliding-window step in symbol intervals.
    pub window_step: usize,
    /// Pilot symbols per frame `L_p`.
    pub pilot_len: usize,
    /// Data symbols per frame `L_d`.
    pub data_len: usize,
    /// Per-device activity probability `rho_n`.
    pub activity_prob: Vec<f64>,
    /// Per-device channel variance `beta_n` (path loss and shadowing).
    pub channel_var: Vec<f64>,
    /// Log-normal shadowing spread in dB applied on top of `channel_var`
    /// when generating a scenario; `None` keeps the configured values.
    pub shadowing_sigma_db: Option<f64>,
    /// Asynchronous start-time model. `false` (default) draws frame
    /// starts uniformly over the positions fully inside the window:
    /// devices whose slot would straddle a boundary defer to the next
    /// window under the sliding-window re-transmission discipline.
    /// `true` draws over all overlapping positions, so partially
    /// observed frames transmit and corrupt the window as unmodeled
    /// interference.
    pub async_partial_frames: bool,
    /// Average SNR in dB; the noise variance follows
    /// `sigma_w^2 = N R sigma_x^2 / 10^(snr/10)`.
    pub snr_db: f64,
    pub mode: AccessMode,
    pub modulation: Modulation,
    /// Code rate `R`.
    pub code_rate: f64,
    /// Upper bound on the active fraction of the population per window.
    pub max_active_frac: f64,
    /// Master seed for scenario generation.
    pub seed: u64,
    pub receiver: ReceiverParams,
}

impl SystemConfig {
    /// Synchronous baseline configuration: 100 single-antenna devices,
    /// 32 BS antennas, 64 pilot + 128 data symbols, rate-1/2 QPSK,
    /// 5% activity capped at 10% of the population.
    pub fn default_sync() -> Self {
        let n = 100;
        SystemConfig {
            n_devices: n,
            n_antennas: 32,
            window_len: 192,
            window_step: 192,
            pilot_len: 64,
            data_len: 128,
            activity_prob: vec![0.05; n],
            channel_var: vec![1.0; n],
            shadowing_sigma_db: None,
            async_partial_frames: false,
            snr_db: 10.0,
            mode: AccessMode::Synchronous,
            modulation: Modulation::Qpsk,
            code_rate: 0.5,
            max_active_frac: 0.1,
            seed: 1,
            receiver: ReceiverParams::default(),
        }
    }

    /// Asynchronous counterpart of [`default_sync`](Self::default_sync):
    /// window of `T = 2L` symbols sliding by `L`, so every frame is fully
    /// contained in some window.
    pub fn default_async() -> Self {
        let mut cfg = SystemConfig::default_sync();
        cfg.mode = AccessMode::Asynchronous;
        cfg.window_len = 2 * cfg.frame_len();
        cfg.window_step = cfg.frame_len();
        cfg
    }

    /// Frame length `L = L_p + L_d`.
    pub fn frame_len(&self) -> usize {
        self.pilot_len + self.data_len
    }

    /// Codeword length in bits carried by the data part of one frame.
    pub fn codeword_len(&self) -> usize {
        self.data_len * self.modulation.bits_per_symbol()
    }

    /// Information bits per frame.
    pub fn info_len(&self) -> usize {
        (self.codeword_len() as f64 * self.code_rate).round() as usize
    }

    /// Noise variance implied by the configured average SNR with
    /// unit-energy data symbols.
    pub fn noise_var(&self) -> f64 {
        let sigma_x2 = 1.0;
        self.n_devices as f64 * self.code_rate * sigma_x2 / 10f64.powf(self.snr_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_devices == 0 {
            return Err(Error::config("n_devices", "must be at least 1"));
        }
        if self.n_antennas == 0 {
            return Err(Error::config("n_antennas", "must be at least 1"));
        }
        if self.pilot_len == 0 {
            return Err(Error::config("pilot_len", "must be at least 1"));
        }
        if self.data_len == 0 {
            return Err(Error::config("data_len", "must be at least 1"));
        }
        match self.mode {
            AccessMode::Synchronous => {
                if self.window_len != self.frame_len() {
                    return Err(Error::config(
                        "window_len",
                        format!(
                            "synchronous mode requires T = L = {}, got {}",
                            self.frame_len(),
                            self.window_len
                        ),
                    ));
                }
            }
            AccessMode::Asynchronous => {
                if self.window_len <= self.frame_len() {
                    return Err(Error::config(
                        "window_len",
                        format!(
                            "asynchronous mode requires T > L = {}, got {}",
                            self.frame_len(),
                            self.window_len
                        ),
                    ));
                }
            }
        }
        if self.window_step == 0 || self.window_step > self.window_len {
            return Err(Error::config(
                "window_step",
                "must be in [1, window_len]",
            ));
        }
        if self.activity_prob.len() != self.n_devices {
            return Err(Error::config(
                "activity_prob",
                format!(
                    "expected {} entries, got {}",
                    self.n_devices,
                    self.activity_prob.len()
                ),
            ));
        }
        if self.channel_var.len() != self.n_devices {
            return Err(Error::config(
                "channel_var",
                format!(
                    "expected {} entries, got {}",
                    self.n_devices,
                    self.channel_var.len()
                ),
            ));
        }
        for (i, &p) in self.activity_prob.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(
                    format!("activity_prob[{i}]"),
                    format!("{p} outside [0, 1]"),
                ));
            }
        }
        for (i, &b) in self.channel_var.iter().enumerate() {
            if !(b > 0.0) {
                return Err(Error::config(
                    format!("channel_var[{i}]"),
                    format!("{b} not strictly positive"),
                ));
            }
        }
        if !(self.max_active_frac > 0.0 && self.max_active_frac <= 1.0) {
            return Err(Error::config("max_active_frac", "must lie in (0, 1]"));
        }
        if !(self.code_rate > 0.0 && self.code_rate < 1.0) {
            return Err(Error::config("code_rate", "must lie in (0, 1)"));
        }
        if !(self.receiver.damping > 0.0 && self.receiver.damping <= 1.0) {
            return Err(Error::config("damping", "must lie in (0, 1]"));
        }
        if self.receiver.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if !(self.receiver.rbp_frac > 0.0 && self.receiver.rbp_frac <= 1.0) {
            return Err(Error::config("rbp_frac", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SystemConfig::default_sync().validate().unwrap();
        SystemConfig::default_async().validate().unwrap();
    }

    #[test]
    fn default_dims_match_baseline_scenario() {
        let cfg = SystemConfig::default_sync();
        assert_eq!(cfg.frame_len(), 192);
        assert_eq!(cfg.codeword_len(), 256);
        assert_eq!(cfg.info_len(), 128);
        // 10 log10(N R / sigma_w^2) = 20 dB with unit-energy symbols.
        let cfg20 = SystemConfig {
            snr_db: 20.0,
            ..cfg
        };
        assert!((cfg20.noise_var() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sync_window_must_equal_frame() {
        let mut cfg = SystemConfig::default_sync();
        cfg.window_len = 200;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn async_window_must_exceed_frame() {
        let mut cfg = SystemConfig::default_async();
        cfg.window_len = cfg.frame_len();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_bad_probabilities() {
        let mut cfg = SystemConfig::default_sync();
        cfg.activity_prob[3] = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::default_sync();
        cfg.channel_var[7] = 0.0;
        assert!(cfg.validate().is_err());
    }
}
