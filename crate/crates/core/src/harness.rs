//! Monte Carlo experiment runner: configuration loading, seeded sweeps
//! over SNR/policy/mode grids, parallel trial execution, aggregation
//! and CSV emission.

use crate::config::{AccessMode, SystemConfig};
use crate::engine::{run, ReceiverOutput};
use crate::ldpc::LdpcCode;
use crate::metrics::{detection_counts, fer_counts, DetectionCounts, FrameRecord};
use crate::scenario::ScenarioInstance;
use crate::scheduling::SchedulePolicy;
use crate::se::{se_predict, SePoint};
use crate::{Error, Result};
use ndarray::Array2;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::str::FromStr;

/// A full experiment: the scenario template plus the sweep grids.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub snr_grid: Vec<f64>,
    pub policies: Vec<SchedulePolicy>,
    pub modes: Vec<AccessMode>,
    pub n_trials: usize,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 picks the rayon default. The `GFAMP_WORKERS`
    /// environment variable overrides this at run time.
    pub workers: usize,
    pub compare_se: bool,
    pub master_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base: SystemConfig::default_sync(),
            snr_grid: vec![10.0],
            policies: vec![SchedulePolicy::Aud],
            modes: vec![AccessMode::Synchronous],
            n_trials: 500,
            out_dir: None,
            workers: 0,
            compare_se: false,
            master_seed: 1,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.n_trials == 0 {
            return Err(Error::config("n_trials", "must be at least 1"));
        }
        if self.snr_grid.is_empty() {
            return Err(Error::config("snr_grid", "must not be empty"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies", "must not be empty"));
        }
        if self.modes.is_empty() {
            return Err(Error::config("modes", "must not be empty"));
        }
        Ok(())
    }

    /// Scenario config for one grid point. Switching the mode away from
    /// the base adjusts the window geometry to the mode's default.
    pub fn cfg_for(&self, mode: AccessMode, snr_db: f64, seed: u64) -> SystemConfig {
        let mut cfg = self.base.clone();
        if cfg.mode != mode {
            cfg.mode = mode;
            match mode {
                AccessMode::Synchronous => {
                    cfg.window_len = cfg.frame_len();
                    cfg.window_step = cfg.frame_len();
                }
                AccessMode::Asynchronous => {
                    cfg.window_len = 2 * cfg.frame_len();
                    cfg.window_step = cfg.frame_len();
                }
            }
        }
        cfg.snr_db = snr_db;
        cfg.seed = seed;
        cfg
    }
}

// ---------------------------------------------------------------------------
// Config file parsing
// ---------------------------------------------------------------------------

/// Parse a `key = value` config file; an empty file keeps every
/// default. `#` starts a comment.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    let mut mode_set_explicitly = false;
    let mut window_len: Option<usize> = None;
    let mut window_step: Option<usize> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let key = key.trim();
        let value = value.trim();
        let bad = |reason: &str| Error::config(key, format!("`{value}`: {reason}"));

        match key {
            "n_devices" => {
                let n: usize = value.parse().map_err(|_| bad("not a count"))?;
                spec.base.n_devices = n;
                spec.base.activity_prob = vec![mean(&spec.base.activity_prob); n];
                spec.base.channel_var = vec![mean(&spec.base.channel_var); n];
            }
            "n_antennas" => spec.base.n_antennas = value.parse().map_err(|_| bad("not a count"))?,
            "pilot_len" => spec.base.pilot_len = value.parse().map_err(|_| bad("not a count"))?,
            "data_len" => spec.base.data_len = value.parse().map_err(|_| bad("not a count"))?,
            "window_len" => window_len = Some(value.parse().map_err(|_| bad("not a count"))?),
            "window_step" => window_step = Some(value.parse().map_err(|_| bad("not a count"))?),
            "activity_prob" => {
                let probs = parse_f64_list(value).map_err(|_| bad("not a number list"))?;
                spec.base.activity_prob = broadcast(probs, spec.base.n_devices)
                    .map_err(|reason| bad(&reason))?;
            }
            "channel_var" => {
                let vars = parse_f64_list(value).map_err(|_| bad("not a number list"))?;
                spec.base.channel_var =
                    broadcast(vars, spec.base.n_devices).map_err(|reason| bad(&reason))?;
            }
            "shadowing_sigma_db" => {
                spec.base.shadowing_sigma_db = Some(value.parse().map_err(|_| bad("not a number"))?)
            }
            "snr_db" => spec.base.snr_db = value.parse().map_err(|_| bad("not a number"))?,
            "snr_grid" => spec.snr_grid = parse_snr_grid(value).map_err(|reason| bad(&reason))?,
            "mode" => {
                spec.modes = vec![AccessMode::from_str(value)?];
                mode_set_explicitly = true;
            }
            "modes" => {
                spec.modes = value
                    .split(',')
                    .map(|m| AccessMode::from_str(m.trim()))
                    .collect::<Result<_>>()?;
                mode_set_explicitly = true;
            }
            "modulation" => spec.base.modulation = value.parse()?,
            "code_rate" => spec.base.code_rate = value.parse().map_err(|_| bad("not a number"))?,
            "max_active_frac" => {
                spec.base.max_active_frac = value.parse().map_err(|_| bad("not a number"))?
            }
            "seed" => spec.master_seed = value.parse().map_err(|_| bad("not an integer"))?,
            "max_iters" => {
                spec.base.receiver.max_iters = value.parse().map_err(|_| bad("not a count"))?
            }
            "damping" => {
                spec.base.receiver.damping = value.parse().map_err(|_| bad("not a number"))?
            }
            "stop_tol" => {
                spec.base.receiver.stop_tol = value.parse().map_err(|_| bad("not a number"))?
            }
            "llr_clamp" => {
                spec.base.receiver.llr_clamp = value.parse().map_err(|_| bad("not a number"))?
            }
            "aud_threshold" => {
                spec.base.receiver.aud_threshold = value.parse().map_err(|_| bad("not a number"))?
            }
            "rbp_frac" => {
                spec.base.receiver.rbp_frac = value.parse().map_err(|_| bad("not a number"))?
            }
            "ldpc_inner_iters" => {
                spec.base.receiver.ldpc_inner_iters =
                    value.parse().map_err(|_| bad("not a count"))?
            }
            "pilot_var" => {
                spec.base.receiver.pilot_var = value.parse().map_err(|_| bad("not a number"))?
            }
            "decoder_coupling" => {
                spec.base.receiver.decoder_coupling =
                    value.parse().map_err(|_| bad("not a boolean"))?
            }
            "detection_threshold" => {
                spec.base.receiver.detection_threshold =
                    value.parse().map_err(|_| bad("not a number"))?
            }
            "policies" | "policy" => {
                spec.policies = value
                    .split(',')
                    .map(|p| SchedulePolicy::from_str(p.trim()))
                    .collect::<Result<_>>()?;
            }
            "n_trials" | "trials" => {
                let n: i64 = value.parse().map_err(|_| bad("not an integer"))?;
                if n < 1 {
                    return Err(bad("must be at least 1"));
                }
                spec.n_trials = n as usize;
            }
            "out_dir" => spec.out_dir = Some(PathBuf::from(value)),
            "workers" => spec.workers = value.parse().map_err(|_| bad("not a count"))?,
            "compare_se" => spec.compare_se = value.parse().map_err(|_| bad("not a boolean"))?,
            other => {
                return Err(Error::config(other, "unknown key"));
            }
        }
    }

    // Window geometry: mode defaults unless overridden explicitly.
    if mode_set_explicitly && spec.modes.len() == 1 {
        spec.base.mode = spec.modes[0];
    }
    match spec.base.mode {
        AccessMode::Synchronous => {
            spec.base.window_len = window_len.unwrap_or_else(|| spec.base.frame_len());
            spec.base.window_step = window_step.unwrap_or_else(|| spec.base.frame_len());
        }
        AccessMode::Asynchronous => {
            spec.base.window_len = window_len.unwrap_or_else(|| 2 * spec.base.frame_len());
            spec.base.window_step = window_step.unwrap_or_else(|| spec.base.frame_len());
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn broadcast(values: Vec<f64>, n: usize) -> std::result::Result<Vec<f64>, String> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values),
        len => Err(format!("expected 1 or {n} entries, got {len}")),
    }
}

fn parse_f64_list(value: &str) -> std::result::Result<Vec<f64>, ()> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| ()))
        .collect()
}

/// `a:step:b` inclusive ranges or comma lists.
pub fn parse_snr_grid(value: &str) -> std::result::Result<Vec<f64>, String> {
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').collect();
        if parts.len() != 3 {
            return Err("range must be start:step:end".into());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| "bad range start")?;
        let step: f64 = parts[1].trim().parse().map_err(|_| "bad range step")?;
        let end: f64 = parts[2].trim().parse().map_err(|_| "bad range end")?;
        if step <= 0.0 {
            return Err("range step must be positive".into());
        }
        let mut grid = Vec::new();
        let mut v = start;
        let mut k = 0usize;
        while v <= end + 1e-9 {
            grid.push(v);
            k += 1;
            v = start + step * k as f64;
        }
        Ok(grid)
    } else {
        parse_f64_list(value).map_err(|_| "bad SNR list".into())
    }
}

// ---------------------------------------------------------------------------
// Trial execution and aggregation
// ---------------------------------------------------------------------------

/// Outcome of one trial, mergeable into grid-point aggregates.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub seed: u64,
    pub nmse_h: Option<f64>,
    pub nmse_x: Option<f64>,
    pub frames_total: usize,
    pub frames_error: usize,
    pub detections: DetectionCounts,
    pub mean_set_size: f64,
    pub mean_flops: f64,
    pub iters: usize,
    pub set_sizes: Vec<usize>,
    pub diverged: bool,
}

/// Aggregated results of one `(mode, policy, snr)` grid point.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub master_seed: u64,
    pub snr_db: f64,
    pub mode: AccessMode,
    pub policy: SchedulePolicy,
    pub nmse_h: f64,
    pub nmse_x: f64,
    pub fer: f64,
    pub mdr: f64,
    pub far: f64,
    pub mean_set_size: f64,
    pub mean_flops: f64,
    pub mean_iters: f64,
    pub trials: usize,
    pub failed: usize,
    /// Mean set size per iteration index, for feeding the state
    /// evolution with the empirical scheduling profile.
    pub set_profile: Vec<f64>,
}

/// Full sweep output.
#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub rows: Vec<AggregateRow>,
    pub se_curves: Vec<(AccessMode, f64, Vec<SePoint>)>,
    pub failed_trials: usize,
    pub total_trials: usize,
}

/// Deterministic per-trial seed, independent of the policy so all
/// policies face identical scenarios.
pub fn trial_seed(master: u64, mode_idx: usize, snr_idx: usize, trial: usize) -> u64 {
    splitmix64(
        master
            ^ (mode_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (snr_idx as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
            ^ (trial as u64).wrapping_mul(0x94D0_49BB_1331_11EB),
    )
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run one trial: generate the scenario, run the receiver, score it.
pub fn run_trial(
    cfg: &SystemConfig,
    policy: SchedulePolicy,
    code: &LdpcCode,
) -> Result<TrialRecord> {
    let scenario = ScenarioInstance::generate(cfg, code)?;
    let output = run(&scenario, cfg, policy, code);
    Ok(score_trial(cfg, &scenario, &output))
}

/// Score a finished receiver run against the scenario truth.
pub fn score_trial(
    cfg: &SystemConfig,
    scenario: &ScenarioInstance,
    output: &ReceiverOutput,
) -> TrialRecord {
    let n = cfg.n_devices;

    // NMSE over the receiver's decision domain: modeled devices.
    let mut num_h = 0.0;
    let mut den_h = 0.0;
    let mut num_x = 0.0;
    let mut den_x = 0.0;
    for dev in 0..n {
        if !output.modeled[dev] {
            continue;
        }
        for ant in 0..cfg.n_antennas {
            num_h += (output.h_hat[(ant, dev)] - scenario.channel[(ant, dev)]).norm_sqr();
            den_h += scenario.channel[(ant, dev)].norm_sqr();
        }
        let start = scenario.start_times[dev] as usize;
        for t in (start + cfg.pilot_len)..(start + cfg.frame_len()) {
            num_x += (output.x_hat[(dev, t)] - scenario.tx[(dev, t)]).norm_sqr();
            den_x += scenario.tx[(dev, t)].norm_sqr();
        }
    }

    // Frame accounting.
    let frames: Vec<FrameRecord> = (0..n)
        .map(|dev| FrameRecord {
            device: dev,
            active: scenario.active[dev],
            frame_type: scenario.frame_types[dev],
            start: scenario.start_times[dev],
            detected: output.detected[dev],
            info_match: match &output.decoded_info[dev] {
                Some(bits) => {
                    scenario.active[dev] && bits.as_slice() == scenario.info_bits[dev].as_slice()
                }
                None => false,
            },
        })
        .collect();
    let (frames_total, frames_error) = fer_counts(
        &frames,
        &output.gamma_hat,
        &scenario.activity,
        cfg.frame_len(),
    );

    // Per-symbol detection over the modeled cells.
    let mask = Array2::from_shape_fn((n, cfg.window_len), |(dev, _)| output.modeled[dev]);
    let detections = detection_counts(&output.gamma_hat, &scenario.activity, Some(&mask))
        .unwrap_or_default();

    TrialRecord {
        seed: cfg.seed,
        nmse_h: (den_h > 0.0).then(|| num_h / den_h),
        nmse_x: (den_x > 0.0).then(|| num_x / den_x),
        frames_total,
        frames_error,
        detections,
        mean_set_size: output.mean_set_size(),
        mean_flops: output.mean_flops(),
        iters: output.diagnostics.len(),
        set_sizes: output.diagnostics.iter().map(|d| d.set_size).collect(),
        diverged: output.diverged,
    }
}

/// Merge trial records in canonical (trial-index) order, which makes
/// the aggregation independent of completion order.
pub fn aggregate(
    records: &[(usize, TrialRecord)],
    master_seed: u64,
    snr_db: f64,
    mode: AccessMode,
    policy: SchedulePolicy,
) -> AggregateRow {
    let mut sorted: Vec<&(usize, TrialRecord)> = records.iter().collect();
    sorted.sort_by_key(|(idx, _)| *idx);

    let mut nmse_h_sum = 0.0;
    let mut nmse_h_count = 0usize;
    let mut nmse_x_sum = 0.0;
    let mut nmse_x_count = 0usize;
    let mut frames_total = 0usize;
    let mut frames_error = 0usize;
    let mut detections = DetectionCounts::default();
    let mut set_size_sum = 0.0;
    let mut flops_sum = 0.0;
    let mut iters_sum = 0usize;
    let mut failed = 0usize;
    let mut profile_sum: Vec<f64> = Vec::new();
    let mut profile_count: Vec<usize> = Vec::new();

    for (_, rec) in &sorted {
        if rec.diverged {
            failed += 1;
            continue;
        }
        if let Some(v) = rec.nmse_h {
            nmse_h_sum += v;
            nmse_h_count += 1;
        }
        if let Some(v) = rec.nmse_x {
            nmse_x_sum += v;
            nmse_x_count += 1;
        }
        frames_total += rec.frames_total;
        frames_error += rec.frames_error;
        detections.merge(&rec.detections);
        set_size_sum += rec.mean_set_size;
        flops_sum += rec.mean_flops;
        iters_sum += rec.iters;
        for (i, &s) in rec.set_sizes.iter().enumerate() {
            if profile_sum.len() <= i {
                profile_sum.push(0.0);
                profile_count.push(0);
            }
            profile_sum[i] += s as f64;
            profile_count[i] += 1;
        }
    }

    let ok = sorted.len() - failed;
    let okf = ok.max(1) as f64;
    AggregateRow {
        master_seed,
        snr_db,
        mode,
        policy,
        nmse_h: if nmse_h_count > 0 {
            nmse_h_sum / nmse_h_count as f64
        } else {
            f64::NAN
        },
        nmse_x: if nmse_x_count > 0 {
            nmse_x_sum / nmse_x_count as f64
        } else {
            f64::NAN
        },
        fer: if frames_total > 0 {
            frames_error as f64 / frames_total as f64
        } else {
            f64::NAN
        },
        mdr: detections.mdr().unwrap_or(f64::NAN),
        far: detections.far().unwrap_or(f64::NAN),
        mean_set_size: set_size_sum / okf,
        mean_flops: flops_sum / okf,
        mean_iters: iters_sum as f64 / okf,
        trials: sorted.len(),
        failed,
        set_profile: profile_sum
            .iter()
            .zip(&profile_count)
            .map(|(&s, &c)| s / c.max(1) as f64)
            .collect(),
    }
}

/// Run the full sweep. Trials parallelize within each grid point;
/// everything is deterministic in the master seed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let workers = std::env::var("GFAMP_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(spec.workers);
    let pool = if workers > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Malformed(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    // One code per codeword length; the construction seed is fixed so
    // every grid point uses the same code.
    let mut codes: BTreeMap<usize, LdpcCode> = BTreeMap::new();
    let nc = spec.base.codeword_len();
    codes.insert(nc, LdpcCode::construct(nc, spec.base.code_rate, 1)?);

    let mut rows = Vec::new();
    let mut se_curves = Vec::new();
    let mut failed_trials = 0usize;
    let mut total_trials = 0usize;

    for (mode_idx, &mode) in spec.modes.iter().enumerate() {
        for &policy in &spec.policies {
            for (snr_idx, &snr) in spec.snr_grid.iter().enumerate() {
                let code = &codes[&nc];
                let run_one = |trial: usize| -> (usize, TrialRecord) {
                    let seed = trial_seed(spec.master_seed, mode_idx, snr_idx, trial);
                    let cfg = spec.cfg_for(mode, snr, seed);
                    let record = catch_unwind(AssertUnwindSafe(|| {
                        run_trial(&cfg, policy, code)
                    }))
                    .unwrap_or_else(|_| {
                        Err(Error::NumericDivergence {
                            iter: 0,
                            what: "worker panicked".into(),
                        })
                    })
                    .unwrap_or_else(|_| TrialRecord {
                        seed,
                        nmse_h: None,
                        nmse_x: None,
                        frames_total: 0,
                        frames_error: 0,
                        detections: DetectionCounts::default(),
                        mean_set_size: 0.0,
                        mean_flops: 0.0,
                        iters: 0,
                        set_sizes: Vec::new(),
                        diverged: true,
                    });
                    (trial, record)
                };
                let records: Vec<(usize, TrialRecord)> = match &pool {
                    Some(p) => p.install(|| (0..spec.n_trials).into_par_iter().map(run_one).collect()),
                    None => (0..spec.n_trials).into_par_iter().map(run_one).collect(),
                };
                let row = aggregate(&records, spec.master_seed, snr, mode, policy);
                failed_trials += row.failed;
                total_trials += row.trials;
                rows.push(row);
            }
        }
    }

    if spec.compare_se {
        for (_, &mode) in spec.modes.iter().enumerate() {
            for (snr_idx, &snr) in spec.snr_grid.iter().enumerate() {
                let cfg = spec.cfg_for(mode, snr, spec.master_seed);
                // Feed the empirical set-size profile of the first
                // matching simulated row, if any.
                let profile = rows
                    .iter()
                    .find(|r| r.mode == mode && (r.snr_db - snr).abs() < 1e-12)
                    .map(|r| r.set_profile.clone());
                let points = se_predict(&cfg, cfg.receiver.max_iters, profile.as_deref())?;
                se_curves.push((mode, snr, points));
                let _ = snr_idx;
            }
        }
    }

    let results = ExperimentResults {
        rows,
        se_curves,
        failed_trials,
        total_trials,
    };
    if let Some(dir) = &spec.out_dir {
        write_outputs(&results, dir)?;
    }
    Ok(results)
}

/// `results.csv` schema:
/// `seed,snr_db,mode,policy,nmse_h,nmse_x,fer,mdr,far,mean_set_size,mean_flops,iters`.
pub fn results_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "seed,snr_db,mode,policy,nmse_h,nmse_x,fer,mdr,far,mean_set_size,mean_flops,iters\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6},{:.6},{:.3}\n",
            r.master_seed,
            r.snr_db,
            r.mode.as_str(),
            r.policy.as_str(),
            r.nmse_h,
            r.nmse_x,
            r.fer,
            r.mdr,
            r.far,
            r.mean_set_size,
            r.mean_flops,
            r.mean_iters
        ));
    }
    out
}

/// `se.csv` schema: `mode,snr_db,iter,mse_x,mse_h,mse_z,rho_hat`.
pub fn se_csv(curves: &[(AccessMode, f64, Vec<SePoint>)]) -> String {
    let mut out = String::from("mode,snr_db,iter,mse_x,mse_h,mse_z,rho_hat\n");
    for (mode, snr, points) in curves {
        for p in points {
            out.push_str(&format!(
                "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                mode.as_str(),
                snr,
                p.iter,
                p.mse_x,
                p.mse_h,
                p.mse_z,
                p.rho_hat
            ));
        }
    }
    out
}

fn write_outputs(results: &ExperimentResults, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("results.csv"))?;
    f.write_all(results_csv(&results.rows).as_bytes())?;
    if !results.se_curves.is_empty() {
        let mut f = std::fs::File::create(dir.join("se.csv"))?;
        f.write_all(se_csv(&results.se_curves).as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_paper_defaults() {
        let spec = parse_config("").unwrap();
        assert_eq!(spec.base.n_devices, 100);
        assert_eq!(spec.base.n_antennas, 32);
        assert_eq!(spec.base.pilot_len, 64);
        assert_eq!(spec.base.data_len, 128);
        assert_eq!(spec.base.code_rate, 0.5);
        assert_eq!(spec.base.modulation, crate::config::Modulation::Qpsk);
        assert_eq!(spec.base.receiver.max_iters, 20);
    }

    #[test]
    fn snr_range_expansion() {
        let grid = parse_snr_grid("0:2.5:20").unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid[8], 20.0);
    }

    #[test]
    fn rejects_negative_trials() {
        assert!(parse_config("n_trials = -5").is_err());
    }

    #[test]
    fn rejects_unknown_keys_with_key_path() {
        let err = parse_config("no_such_knob = 3").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("no_such_knob"), "unhelpful error: {msg}");
    }

    #[test]
    fn parses_policy_and_mode_lists() {
        let spec = parse_config(
            "policies = aud, rbp, full\nmode = async\nsnr_grid = 5,10\nn_trials = 3",
        )
        .unwrap();
        assert_eq!(spec.policies.len(), 3);
        assert_eq!(spec.modes, vec![AccessMode::Asynchronous]);
        assert_eq!(spec.base.window_len, 2 * spec.base.frame_len());
        assert_eq!(spec.n_trials, 3);
    }

    #[test]
    fn scalar_priors_broadcast_over_devices() {
        let spec = parse_config("n_devices = 10\nactivity_prob = 0.2\nchannel_var = 2.0").unwrap();
        assert_eq!(spec.base.activity_prob, vec![0.2; 10]);
        assert_eq!(spec.base.channel_var, vec![2.0; 10]);
    }

    #[test]
    fn trial_seeds_do_not_depend_on_policy() {
        let a = trial_seed(7, 0, 2, 13);
        let b = trial_seed(7, 0, 2, 13);
        assert_eq!(a, b);
        assert_ne!(trial_seed(7, 0, 2, 13), trial_seed(7, 0, 2, 14));
        assert_ne!(trial_seed(7, 0, 2, 13), trial_seed(8, 0, 2, 13));
    }

    #[test]
    fn aggregation_is_order_independent() {
        let mut spec = ExperimentSpec::default();
        spec.base = SystemConfig {
            n_devices: 12,
            n_antennas: 6,
            window_len: 24,
            window_step: 24,
            pilot_len: 8,
            data_len: 16,
            activity_prob: vec![0.2; 12],
            channel_var: vec![1.0; 12],
            snr_db: 15.0,
            max_active_frac: 0.5,
            seed: 1,
            ..SystemConfig::default_sync()
        };
        let code = LdpcCode::construct(spec.base.codeword_len(), 0.5, 1).unwrap();
        let records: Vec<(usize, TrialRecord)> = (0..6)
            .map(|trial| {
                let seed = trial_seed(1, 0, 0, trial);
                let cfg = spec.cfg_for(AccessMode::Synchronous, 15.0, seed);
                (trial, run_trial(&cfg, SchedulePolicy::Aud, &code).unwrap())
            })
            .collect();
        let a = aggregate(&records, 1, 15.0, AccessMode::Synchronous, SchedulePolicy::Aud);
        let mut shuffled = records.clone();
        shuffled.reverse();
        shuffled.swap(0, 3);
        let b = aggregate(&shuffled, 1, 15.0, AccessMode::Synchronous, SchedulePolicy::Aud);
        assert_eq!(results_csv(&[a]), results_csv(&[b]));
    }

    #[test]
    fn experiment_is_deterministic_and_full_grid() {
        let mut spec = ExperimentSpec::default();
        spec.base = SystemConfig {
            n_devices: 12,
            n_antennas: 6,
            window_len: 24,
            window_step: 24,
            pilot_len: 8,
            data_len: 16,
            activity_prob: vec![0.2; 12],
            channel_var: vec![1.0; 12],
            snr_db: 15.0,
            max_active_frac: 0.5,
            seed: 1,
            ..SystemConfig::default_sync()
        };
        spec.snr_grid = vec![10.0, 20.0];
        spec.policies = vec![SchedulePolicy::Full, SchedulePolicy::Aud];
        spec.modes = vec![AccessMode::Synchronous];
        spec.n_trials = 4;
        spec.workers = 2;

        let r1 = run_experiment(&spec).unwrap();
        let r2 = run_experiment(&spec).unwrap();
        assert_eq!(results_csv(&r1.rows), results_csv(&r2.rows));
        assert_eq!(r1.rows.len(), 2 * 2);

        // Worker count must not change the result.
        spec.workers = 1;
        let r3 = run_experiment(&spec).unwrap();
        assert_eq!(results_csv(&r1.rows), results_csv(&r3.rows));
    }
}
