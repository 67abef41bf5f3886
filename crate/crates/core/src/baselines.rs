//! Reference receivers: the parallel full-update variant and the
//! oracle-activity variant. Both are the same engine under different
//! scheduling policies, so every other processing detail matches the
//! scheduled receivers exactly.

use crate::config::SystemConfig;
use crate::engine::{run, ReceiverOutput};
use crate::ldpc::LdpcCode;
use crate::scenario::ScenarioInstance;
use crate::scheduling::SchedulePolicy;

/// Full-update receiver: every modeled device is refreshed in every
/// iteration.
pub fn parallel_variant(
    scenario: &ScenarioInstance,
    cfg: &SystemConfig,
    code: &LdpcCode,
) -> ReceiverOutput {
    run(scenario, cfg, SchedulePolicy::Full, code)
}

/// Perfect-activity receiver: the activity posteriors are pinned to the
/// true indicators, the prior-stage LBP and the activity refinements
/// are skipped, and only truly active devices are updated.
pub fn oracle_variant(
    scenario: &ScenarioInstance,
    cfg: &SystemConfig,
    code: &LdpcCode,
) -> ReceiverOutput {
    run(scenario, cfg, SchedulePolicy::Oracle, code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduling::SchedulePolicy;

    fn small_cfg() -> SystemConfig {
        let n = 16;
        SystemConfig {
            n_devices: n,
            n_antennas: 8,
            window_len: 24,
            window_step: 24,
            pilot_len: 8,
            data_len: 16,
            activity_prob: vec![0.2; n],
            channel_var: vec![1.0; n],
            snr_db: 15.0,
            max_active_frac: 0.5,
            seed: 11,
            ..SystemConfig::default_sync()
        }
    }

    #[test]
    fn parallel_variant_equals_full_policy_run() {
        let cfg = small_cfg();
        let code = LdpcCode::construct(cfg.codeword_len(), 0.5, 1).unwrap();
        let scenario = ScenarioInstance::generate(&cfg, &code).unwrap();
        let a = parallel_variant(&scenario, &cfg, &code);
        let b = run(&scenario, &cfg, SchedulePolicy::Full, &code);
        assert_eq!(a.h_hat, b.h_hat);
        assert_eq!(a.x_hat, b.x_hat);
        assert_eq!(a.rho_hat, b.rho_hat);
        assert_eq!(a.diagnostics.len(), b.diagnostics.len());
        for (da, db) in a.diagnostics.iter().zip(&b.diagnostics) {
            assert_eq!(da, db);
        }
    }

    #[test]
    fn oracle_pins_inactive_channels_to_zero() {
        let cfg = small_cfg();
        let code = LdpcCode::construct(cfg.codeword_len(), 0.5, 1).unwrap();
        let scenario = ScenarioInstance::generate(&cfg, &code).unwrap();
        let out = oracle_variant(&scenario, &cfg, &code);
        assert!(!out.diverged);
        for dev in 0..cfg.n_devices {
            if !scenario.active[dev] {
                for ant in 0..cfg.n_antennas {
                    assert_eq!(out.h_hat[(ant, dev)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn oracle_detection_matches_truth() {
        let cfg = small_cfg();
        let code = LdpcCode::construct(cfg.codeword_len(), 0.5, 1).unwrap();
        let scenario = ScenarioInstance::generate(&cfg, &code).unwrap();
        let out = oracle_variant(&scenario, &cfg, &code);
        for dev in 0..cfg.n_devices {
            assert_eq!(out.detected[dev], scenario.active[dev]);
            for t in 0..cfg.window_len {
                assert_eq!(out.gamma_hat[(dev, t)], scenario.activity[(dev, t)]);
            }
        }
    }
}
