use gfamp_core::config::AccessMode;
use gfamp_core::harness::{run_experiment, ExperimentSpec};
use gfamp_core::scheduling::SchedulePolicy;
use gfamp_core::se::se_predict;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("async");
    let trials: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(50);

    let mut spec = ExperimentSpec::default();
    spec.n_trials = trials;
    spec.master_seed = 7;

    match mode {
        "async" => {
            spec.base = gfamp_core::config::SystemConfig::default_async();
            spec.modes = vec![AccessMode::Asynchronous];
            spec.snr_grid = vec![5.0, 10.0, 15.0, 20.0];
            spec.policies = vec![SchedulePolicy::Full];
        }
        "sync" => {
            spec.base = gfamp_core::config::SystemConfig::default_sync();
            spec.modes = vec![AccessMode::Synchronous];
            spec.snr_grid = vec![10.0, 15.0, 20.0];
            spec.policies = vec![SchedulePolicy::Full];
            spec.base.receiver.decoder_coupling = false;
        }
        other => panic!("unknown mode {other}"),
    }

    let t0 = std::time::Instant::now();
    let results = run_experiment(&spec).unwrap();
    println!("elapsed: {:.1?} for {} trials/point", t0.elapsed(), trials);
    println!("mode policy snr | nmse_h nmse_x | fer mdr far | set flops iters");
    for r in &results.rows {
        println!(
            "{:5} {:6} {:5.1} | {:9.3e} {:9.3e} | {:7.4} {:9.3e} {:9.3e} | {:5.1} {:9.3e} {:4.1}",
            r.mode.as_str(),
            r.policy.as_str(),
            r.snr_db,
            r.nmse_h,
            r.nmse_x,
            r.fer,
            r.mdr,
            r.far,
            r.mean_set_size,
            r.mean_flops,
            r.mean_iters
        );
    }

    if mode == "sync" {
        println!("\nSE vs sim (data NMSE at iteration 20):");
        for (i, &snr) in spec.snr_grid.iter().enumerate() {
            let cfg = spec.cfg_for(AccessMode::Synchronous, snr, 1);
            let points = se_predict(&cfg, 20, None).unwrap();
            let se_nmse = points[20].mse_x / points[0].mse_x.max(1e-300);
            let sim = results.rows[i].nmse_x;
            println!(
                "snr {snr:5.1}: SE {:9.3e}  sim {:9.3e}  ratio {:6.2} dB",
                se_nmse,
                sim,
                10.0 * (sim / se_nmse).log10()
            );
        }
    }
}
