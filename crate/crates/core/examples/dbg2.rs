use gfamp_core::config::SystemConfig;
use gfamp_core::engine::run;
use gfamp_core::ldpc::LdpcCode;
use gfamp_core::scenario::ScenarioInstance;
use gfamp_core::scheduling::SchedulePolicy;

fn main() {
    let snr: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10.0);
    let mut cfg = SystemConfig::default_async();
    cfg.snr_db = snr;
    cfg.seed = 12;
    
    let code = LdpcCode::construct(cfg.codeword_len(), 0.5, 1).unwrap();
    let scenario = ScenarioInstance::generate(&cfg, &code).unwrap();
    let n = cfg.n_devices;
    let active: Vec<usize> = (0..n).filter(|&d| scenario.active[d]).collect();
    println!("snr {snr}: active {active:?} noise_var {:.3}", scenario.noise_var);
    let out = run(&scenario, &cfg, SchedulePolicy::Full, &code);
    for d in &out.diagnostics {
        println!(
            "it {:2} tol {:9.3e} nmse_h {:9.3e} nmse_x {:9.3e}",
            d.iter, d.tol, d.nmse_h, d.nmse_x
        );
    }
    for &dev in active.iter().take(3) {
        let est: f64 = (0..cfg.n_antennas).map(|m| out.h_hat[(m, dev)].norm_sqr()).sum();
        let tru: f64 = (0..cfg.n_antennas)
            .map(|m| scenario.channel[(m, dev)].norm_sqr())
            .sum();
        let rho_p: f64 = (0..cfg.pilot_len).map(|t| out.rho_hat[(dev, t)]).sum::<f64>() / 64.0;
        let rho_d: f64 =
            (64..192).map(|t| out.rho_hat[(dev, t)]).sum::<f64>() / 128.0;
        println!(
            "ACT dev {dev}: |h|^2 {est:8.2} true {tru:8.2} rho_p {rho_p:.3} rho_d {rho_d:.3} det {}",
            out.detected[dev] as u8
        );
    }
    let mut spurious = 0;
    let mut spurious_energy = 0.0;
    for dev in 0..n {
        if scenario.active[dev] {
            continue;
        }
        let est: f64 = (0..cfg.n_antennas).map(|m| out.h_hat[(m, dev)].norm_sqr()).sum();
        spurious_energy += est;
        let rho_p: f64 = (0..cfg.pilot_len).map(|t| out.rho_hat[(dev, t)]).sum::<f64>() / 64.0;
        if rho_p > 0.5 {
            spurious += 1;
        }
    }
    println!("inactive: {spurious} with rho_p>0.5, total spurious |h|^2 {spurious_energy:.2}");
}
