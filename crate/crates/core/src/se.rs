//! Scalar state evolution: a one-dimensional recursion over
//! second-moment and overlap parameters that predicts the receiver's
//! per-iteration MSE for channel, symbols and products.
//!
//! The recursion mirrors the matrix iteration step for step: the
//! variance parameters are formed from the current overlaps, the
//! pseudo-channels feed the same scalar denoisers the receiver uses,
//! and the activity estimate is refined from the data pseudo-channel.
//! Known pilots enter through the frame-averaged symbol moments, which
//! also gives the recursion its bootstrap (the channel pseudo-channel
//! is finite in the first iteration even though no symbol overlap
//! exists yet). The denoisers run matched to the true priors; the
//! Bayes-optimal overlap identity `E[est * truth] = E|est|^2` then
//! keeps every overlap below its prior moment.

use crate::config::SystemConfig;
use crate::denoisers::{channel_posterior, symbol_posterior, Constellation, SymbolPrior};
use crate::quadrature::{integrate_panels, GaussHermite};
use crate::{Error, Result};
use num_complex::Complex64;

const ORDER_Z: usize = 40;
const ORDER_X: usize = 200;
const PANELS_H: usize = 24;

/// Scalar state of the recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeState {
    /// Second moment of the product entries.
    pub chi_z: f64,
    /// Second moment of the data-symbol prior.
    pub chi_x: f64,
    /// Second moment of the channel prior.
    pub chi_h: f64,
    /// Overlap (estimator second moment) of the product.
    pub var_z: f64,
    /// Overlap of the data-symbol estimator.
    pub var_x: f64,
    /// Overlap of the channel estimator.
    pub var_h: f64,
    pub nu_p: f64,
    pub nu_s: f64,
    pub nu_r: f64,
    pub nu_q: f64,
    /// Scalar activity estimate refined from the data pseudo-channel.
    pub rho_hat: f64,
    /// Scheduled-set size of this iteration (mean sizes allowed).
    pub set_size: f64,
    pub iter: usize,
}

impl SeState {
    /// Predicted data MSE `chi_x - var_x`.
    pub fn mse_x(&self) -> f64 {
        (self.chi_x - self.var_x).max(0.0)
    }

    /// Predicted channel MSE `chi_h - var_h`.
    pub fn mse_h(&self) -> f64 {
        (self.chi_h - self.var_h).max(0.0)
    }

    /// Predicted product MSE `chi_z - var_z`.
    pub fn mse_z(&self) -> f64 {
        (self.chi_z - self.var_z).max(0.0)
    }
}

/// One exported point of the prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SePoint {
    pub iter: usize,
    pub mse_x: f64,
    pub mse_h: f64,
    pub mse_z: f64,
    pub rho_hat: f64,
}

/// Scenario-level constants of the recursion.
struct SeContext {
    m: f64,
    t_len: f64,
    data_len: f64,
    /// Total pilot energy per frame (unit-norm sequences).
    pilot_energy: f64,
    rho_true: f64,
    beta: f64,
    noise_var: f64,
    data_energy: f64,
    constellation: Constellation,
    quad_z: GaussHermite,
    quad_x: GaussHermite,
    panels_h: usize,
    clamp: f64,
}

impl SeContext {
    fn new(cfg: &SystemConfig) -> Result<Self> {
        Self::with_orders(cfg, ORDER_Z, ORDER_X, PANELS_H)
    }

    fn with_orders(cfg: &SystemConfig, oz: usize, ox: usize, panels_h: usize) -> Result<Self> {
        let rho_true =
            cfg.activity_prob.iter().sum::<f64>() / cfg.activity_prob.len().max(1) as f64;
        let beta = cfg.channel_var.iter().sum::<f64>() / cfg.channel_var.len().max(1) as f64;
        Ok(SeContext {
            m: cfg.n_antennas as f64,
            t_len: cfg.window_len as f64,
            data_len: cfg.data_len as f64,
            pilot_energy: 1.0,
            rho_true,
            beta,
            noise_var: cfg.noise_var(),
            data_energy: 1.0,
            constellation: Constellation::new(cfg.modulation),
            quad_z: GaussHermite::new(oz)?,
            quad_x: GaussHermite::new(ox)?,
            panels_h,
            clamp: cfg.receiver.llr_clamp,
        })
    }

    /// Frame-averaged symbol second moment: known pilot energy plus the
    /// data-prior moment, spread over the window.
    fn chi_x_avg(&self, chi_x: f64) -> f64 {
        (self.pilot_energy + self.data_len * chi_x) / self.t_len
    }

    fn var_x_avg(&self, var_x: f64) -> f64 {
        (self.pilot_energy + self.data_len * var_x) / self.t_len
    }
}

/// Initial state: prior second moments, zero overlaps.
pub fn se_init(cfg: &SystemConfig, set_size: f64) -> Result<SeState> {
    cfg.validate()?;
    let ctx = SeContext::new(cfg)?;
    let chi_x = ctx.rho_true * ctx.data_energy;
    let chi_h = ctx.rho_true * ctx.beta;
    Ok(SeState {
        chi_z: set_size * chi_h * ctx.chi_x_avg(chi_x),
        chi_x,
        chi_h,
        var_z: 0.0,
        var_x: 0.0,
        var_h: 0.0,
        nu_p: f64::INFINITY,
        nu_s: 0.0,
        nu_r: f64::INFINITY,
        nu_q: f64::INFINITY,
        rho_hat: ctx.rho_true,
        set_size,
        iter: 0,
    })
}

/// One step of the recursion.
pub fn se_iterate(state: &SeState, cfg: &SystemConfig) -> Result<SeState> {
    let ctx = SeContext::new(cfg)?;
    se_iterate_ctx(state, &ctx, state.set_size)
}

fn se_iterate_ctx(state: &SeState, ctx: &SeContext, set_size: f64) -> Result<SeState> {
    let s = set_size;
    let chi_xa = ctx.chi_x_avg(state.chi_x);
    let var_xa = ctx.var_x_avg(state.var_x);
    let gap = chi_xa * state.chi_h - var_xa * state.var_h;
    if gap < -1e-9 {
        return Err(Error::Quadrature(format!(
            "overlap exceeded prior moment: gap = {gap}"
        )));
    }
    let gap = gap.max(0.0);
    let nu_p = s * gap;
    let chi_z = s * state.chi_h * chi_xa;

    // Product overlap: closed-form AWGN inner integrals under a
    // Gaussian product mean of variance |S| var_x var_h, integrated
    // over the standardized complex direction.
    let c2 = s * var_xa * state.var_h;
    let shrink_gain = if nu_p + ctx.noise_var > 0.0 {
        nu_p * nu_p / (nu_p + ctx.noise_var)
    } else {
        0.0
    };
    let var_z = ctx
        .quad_z
        .expect_std_complex_normal(|iota| c2 * iota.norm_sqr() + shrink_gain);

    // Variance parameters tied to the overlaps.
    let resid = (var_z - s * var_xa * state.var_h).max(0.0);
    let denom_sq = s * s * gap * gap;
    let nu_s = if denom_sq > 0.0 { resid / denom_sq } else { 0.0 };
    let nu_r = if state.var_h > 0.0 && resid > 0.0 {
        denom_sq / (ctx.m * state.var_h * resid)
    } else {
        f64::INFINITY
    };
    let nu_q = if var_xa > 0.0 && resid > 0.0 {
        denom_sq / (ctx.t_len * var_xa * resid)
    } else {
        f64::INFINITY
    };

    // Channel overlap through the matched Bernoulli-Gaussian denoiser.
    let var_h_new = if nu_q.is_finite() {
        channel_overlap(ctx, nu_q)
    } else {
        state.var_h
    };

    // Symbol overlap through the matched discrete denoiser; the data
    // pseudo-channel comes from the pre-update channel overlap.
    let var_x_new = if nu_r.is_finite() {
        symbol_overlap(ctx, nu_r)
    } else {
        state.var_x
    };

    // Activity refinement at the origin of the data pseudo-channel.
    let rho_new = if nu_r.is_finite() {
        nu_r / (2.0 * nu_r + state.chi_x)
    } else {
        state.rho_hat
    };

    Ok(SeState {
        chi_z,
        chi_x: state.chi_x,
        chi_h: state.chi_h,
        var_z,
        var_x: var_x_new,
        var_h: var_h_new,
        nu_p,
        nu_s,
        nu_r,
        nu_q,
        rho_hat: rho_new,
        set_size,
        iter: state.iter + 1,
    })
}

/// `E_q |E[h|q]|^2` with `q = h + CN(0, nu_q)` and `h` drawn from the
/// spike-and-slab prior. The integrand is radial, so each mixture
/// component reduces to a one-dimensional integral over `u = |q|^2`
/// with density `exp(-u/c)/c`. The responsibility is a logistic
/// function of `u`; splitting the range at its midpoint and clamp
/// saturation points keeps every segment smooth for the panel rule.
fn channel_overlap(ctx: &SeContext, nu_q: f64) -> f64 {
    let estimator_sq = |u: f64| {
        channel_posterior(
            Complex64::new(u.max(0.0).sqrt(), 0.0),
            nu_q,
            ctx.rho_true,
            ctx.beta,
            ctx.clamp,
        )
        .h_hat
        .norm_sqr()
    };
    // Responsibility LLR is a + b u.
    let b = 1.0 / nu_q - 1.0 / (ctx.beta + nu_q);
    let a = (ctx.rho_true / (1.0 - ctx.rho_true)).ln() + (nu_q / (ctx.beta + nu_q)).ln();
    let component = |c: f64| {
        let cap = 46.0 * c;
        let mut cuts = vec![0.0, cap];
        for v in [(-ctx.clamp - a) / b, -a / b, (ctx.clamp - a) / b] {
            if v > 0.0 && v < cap {
                cuts.push(v);
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            acc += integrate_panels(
                |u| estimator_sq(u) * (-u / c).exp() / c,
                w[0],
                w[1],
                ctx.panels_h,
            );
        }
        acc
    };
    (1.0 - ctx.rho_true) * component(nu_q) + ctx.rho_true * component(ctx.beta + nu_q)
}

/// `E_r |E[x|r]|^2` with `r = x + CN(0, nu_r)` and `x` drawn from the
/// activity-gated constellation prior with equiprobable code bits.
fn symbol_overlap(ctx: &SeContext, nu_r: f64) -> f64 {
    let prior = SymbolPrior {
        s_bar: ctx.rho_true,
        bit_llrs: &[],
    };
    let estimator_sq = |r: Complex64| {
        symbol_posterior(r, nu_r, prior, &ctx.constellation)
            .x_hat
            .norm_sqr()
    };
    let mut acc = (1.0 - ctx.rho_true)
        * ctx
            .quad_x
            .expect_complex_normal(Complex64::new(0.0, 0.0), nu_r, estimator_sq);
    let points = ctx.constellation.points();
    let w = ctx.rho_true / points.len() as f64;
    for &x in points {
        acc += w * ctx.quad_x.expect_complex_normal(x, nu_r, estimator_sq);
    }
    acc
}

/// Run the recursion for `n_iters` steps and export the per-iteration
/// MSE predictions; index 0 carries the prior MSEs. The optional
/// `set_profile` supplies per-iteration (mean) set sizes, e.g. the
/// empirical profile recorded by the Monte Carlo harness; a shorter
/// profile is extended with its last entry.
pub fn se_predict(
    cfg: &SystemConfig,
    n_iters: usize,
    set_profile: Option<&[f64]>,
) -> Result<Vec<SePoint>> {
    let ctx = SeContext::new(cfg)?;
    let default_size = set_profile
        .and_then(|p| p.first().copied())
        .unwrap_or(cfg.n_devices as f64);
    let mut state = se_init(cfg, default_size)?;
    let mut points = Vec::with_capacity(n_iters + 1);
    points.push(SePoint {
        iter: 0,
        mse_x: state.mse_x(),
        mse_h: state.mse_h(),
        mse_z: state.mse_z(),
        rho_hat: state.rho_hat,
    });
    for i in 0..n_iters {
        let size = match set_profile {
            Some(p) if !p.is_empty() => *p.get(i).unwrap_or(p.last().unwrap()),
            _ => cfg.n_devices as f64,
        };
        state = se_iterate_ctx(&state, &ctx, size)?;
        points.push(SePoint {
            iter: state.iter,
            mse_x: state.mse_x(),
            mse_h: state.mse_h(),
            mse_z: state.mse_z(),
            rho_hat: state.rho_hat,
        });
    }
    Ok(points)
}

/// CSV rendering of a prediction: `iter,mse_x,mse_h,mse_z,rho_hat`.
pub fn se_csv(points: &[SePoint]) -> String {
    let mut out = String::from("iter,mse_x,mse_h,mse_z,rho_hat\n");
    for p in points {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            p.iter, p.mse_x, p.mse_h, p.mse_z, p.rho_hat
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg_sync(snr_db: f64) -> SystemConfig {
        SystemConfig {
            snr_db,
            ..SystemConfig::default_sync()
        }
    }

    #[test]
    fn init_moments_are_prior_moments() {
        let cfg = cfg_sync(10.0);
        let state = se_init(&cfg, 100.0).unwrap();
        assert_abs_diff_eq!(state.chi_h, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(state.chi_x, 0.05, epsilon = 1e-12);
        assert_eq!(state.var_x, 0.0);
        assert_eq!(state.var_h, 0.0);
    }

    #[test]
    fn perfect_overlap_equilibrium_gives_zero_nu_p() {
        let cfg = cfg_sync(10.0);
        let ctx = SeContext::new(&cfg).unwrap();
        let mut state = se_init(&cfg, 100.0).unwrap();
        state.var_x = state.chi_x;
        state.var_h = state.chi_h;
        let next = se_iterate_ctx(&state, &ctx, 100.0).unwrap();
        assert_abs_diff_eq!(next.nu_p, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next.mse_z(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn infinite_noise_keeps_prior_uncertainty() {
        // sigma_w^2 -> infty: the product overlap collapses to
        // |S| var_x var_h and the symbol MSE stays at the prior.
        let mut cfg = cfg_sync(-250.0);
        cfg.receiver.max_iters = 5;
        let points = se_predict(&cfg, 5, None).unwrap();
        let prior_mse = points[0].mse_x;
        for p in &points {
            assert!(p.mse_x > 0.9 * prior_mse, "iteration {}: {}", p.iter, p.mse_x);
        }
    }

    #[test]
    fn recursion_converges_and_decreases_at_mid_snr() {
        let cfg = cfg_sync(5.0);
        let points = se_predict(&cfg, 20, None).unwrap();
        for w in points.windows(2).skip(1) {
            assert!(
                w[1].mse_x <= w[0].mse_x + 1e-9,
                "mse_x not non-increasing: {} -> {}",
                w[0].mse_x,
                w[1].mse_x
            );
        }
        let tail = (points[19].mse_x - points[20].mse_x).abs();
        assert!(tail < 1e-6, "not converged: last delta {tail}");
    }

    #[test]
    fn higher_snr_predicts_lower_mse() {
        let lo = se_predict(&cfg_sync(0.0), 20, None).unwrap();
        let hi = se_predict(&cfg_sync(20.0), 20, None).unwrap();
        assert!(hi[20].mse_x < lo[20].mse_x);
    }

    #[test]
    fn overlaps_bounded_by_priors() {
        let cfg = cfg_sync(10.0);
        let ctx = SeContext::new(&cfg).unwrap();
        let mut state = se_init(&cfg, 100.0).unwrap();
        for _ in 0..20 {
            state = se_iterate_ctx(&state, &ctx, 100.0).unwrap();
            assert!(state.var_x >= -1e-12 && state.var_x <= state.chi_x + 1e-9);
            assert!(state.var_h >= -1e-12 && state.var_h <= state.chi_h + 1e-9);
            assert!(state.mse_x() >= 0.0 && state.mse_h() >= 0.0);
        }
    }

    #[test]
    fn product_overlap_matches_closed_form() {
        // The quadrature route must reproduce the analytic value
        // |S| var_x var_h + nu_p^2 / (nu_p + sigma^2).
        let cfg = cfg_sync(10.0);
        let ctx = SeContext::new(&cfg).unwrap();
        let mut state = se_init(&cfg, 100.0).unwrap();
        state.var_h = 0.02;
        state.var_x = 0.01;
        let next = se_iterate_ctx(&state, &ctx, 100.0).unwrap();
        let var_xa = ctx.var_x_avg(0.01);
        let chi_xa = ctx.chi_x_avg(state.chi_x);
        let nu_p = 100.0 * (chi_xa * state.chi_h - var_xa * 0.02);
        let expect = 100.0 * var_xa * 0.02 + nu_p * nu_p / (nu_p + ctx.noise_var);
        assert_abs_diff_eq!(next.var_z, expect, epsilon = 1e-8 * expect.max(1.0));
    }

    #[test]
    fn quadrature_order_doubling_is_stable() {
        let cfg = cfg_sync(10.0);
        let ctx = SeContext::new(&cfg).unwrap();
        let ctx2 = SeContext::with_orders(&cfg, ORDER_Z, 2 * ORDER_X, 2 * PANELS_H).unwrap();
        for nu in [0.05, 0.5, 5.0] {
            let a = channel_overlap(&ctx, nu);
            let b = channel_overlap(&ctx2, nu);
            assert!(
                (a - b).abs() < 1e-8,
                "channel overlap drifts at nu={nu}: {a} vs {b}"
            );
            let a = symbol_overlap(&ctx, nu);
            let b = symbol_overlap(&ctx2, nu);
            assert!(
                (a - b).abs() < 1e-8,
                "symbol overlap drifts at nu={nu}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn overlaps_match_adaptive_reference() {
        use crate::quadrature::expect_complex_normal_adaptive;
        let cfg = cfg_sync(10.0);
        let ctx = SeContext::new(&cfg).unwrap();
        for nu in [0.05, 0.5, 5.0] {
            let fixed = channel_overlap(&ctx, nu);
            let est = |q: Complex64| {
                channel_posterior(q, nu, ctx.rho_true, ctx.beta, ctx.clamp)
                    .h_hat
                    .norm_sqr()
            };
            let adaptive = (1.0 - ctx.rho_true)
                * expect_complex_normal_adaptive(Complex64::new(0.0, 0.0), nu, est, 1e-12)
                + ctx.rho_true
                    * expect_complex_normal_adaptive(
                        Complex64::new(0.0, 0.0),
                        ctx.beta + nu,
                        est,
                        1e-12,
                    );
            assert!(
                (fixed - adaptive).abs() < 1e-8,
                "channel overlap vs adaptive at nu={nu}: {fixed} vs {adaptive}"
            );
        }
    }

    #[test]
    fn predict_zero_iters_returns_prior_point() {
        let cfg = cfg_sync(10.0);
        let points = se_predict(&cfg, 0, None).unwrap();
        assert_eq!(points.len(), 1);
        assert_abs_diff_eq!(points[0].mse_x, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(points[0].mse_h, 0.05, epsilon = 1e-12);
    }
}
