//! Scalar posterior computations on the factor-graph edges.
//!
//! Everything here is a closed-form function of a Gaussian
//! pseudo-observation and a structured prior: the AWGN output posterior,
//! the Bernoulli-Gaussian channel posterior and the discrete
//! activity-gated symbol posterior. The receiver applies these per
//! matrix entry; the state-evolution recursion integrates the same
//! functions against Gaussian measures.

use crate::config::Modulation;
use num_complex::Complex64;

/// Repo-wide LLR convention: `L = log P(event=1) / P(event=0)`,
/// so a positive LLR favours bit value 1 (or the active hypothesis).
pub const LLR_CLAMP_DEFAULT: f64 = 30.0;

pub fn clamp_llr(l: f64, clamp: f64) -> f64 {
    l.clamp(-clamp, clamp)
}

/// Numerically stable `1 / (1 + exp(-l))`.
pub fn sigmoid(l: f64) -> f64 {
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log-density of a circularly symmetric complex Gaussian.
pub fn ln_cn_pdf(x: Complex64, mean: Complex64, var: f64) -> f64 {
    -(std::f64::consts::PI * var).ln() - (x - mean).norm_sqr() / var
}

// ---------------------------------------------------------------------------
// Constellation
// ---------------------------------------------------------------------------

/// Unit-energy constellation with Gray-mapped bit rails. Point `k`
/// carries bit `j` of the symbol as `(k >> j) & 1`; bit value `b`
/// maps to amplitude `1 - 2b` on its rail.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        match modulation {
            Modulation::Bpsk => Constellation {
                points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
                bits_per_symbol: 1,
            },
            Modulation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                let mut points = Vec::with_capacity(4);
                for k in 0..4usize {
                    let bi = (k & 1) as f64;
                    let bq = ((k >> 1) & 1) as f64;
                    points.push(Complex64::new(a * (1.0 - 2.0 * bi), a * (1.0 - 2.0 * bq)));
                }
                Constellation {
                    points,
                    bits_per_symbol: 2,
                }
            }
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Map one symbol's worth of code bits to a constellation point.
    pub fn map_bits(&self, bits: &[u8]) -> Complex64 {
        debug_assert_eq!(bits.len(), self.bits_per_symbol);
        let mut k = 0usize;
        for (j, &b) in bits.iter().enumerate() {
            k |= ((b & 1) as usize) << j;
        }
        self.points[k]
    }
}

// ---------------------------------------------------------------------------
// AWGN output posterior
// ---------------------------------------------------------------------------

/// Posterior of `z ~ CN(p_hat, nu_p)` observed through `y = z + w`,
/// `w ~ CN(0, noise_var)`, plus the scaled-residual pair used by the
/// bilinear iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputPosterior {
    pub z_hat: Complex64,
    pub z_var: f64,
    pub s_hat: Complex64,
    pub s_var: f64,
}

pub fn awgn_output(y: Complex64, p_hat: Complex64, nu_p: f64, noise_var: f64) -> OutputPosterior {
    let denom = nu_p + noise_var;
    let z_hat = p_hat + nu_p * (y - p_hat) / denom;
    let z_var = nu_p * noise_var / denom;
    // (z - p)/nu_p and (1 - nu_z/nu_p)/nu_p collapse to these forms for
    // the Gaussian likelihood, and stay finite as nu_p -> 0.
    let s_hat = (y - p_hat) / denom;
    let s_var = 1.0 / denom;
    OutputPosterior {
        z_hat,
        z_var,
        s_hat,
        s_var,
    }
}

// ---------------------------------------------------------------------------
// Bernoulli-Gaussian channel posterior
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelPosterior {
    pub h_hat: Complex64,
    pub h_var: f64,
    /// Posterior probability that the channel coefficient is drawn from
    /// the Gaussian (active) component.
    pub responsibility: f64,
    /// Evidence LLR `ln N_c(q; 0, beta + nu_q) - ln N_c(q; 0, nu_q)`,
    /// the per-edge activity likelihood fed to the prior-stage LBP.
    pub evidence_llr: f64,
}

/// Posterior of `h ~ rho CN(0, beta) + (1 - rho) delta_0` observed
/// through `q = h + CN(0, nu_q)`.
pub fn channel_posterior(
    q_hat: Complex64,
    nu_q: f64,
    rho: f64,
    beta: f64,
    clamp: f64,
) -> ChannelPosterior {
    debug_assert!(nu_q > 0.0 && beta > 0.0);
    let total = beta + nu_q;
    let evidence = (nu_q / total).ln() + q_hat.norm_sqr() * (1.0 / nu_q - 1.0 / total);

    let pi = if rho <= 0.0 {
        0.0
    } else if rho >= 1.0 {
        1.0
    } else {
        sigmoid(clamp_llr(logit(rho) + evidence, clamp))
    };

    let m1 = beta / total * q_hat;
    let v1 = beta * nu_q / total;
    let h_hat = pi * m1;
    let second_moment = pi * (v1 + m1.norm_sqr());
    ChannelPosterior {
        h_hat,
        h_var: second_moment - h_hat.norm_sqr(),
        responsibility: pi,
        evidence_llr: evidence,
    }
}

// ---------------------------------------------------------------------------
// Activity-gated symbol posterior
// ---------------------------------------------------------------------------

/// Per-symbol prior: point mass `1 - s_bar` at zero and `s_bar` spread
/// over the constellation with per-bit probabilities taken from the
/// decoder feedback LLRs (`llr[j] = log P(b_j = 1) / P(b_j = 0)`;
/// an empty slice or zeros mean equiprobable bits).
#[derive(Debug, Clone, Copy)]
pub struct SymbolPrior<'a> {
    pub s_bar: f64,
    pub bit_llrs: &'a [f64],
}

impl SymbolPrior<'_> {
    fn ln_bit_prob(&self, bit_idx: usize, value: usize) -> f64 {
        let llr = self.bit_llrs.get(bit_idx).copied().unwrap_or(0.0);
        if value == 1 {
            -softplus(-llr)
        } else {
            -softplus(llr)
        }
    }

    /// Log prior weight of constellation point `k` (without the
    /// exclusion of any bit).
    fn ln_point_prior(&self, k: usize, bits: usize) -> f64 {
        let mut lw = self.s_bar.ln();
        for j in 0..bits {
            lw += self.ln_bit_prob(j, (k >> j) & 1);
        }
        lw
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolPosterior {
    pub x_hat: Complex64,
    pub x_var: f64,
    pub second_moment: f64,
}

/// Posterior mean/variance of a symbol with the prior above observed
/// through `r = x + CN(0, nu_r)`. Direct summation over the finite
/// support `{0} ∪ A`.
pub fn symbol_posterior(
    r_hat: Complex64,
    nu_r: f64,
    prior: SymbolPrior,
    constellation: &Constellation,
) -> SymbolPosterior {
    if prior.s_bar <= 0.0 {
        return SymbolPosterior {
            x_hat: Complex64::new(0.0, 0.0),
            x_var: 0.0,
            second_moment: 0.0,
        };
    }
    let bits = constellation.bits_per_symbol();
    let points = constellation.points();
    // Log weights, constant factors of the Gaussian dropped.
    let mut lw = Vec::with_capacity(points.len() + 1);
    if prior.s_bar < 1.0 {
        lw.push((1.0 - prior.s_bar).ln() - r_hat.norm_sqr() / nu_r);
    } else {
        lw.push(f64::NEG_INFINITY);
    }
    for (k, &x) in points.iter().enumerate() {
        lw.push(prior.ln_point_prior(k, bits) - (x - r_hat).norm_sqr() / nu_r);
    }
    let norm = log_sum_exp(&lw);

    let mut mean = Complex64::new(0.0, 0.0);
    let mut m2 = 0.0;
    for (k, &x) in points.iter().enumerate() {
        let p = (lw[k + 1] - norm).exp();
        mean += p * x;
        m2 += p * x.norm_sqr();
    }
    SymbolPosterior {
        x_hat: mean,
        x_var: (m2 - mean.norm_sqr()).max(0.0),
        second_moment: m2,
    }
}

/// Code-bit LLRs of the multiuser detector's belief about one data
/// symbol: for each bit rail, the log ratio of the evidence for bit 1
/// against bit 0, marginalized over the other rails and the inactive
/// point, excluding the target bit's own prior.
pub fn symbol_bit_llrs(
    r_hat: Complex64,
    nu_r: f64,
    prior: SymbolPrior,
    constellation: &Constellation,
    clamp: f64,
) -> Vec<f64> {
    let bits = constellation.bits_per_symbol();
    let points = constellation.points();
    let ln_zero = if prior.s_bar < 1.0 {
        (1.0 - prior.s_bar).ln() - r_hat.norm_sqr() / nu_r
    } else {
        f64::NEG_INFINITY
    };
    let ln_s = if prior.s_bar > 0.0 {
        prior.s_bar.ln()
    } else {
        f64::NEG_INFINITY
    };

    (0..bits)
        .map(|j| {
            let mut num = vec![ln_zero];
            let mut den = vec![ln_zero];
            for (k, &x) in points.iter().enumerate() {
                // Prior over the other rails only: extrinsic to bit j.
                let mut lw = ln_s;
                for jj in 0..bits {
                    if jj != j {
                        lw += prior.ln_bit_prob(jj, (k >> jj) & 1);
                    }
                }
                lw -= (x - r_hat).norm_sqr() / nu_r;
                if (k >> j) & 1 == 1 {
                    num.push(lw);
                } else {
                    den.push(lw);
                }
            }
            clamp_llr(log_sum_exp(&num) - log_sum_exp(&den), clamp)
        })
        .collect()
}

/// Activity LLR of one data symbol under the Gaussian data
/// approximation: `log N_c(0 | r, nu_r) - log N_c(0 | r, nu_r + data_energy)`.
/// Positive values favour the inactive hypothesis.
pub fn activity_llr(r_hat: Complex64, nu_r: f64, data_energy: f64, clamp: f64) -> f64 {
    let l = ((nu_r + data_energy) / nu_r).ln()
        - r_hat.norm_sqr() * (1.0 / nu_r - 1.0 / (nu_r + data_energy));
    clamp_llr(l, clamp)
}
