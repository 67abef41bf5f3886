//! Update-set policies: which device nodes get their messages
//! refreshed in each receiver iteration.
//!
//! All policies share the same lifecycle: a full first iteration, a
//! rebuild from the policy's metric, then one head element dropped per
//! iteration until the set empties and a full parallel iteration
//! starts the cycle again.

use crate::{Error, RealMat, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulePolicy {
    /// Every candidate refreshed every iteration (the parallel baseline).
    Full,
    /// Membership from the instantaneous activity posteriors.
    Aud,
    /// Membership from the largest channel-belief residuals.
    Rbp,
    /// Perfect activity knowledge: exactly the truly active devices.
    Oracle,
}

impl SchedulePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulePolicy::Full => "full",
            SchedulePolicy::Aud => "aud",
            SchedulePolicy::Rbp => "rbp",
            SchedulePolicy::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for SchedulePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(SchedulePolicy::Full),
            "aud" => Ok(SchedulePolicy::Aud),
            "rbp" => Ok(SchedulePolicy::Rbp),
            "oracle" => Ok(SchedulePolicy::Oracle),
            other => Err(Error::UnknownAlgorithm(other.into())),
        }
    }
}

/// The ordered group of device nodes refreshed in one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleSet {
    /// Ascending device indices; empty means the next update rebuilds
    /// a full set.
    pub members: Vec<usize>,
    pub iteration_built: usize,
    pub policy: SchedulePolicy,
}

impl ScheduleSet {
    /// The set of the first iteration: every candidate device.
    pub fn initial(policy: SchedulePolicy, candidates: &[usize]) -> Self {
        ScheduleSet {
            members: candidates.to_vec(),
            iteration_built: 1,
            policy,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, device: usize) -> bool {
        self.members.binary_search(&device).is_ok()
    }

    fn is_full(&self, candidates: &[usize]) -> bool {
        self.members == candidates
    }

    fn advance(
        self,
        candidates: &[usize],
        iteration: usize,
        rebuild: impl FnOnce() -> Vec<usize>,
    ) -> ScheduleSet {
        let members = if self.members.is_empty() {
            candidates.to_vec()
        } else if self.is_full(candidates) {
            rebuild()
        } else {
            self.members[1..].to_vec()
        };
        ScheduleSet {
            members,
            iteration_built: iteration,
            policy: self.policy,
        }
    }
}

/// Activity-based update: after a full iteration the set is rebuilt
/// from the devices whose activity posterior exceeds the threshold
/// anywhere in the window, then shrinks by its head element per
/// iteration; an empty set triggers a full parallel iteration.
pub fn aud_update(
    prev: ScheduleSet,
    rho_hat: &RealMat,
    threshold: f64,
    candidates: &[usize],
    iteration: usize,
) -> ScheduleSet {
    prev.advance(candidates, iteration, || {
        candidates
            .iter()
            .copied()
            .filter(|&dev| {
                rho_hat
                    .row(dev)
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max)
                    > threshold
            })
            .collect()
    })
}

/// Residuals of the channel beliefs between consecutive iterations:
/// per device, the Euclidean norm over antennas of the change of the
/// Gaussian belief parameters (mean, variance).
pub fn rbp_residuals(
    h_prev: &crate::ComplexMat,
    h_var_prev: &RealMat,
    h_new: &crate::ComplexMat,
    h_var_new: &RealMat,
) -> Result<Vec<f64>> {
    if h_prev.dim() != h_new.dim() || h_var_prev.dim() != h_var_new.dim() {
        return Err(Error::InvalidDimension(
            "belief shapes differ between iterations".into(),
        ));
    }
    let n = h_prev.ncols();
    let mut res = Vec::with_capacity(n);
    for dev in 0..n {
        let mut acc = 0.0;
        for ant in 0..h_prev.nrows() {
            acc += (h_new[(ant, dev)] - h_prev[(ant, dev)]).norm_sqr();
            let dv = h_var_new[(ant, dev)] - h_var_prev[(ant, dev)];
            acc += dv * dv;
        }
        res.push(acc.sqrt());
    }
    Ok(res)
}

/// Residual-based update: rebuilt sets keep the `ceil(frac * N)`
/// devices with the largest residuals (ties broken by ascending device
/// index); the drop lifecycle matches the activity policy.
pub fn rbp_update(
    prev: ScheduleSet,
    residuals: &[f64],
    n_devices: usize,
    frac: f64,
    candidates: &[usize],
    iteration: usize,
) -> ScheduleSet {
    prev.advance(candidates, iteration, || {
        let keep = ((frac * n_devices as f64).ceil() as usize).max(1);
        let mut order: Vec<usize> = candidates.to_vec();
        // Stable sort by descending residual keeps ascending-index
        // tie-breaking.
        order.sort_by(|&a, &b| {
            residuals[b]
                .partial_cmp(&residuals[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut members: Vec<usize> = order.into_iter().take(keep).collect();
        members.sort_unstable();
        members
    })
}

/// Full policy: the members never change.
pub fn full_update(prev: ScheduleSet, candidates: &[usize], iteration: usize) -> ScheduleSet {
    ScheduleSet {
        members: candidates.to_vec(),
        iteration_built: iteration,
        policy: prev.policy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn cands(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn initial_set_is_full() {
        let s = ScheduleSet::initial(SchedulePolicy::Aud, &cands(10));
        assert_eq!(s.members, cands(10));
        assert_eq!(s.iteration_built, 1);
    }

    #[test]
    fn aud_rebuilds_from_posteriors_after_full_iteration() {
        let c = cands(6);
        let mut rho = Array2::from_elem((6, 4), 0.1);
        rho[(2, 1)] = 0.99;
        rho[(5, 3)] = 0.97;
        let s = ScheduleSet::initial(SchedulePolicy::Aud, &c);
        let s = aud_update(s, &rho, 0.95, &c, 2);
        assert_eq!(s.members, vec![2, 5]);
    }

    #[test]
    fn aud_drops_head_then_refills() {
        let c = cands(10);
        let rho = Array2::from_elem((10, 2), 0.0);
        let mut s = ScheduleSet {
            members: vec![3, 7, 9],
            iteration_built: 2,
            policy: SchedulePolicy::Aud,
        };
        s = aud_update(s, &rho, 0.95, &c, 3);
        assert_eq!(s.members, vec![7, 9]);
        s = aud_update(s, &rho, 0.95, &c, 4);
        assert_eq!(s.members, vec![9]);
        s = aud_update(s, &rho, 0.95, &c, 5);
        assert!(s.is_empty());
        s = aud_update(s, &rho, 0.95, &c, 6);
        assert_eq!(s.members, c, "empty set refills to the full candidate set");
    }

    #[test]
    fn residual_of_single_entry_change() {
        let m = 2;
        let n = 3;
        let h0: crate::ComplexMat = Array2::zeros((m, n));
        let v0: RealMat = Array2::zeros((m, n));
        let mut h1 = h0.clone();
        h1[(0, 1)] = num_complex::Complex64::new(0.6, 0.8);
        let res = rbp_residuals(&h0, &v0, &h1, &v0).unwrap();
        assert!((res[0] - 0.0).abs() < 1e-15);
        assert!((res[1] - 1.0).abs() < 1e-12, "norm of one-hot difference");
        assert!((res[2] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn residual_hand_case_three_four_five() {
        let h0: crate::ComplexMat = Array2::zeros((2, 1));
        let v0: RealMat = Array2::zeros((2, 1));
        let mut h1 = h0.clone();
        h1[(0, 0)] = num_complex::Complex64::new(3.0, 0.0);
        h1[(1, 0)] = num_complex::Complex64::new(4.0, 0.0);
        let res = rbp_residuals(&h0, &v0, &h1, &v0).unwrap();
        assert!((res[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn residual_shape_mismatch_is_error() {
        let a: crate::ComplexMat = Array2::zeros((2, 2));
        let b: crate::ComplexMat = Array2::zeros((2, 3));
        let va: RealMat = Array2::zeros((2, 2));
        assert!(rbp_residuals(&a, &va, &b, &va).is_err());
    }

    #[test]
    fn rbp_rebuild_takes_top_fraction() {
        let c = cands(4);
        let s = ScheduleSet::initial(SchedulePolicy::Rbp, &c);
        let res = vec![0.9, 0.1, 0.5, 0.4];
        let s = rbp_update(s, &res, 4, 0.5, &c, 2);
        assert_eq!(s.members, vec![0, 2], "top-2 residuals, ascending order");
    }

    #[test]
    fn rbp_ties_prefer_low_indices() {
        let c = cands(5);
        let s = ScheduleSet::initial(SchedulePolicy::Rbp, &c);
        let res = vec![1.0; 5];
        let s = rbp_update(s, &res, 100, 0.02, &c, 2);
        assert_eq!(s.members, vec![0, 1]); // ceil(0.02 * 100) = 2
    }

    #[test]
    fn rbp_rebuild_size_is_ceil_frac_n() {
        let c = cands(100);
        let s = ScheduleSet::initial(SchedulePolicy::Rbp, &c);
        let res: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let s = rbp_update(s, &res, 100, 0.05, &c, 2);
        assert_eq!(s.len(), 5);
        assert_eq!(s.members, vec![95, 96, 97, 98, 99]);
    }

    #[test]
    fn full_policy_never_changes() {
        let c = cands(7);
        let mut s = ScheduleSet::initial(SchedulePolicy::Full, &c);
        for it in 2..10 {
            s = full_update(s, &c, it);
            assert_eq!(s.members, c);
        }
    }

    #[test]
    fn set_sizes_decrease_by_one_between_rebuilds() {
        let c = cands(20);
        let rho = Array2::from_elem((20, 2), 0.0);
        let mut s = ScheduleSet {
            members: vec![1, 4, 9, 12],
            iteration_built: 2,
            policy: SchedulePolicy::Aud,
        };
        let mut prev_len = s.len();
        for it in 3..7 {
            s = aud_update(s, &rho, 0.95, &c, it);
            assert_eq!(s.len(), prev_len - 1);
            prev_len = s.len();
        }
    }
}
