//! Total-power-only water-filling over the eigenmodes of `W1`.

use crate::error::{Error, Result};
use crate::hermitian::{eig, rank_of, HermitianMatrix, DEFAULT_RANK_TOL};

#[derive(Clone, Debug)]
pub struct WaterfillResult {
    pub covariance: HermitianMatrix,
    /// Water level `μ⁻¹`.
    pub water_level_inverse: f64,
    pub active_modes: usize,
    pub capacity_nats: f64,
}

impl WaterfillResult {
    /// The TPC multiplier `μ`.
    pub fn mu(&self) -> f64 {
        1.0 / self.water_level_inverse
    }
}

/// Water level and active mode count for positive gains sorted descending.
///
/// Exact active-set sweep: the first `k` with `level_k < 1/λ_{k+1}` wins.
pub(crate) fn water_level(gains_desc: &[f64], budget: f64) -> (f64, usize) {
    let r = gains_desc.len();
    let mut inv_sum = 0.0;
    for k in 1..=r {
        inv_sum += 1.0 / gains_desc[k - 1];
        let level = (budget + inv_sum) / k as f64;
        if k == r || level <= 1.0 / gains_desc[k] {
            return (level, k);
        }
    }
    unreachable!("water_level called with no positive gains")
}

pub fn waterfill(w1: &HermitianMatrix, p_t: f64) -> Result<WaterfillResult> {
    waterfill_with_tol(w1, p_t, DEFAULT_RANK_TOL)
}

pub fn waterfill_with_tol(w1: &HermitianMatrix, p_t: f64, tol: f64) -> Result<WaterfillResult> {
    if !(p_t > 0.0) || !p_t.is_finite() {
        return Err(Error::Domain(format!("total power must be positive, got {p_t}")));
    }
    let e = eig(w1)?;
    let r = rank_of(&e, tol);
    if r == 0 {
        return Err(Error::ZeroChannel);
    }
    let gains = &e.eigenvalues[..r];
    let (level, k) = water_level(gains, p_t);
    let covariance = e.rebuild(|i, l| (i < k).then(|| level - 1.0 / l));
    let capacity_nats = gains[..k].iter().map(|&g| (g * level).ln()).sum();
    Ok(WaterfillResult {
        covariance,
        water_level_inverse: level,
        active_modes: k,
        capacity_nats,
    })
}

/// `ln det(I + W1 R)` through the eigenvalues of `W1^{1/2} R W1^{1/2}`.
pub fn capacity_of(r: &HermitianMatrix, w1: &HermitianMatrix) -> Result<f64> {
    if r.dim() != w1.dim() {
        return Err(Error::DimensionMismatch {
            expected: w1.dim(),
            got: r.dim(),
        });
    }
    let q = crate::hermitian::sqrt_psd(&crate::hermitian::psd_part_with_tol(w1, 0.0)?)?;
    let e = eig(&r.congruence(&q))?;
    Ok(e
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).ln_1p())
        .sum::<f64>()
        .max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode() {
        let w = HermitianMatrix::from_real_diagonal(&[2.0]).unwrap();
        let r = waterfill(&w, 3.0).unwrap();
        assert!((r.covariance.get(0, 0).re - 3.0).abs() < 1e-12);
        assert!((r.capacity_nats - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_modes_one_active() {
        let w = HermitianMatrix::from_real_diagonal(&[1.0, 0.5]).unwrap();
        let r = waterfill(&w, 1.0).unwrap();
        assert!((r.water_level_inverse - 2.0).abs() < 1e-12);
        assert_eq!(r.active_modes, 1);
        let want = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]).unwrap();
        assert!(r.covariance.sub(&want).max_abs() < 1e-12);
        assert!((r.capacity_nats - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_split() {
        let r = waterfill(&HermitianMatrix::identity(2), 2.0).unwrap();
        assert!(r.covariance.sub(&HermitianMatrix::identity(2)).max_abs() < 1e-12);
        assert!((r.capacity_nats - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(waterfill(&HermitianMatrix::zeros(2), 1.0), Err(Error::ZeroChannel)));
        assert!(matches!(
            waterfill(&HermitianMatrix::identity(2), 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn capacity_of_examples() {
        let w = HermitianMatrix::identity(2);
        assert_eq!(capacity_of(&HermitianMatrix::zeros(2), &w).unwrap(), 0.0);
        assert!((capacity_of(&w, &w).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
        let w1 = HermitianMatrix::from_real_diagonal(&[1.0, 0.5]).unwrap();
        let r = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]).unwrap();
        assert!((capacity_of(&r, &w1).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(capacity_of(&HermitianMatrix::identity(3), &w1).is_err());
    }

    #[test]
    fn singular_channel_skips_dead_modes() {
        let w = HermitianMatrix::from_real_diagonal(&[3.0, 0.0, 1.0]).unwrap();
        let r = waterfill(&w, 10.0).unwrap();
        assert_eq!(r.active_modes, 2);
        assert!(r.covariance.get(1, 1).re.abs() < 1e-12);
        assert!((r.covariance.trace() - 10.0).abs() < 1e-12);
    }
}
