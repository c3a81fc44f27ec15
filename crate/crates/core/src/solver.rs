//! Covariance, capacity and powers as functions of the dual variables, plus
//! KKT diagnostics for any candidate covariance.
//!
//! For duals `d = (μ1, μ2…)` let `G = μ1 I + Σ μ2k W2k = W_μ²`. The
//! Lagrangian maximizer is
//!
//! ```text
//! R*(d) = W_μ^† (I − W_μ W1⁻¹ W_μ)_+ W_μ^†
//! ```
//!
//! It is evaluated by a change of variables on the range of `G`: with
//! `T = Λ₊^{-1/2} U₊⁺` (active eigenpairs of `G`), `A = T W1 T⁺` and
//! `R̃ = Σ_{a>1} (1 − 1/a) v v⁺` over the eigenpairs of `A`, `R = T⁺ R̃ T`.
//! When `G` is nonsingular this is the plain `W_μ⁻¹` transform; when `G` is
//! singular (μ1 = 0 and a rank-deficient IPC Gram) the off-range blocks of
//! `R` are zero. Inverses of `W1` only ever act on the positive eigenspace of
//! `A`, so `W1` itself may be singular.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{eig, psd_part_with_tol, sqrt_psd, HermitianMatrix};
use crate::problem::{DualPoint, ProblemInstance};
use crate::waterfill::capacity_of;

/// Everything the dual map produces for one dual point.
#[derive(Clone, Debug)]
pub struct DualResponse {
    pub covariance: HermitianMatrix,
    /// `Σ_{λ_a > 1} ln λ_a`, nats.
    pub capacity_nats: f64,
    pub tx_power: f64,
    pub interference_powers: Vec<f64>,
    /// True when `G` was singular and the problem was projected on its range.
    pub projected: bool,
}

fn check_duals(inst: &ProblemInstance, d: &DualPoint) -> Result<()> {
    if d.mu2.len() != inst.num_ipc() {
        return Err(Error::DimensionMismatch {
            expected: inst.num_ipc(),
            got: d.mu2.len(),
        });
    }
    if !(d.mu1 >= 0.0) || d.mu2.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("dual variables must be non-negative".into()));
    }
    Ok(())
}

pub fn dual_response(inst: &ProblemInstance, d: &DualPoint, tol: f64) -> Result<DualResponse> {
    check_duals(inst, d)?;
    let m = inst.dim();
    let g = inst.dual_gram(d);
    let eg = eig(&g)?;
    let gmax = eg.max_abs_eigenvalue();
    if !(gmax > 0.0) {
        return Err(Error::DegenerateDuals);
    }
    let tau = tol * gmax;
    let active: Vec<usize> = (0..m).filter(|&k| eg.eigenvalues[k] > tau).collect();
    let r = active.len();
    // T = Λ₊^{-1/2} U₊⁺, r × m
    let t = DMatrix::from_fn(r, m, |i, j| {
        let k = active[i];
        eg.eigenvectors[(j, k)].conj() * (1.0 / eg.eigenvalues[k].sqrt())
    });
    let a = HermitianMatrix::from_matrix(&t * inst.w1.as_matrix() * t.adjoint())?;
    let ea = eig(&a)?;
    let r_tilde = ea.rebuild(|_, l| (l > 1.0).then(|| 1.0 - 1.0 / l));
    let covariance = HermitianMatrix::from_matrix(t.adjoint() * r_tilde.as_matrix() * &t)?;
    let capacity_nats = ea
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1.0)
        .map(|l| l.ln())
        .sum();
    let tx_power = covariance.trace();
    let interference_powers = inst
        .constraints
        .iter()
        .map(|c| c.w2.trace_product(&covariance))
        .collect();
    Ok(DualResponse {
        covariance,
        capacity_nats,
        tx_power,
        interference_powers,
        projected: r < m,
    })
}

pub fn covariance_from_duals(inst: &ProblemInstance, d: &DualPoint, tol: f64) -> Result<HermitianMatrix> {
    Ok(dual_response(inst, d, tol)?.covariance)
}

pub fn capacity_from_duals(inst: &ProblemInstance, d: &DualPoint, tol: f64) -> Result<f64> {
    Ok(dual_response(inst, d, tol)?.capacity_nats)
}

/// `(tr R*(d), [tr(W2k R*(d))])`.
pub fn powers_from_duals(inst: &ProblemInstance, d: &DualPoint, tol: f64) -> Result<(f64, Vec<f64>)> {
    let r = dual_response(inst, d, tol)?;
    Ok((r.tx_power, r.interference_powers))
}

/// KKT diagnostics. All fields are non-negative.
///
/// The implied PSD-cone multiplier is
/// `M = μ1 I + Σ μ2k W2k − (I + W1 R)⁻¹ W1`; optimality needs `M ⪰ 0` and
/// `M R = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max(m_psd_violation, complementarity)`.
    pub stationarity: f64,
    /// `max(0, −λ_min(M))`.
    pub m_psd_violation: f64,
    /// `‖M R‖_F`.
    pub complementarity: f64,
    /// `|μ1 (tr R − P_T)|`.
    pub slack_tpc: f64,
    /// `|μ2k (tr W2k R − P_Ik)|`.
    pub slack_ipc: Vec<f64>,
    /// `max(0, tr R − P_T)`.
    pub feasibility_tpc: f64,
    pub feasibility_ipc: Vec<f64>,
    /// `max(0, −λ_min(R))`.
    pub r_psd_violation: f64,
}

impl KktResiduals {
    pub fn max_residual(&self) -> f64 {
        [
            self.stationarity,
            self.slack_tpc,
            self.feasibility_tpc,
            self.r_psd_violation,
        ]
        .into_iter()
        .chain(self.slack_ipc.iter().copied())
        .chain(self.feasibility_ipc.iter().copied())
        .fold(0.0, f64::max)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// `(I + W1 R)⁻¹ W1`, evaluated in the Hermitian form
/// `Q (I + Q R Q)⁻¹ Q` with `Q = W1^{1/2}`.
fn capacity_gradient(w1: &HermitianMatrix, r: &HermitianMatrix) -> Result<HermitianMatrix> {
    let q = sqrt_psd(&psd_part_with_tol(w1, 0.0)?)?;
    let e = eig(&r.congruence(&q))?;
    let inner = e.rebuild(|_, s| Some(1.0 / (1.0 + s.max(0.0))));
    Ok(inner.congruence(&q))
}

pub fn kkt_check(inst: &ProblemInstance, covariance: &HermitianMatrix, duals: &DualPoint) -> Result<KktResiduals> {
    check_duals(inst, duals)?;
    if covariance.dim() != inst.dim() {
        return Err(Error::DimensionMismatch {
            expected: inst.dim(),
            got: covariance.dim(),
        });
    }
    let grad = capacity_gradient(&inst.w1, covariance)?;
    let mult = inst.dual_gram(duals).sub(&grad);
    let m_psd_violation = mult.psd_violation()?;
    let mr = mult.as_matrix() * covariance.as_matrix();
    let complementarity = mr.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let tx = covariance.trace();
    let mut slack_ipc = Vec::with_capacity(inst.num_ipc());
    let mut feasibility_ipc = Vec::with_capacity(inst.num_ipc());
    for (cst, &mu) in inst.constraints.iter().zip(&duals.mu2) {
        let p = cst.w2.trace_product(covariance);
        slack_ipc.push((mu * (p - cst.p_i)).abs());
        feasibility_ipc.push((p - cst.p_i).max(0.0));
    }
    Ok(KktResiduals {
        stationarity: m_psd_violation.max(complementarity),
        m_psd_violation,
        complementarity,
        slack_tpc: (duals.mu1 * (tx - inst.p_t)).abs(),
        slack_ipc,
        feasibility_tpc: (tx - inst.p_t).max(0.0),
        feasibility_ipc,
        r_psd_violation: covariance.psd_violation()?,
    })
}

/// How a [`Solution`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Waterfill,
    ZeroForcing,
    ZeroCapacity,
    ZeroBudgetProjection,
    CommonEigenvectors,
    Rank1W1,
    Rank1W2,
    IpcOnly,
    FullRankTpc,
    FullRankIpc,
    Iba,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Waterfill => "waterfill",
            Method::ZeroForcing => "zero-forcing",
            Method::ZeroCapacity => "zero-capacity",
            Method::ZeroBudgetProjection => "zero-budget-projection",
            Method::CommonEigenvectors => "common-eigenvectors",
            Method::Rank1W1 => "rank1-w1",
            Method::Rank1W2 => "rank1-w2",
            Method::IpcOnly => "ipc-only",
            Method::FullRankTpc => "full-rank-tpc",
            Method::FullRankIpc => "full-rank-ipc",
            Method::Iba => "iba",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A constraint is reported active when it binds to within this relative gap.
pub const ACTIVE_REL_TOL: f64 = 1e-7;

fn binds(power: f64, budget: f64) -> bool {
    power >= budget - ACTIVE_REL_TOL * budget.max(1.0)
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub covariance: HermitianMatrix,
    pub capacity_nats: f64,
    pub duals: DualPoint,
    pub tx_power: f64,
    pub interference_powers: Vec<f64>,
    pub tpc_active: bool,
    pub ipc_active: Vec<bool>,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub method: Method,
    pub converged: bool,
    /// Stopping residual of the producing algorithm (0 for closed forms).
    pub residual: f64,
    /// Dual-iteration trace `(μ1, μ2…)` after each outer iteration.
    pub history: Vec<DualPoint>,
}

impl Solution {
    /// Fills in powers, activity flags and KKT residuals. Capacity is
    /// recomputed from the covariance when `capacity_nats` is `None`.
    pub fn assemble(
        inst: &ProblemInstance,
        covariance: HermitianMatrix,
        duals: DualPoint,
        capacity_nats: Option<f64>,
        method: Method,
    ) -> Result<Self> {
        let capacity_nats = match capacity_nats {
            Some(c) => c,
            None => capacity_of(&covariance, &inst.w1)?,
        };
        let tx_power = covariance.trace();
        let interference_powers: Vec<f64> = inst
            .constraints
            .iter()
            .map(|c| c.w2.trace_product(&covariance))
            .collect();
        let kkt = kkt_check(inst, &covariance, &duals)?;
        Ok(Self {
            tpc_active: binds(tx_power, inst.p_t),
            ipc_active: inst
                .constraints
                .iter()
                .zip(&interference_powers)
                .map(|(c, &p)| binds(p, c.p_i))
                .collect(),
            covariance,
            capacity_nats,
            duals,
            tx_power,
            interference_powers,
            kkt,
            iterations: 0,
            method,
            converged: true,
            residual: 0.0,
            history: Vec::new(),
        })
    }

    pub fn capacity_bits(&self) -> f64 {
        self.capacity_nats / std::f64::consts::LN_2
    }
}

/// Embeds a covariance solved on a subspace: `basis · r · basis⁺`.
pub(crate) fn lift(basis: &DMatrix<Complex64>, r: &HermitianMatrix) -> Result<HermitianMatrix> {
    r.congruence_rect(basis)
}

/// Compresses `a` onto the columns of `basis`: `basis⁺ a basis`.
pub(crate) fn compress(basis: &DMatrix<Complex64>, a: &HermitianMatrix) -> Result<HermitianMatrix> {
    a.congruence_rect(&basis.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::DEFAULT_RANK_TOL;
    use crate::waterfill::waterfill;

    const TOL: f64 = DEFAULT_RANK_TOL;

    fn example3(w1: f64, w2: f64, p_t: f64, p_i: f64) -> ProblemInstance {
        ProblemInstance::single(
            HermitianMatrix::from_real_diagonal(&[w1, 0.0]).unwrap(),
            HermitianMatrix::from_real_diagonal(&[w2, 0.0]).unwrap(),
            p_t,
            p_i,
        )
        .unwrap()
    }

    #[test]
    fn ipc_term_vanishes_gives_waterfill_form() {
        let w1 = HermitianMatrix::from_real_diagonal(&[1.0, 0.5]).unwrap();
        let w2 = HermitianMatrix::from_real_rows(&[vec![1.0, -0.5], vec![-0.5, 1.0]]).unwrap();
        let inst = ProblemInstance::single(w1.clone(), w2, 1.0, 1.0).unwrap();
        let wf = waterfill(&w1, 1.0).unwrap();
        let r = covariance_from_duals(&inst, &DualPoint::single(wf.mu(), 0.0), TOL).unwrap();
        assert!(r.sub(&wf.covariance).max_abs() < 1e-12);
        let (p, q) = powers_from_duals(&inst, &DualPoint::single(wf.mu(), 0.0), TOL).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn isotropic_case() {
        let inst = ProblemInstance::single(
            HermitianMatrix::identity(2).scale(2.0),
            HermitianMatrix::identity(2),
            10.0,
            10.0,
        )
        .unwrap();
        let d = DualPoint::single(0.25, 0.25);
        let resp = dual_response(&inst, &d, TOL).unwrap();
        assert!(resp.covariance.sub(&HermitianMatrix::identity(2).scale(1.5)).max_abs() < 1e-12);
        assert!((resp.capacity_nats - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert!((resp.tx_power - 3.0).abs() < 1e-12);
        assert!((resp.interference_powers[0] - 3.0).abs() < 1e-12);
        assert!(!resp.projected);
    }

    #[test]
    fn all_gains_below_one_gives_zero() {
        let inst = ProblemInstance::single(
            HermitianMatrix::identity(2).scale(0.1),
            HermitianMatrix::identity(2),
            1.0,
            1.0,
        )
        .unwrap();
        let resp = dual_response(&inst, &DualPoint::single(1.0, 0.0), TOL).unwrap();
        assert_eq!(resp.capacity_nats, 0.0);
        assert!(resp.covariance.max_abs() < 1e-15);
    }

    #[test]
    fn zero_ipc_gram_gives_zero_interference() {
        let inst = ProblemInstance::single(
            HermitianMatrix::from_real_diagonal(&[2.0, 1.0]).unwrap(),
            HermitianMatrix::zeros(2),
            1.0,
            1.0,
        )
        .unwrap();
        for mu in [0.1, 0.5, 2.0] {
            let (_, q) = powers_from_duals(&inst, &DualPoint::single(mu, 3.0), TOL).unwrap();
            assert_eq!(q[0], 0.0);
        }
    }

    #[test]
    fn degenerate_duals_rejected() {
        let inst = example3(1.0, 1.0, 2.0, 1.0);
        assert!(matches!(
            covariance_from_duals(&inst, &DualPoint::single(0.0, 0.0), TOL),
            Err(Error::DegenerateDuals)
        ));
        assert!(covariance_from_duals(&inst, &DualPoint::single(1.0, -1.0), TOL).is_err());
    }

    #[test]
    fn singular_branch_example3() {
        // μ2 = w1 / (w2 + w1 P_I) puts the single useful mode at w2⁻¹ P_I.
        let (w1, w2, p_i) = (1.0, 1.0, 1.0);
        let inst = example3(w1, w2, 2.0, p_i);
        let d = DualPoint::single(0.0, w1 / (w2 + w1 * p_i));
        let resp = dual_response(&inst, &d, TOL).unwrap();
        assert!(resp.projected);
        assert!((resp.covariance.get(0, 0).re - p_i / w2).abs() < 1e-12);
        assert_eq!(resp.covariance.get(1, 1).re, 0.0);
        assert!((resp.capacity_nats - (1.0 + w1 * p_i / w2).ln()).abs() < 1e-12);
        let kkt = kkt_check(&inst, &resp.covariance, &d).unwrap();
        assert!(kkt.within(1e-8), "{kkt:?}");
    }

    #[test]
    fn kkt_of_waterfill_with_loose_ipc() {
        let w1 = HermitianMatrix::from_real_rows(&[vec![2.0, 0.4], vec![0.4, 0.7]]).unwrap();
        let inst = ProblemInstance::single(w1.clone(), HermitianMatrix::identity(2), 3.0, 1e9).unwrap();
        let wf = waterfill(&w1, 3.0).unwrap();
        let kkt = kkt_check(&inst, &wf.covariance, &DualPoint::single(wf.mu(), 0.0)).unwrap();
        assert!(kkt.within(1e-8), "{kkt:?}");
    }

    #[test]
    fn kkt_detects_perturbation() {
        let w1 = HermitianMatrix::from_real_rows(&[vec![2.0, 0.4], vec![0.4, 0.7]]).unwrap();
        let inst = ProblemInstance::single(w1.clone(), HermitianMatrix::identity(2), 3.0, 1e9).unwrap();
        let wf = waterfill(&w1, 3.0).unwrap();
        let bumped = wf
            .covariance
            .add(&HermitianMatrix::from_real_diagonal(&[0.1, 0.0]).unwrap());
        let kkt = kkt_check(&inst, &bumped, &DualPoint::single(wf.mu(), 0.0)).unwrap();
        assert!(kkt.slack_tpc.max(kkt.feasibility_tpc) > 0.05, "{kkt:?}");
    }
}
