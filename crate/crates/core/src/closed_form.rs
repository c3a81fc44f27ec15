//! Explicit solutions for structured instances, capacity classification and
//! capacity bounds.
//!
//! The `Option`-returning solvers yield `None` when the instance does not
//! meet their preconditions or validity region; callers then fall back to
//! the IBA. Threshold comparisons carry an absolute margin of `1e-12` so
//! that boundary cases fall through rather than produce a marginal closed
//! form.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{
    eig, null_space_contained, pinv, rank_of, sqrt_psd, EigenDecomposition, HermitianMatrix,
    DEFAULT_RANK_TOL,
};
use crate::iba::{
    bisect, check_zf_shortcut, dual_bounds_with_tol, range_basis, run_iba, Coord, DualModel, SolverConfig,
};
use crate::problem::{DualPoint, IpcConstraint, ProblemInstance};
use crate::solver::{compress, Method, Solution};
use crate::waterfill::waterfill_with_tol;

const THRESHOLD_TOL: f64 = 1e-12;

struct FullRankInverse {
    inv: HermitianMatrix,
    trace: f64,
    logdet: f64,
    /// `λ1(A⁻¹) = 1/λm(A)`.
    max_inv_eig: f64,
}

fn full_rank_inverse(a: &HermitianMatrix, tol: f64) -> Result<Option<FullRankInverse>> {
    let e = eig(a)?;
    if rank_of(&e, tol) < a.dim() || e.min_eigenvalue() <= 0.0 {
        return Ok(None);
    }
    Ok(Some(FullRankInverse {
        inv: e.rebuild(|_, l| Some(1.0 / l)),
        trace: e.eigenvalues.iter().map(|l| 1.0 / l).sum(),
        logdet: e.eigenvalues.iter().map(|l| l.ln()).sum(),
        max_inv_eig: 1.0 / e.min_eigenvalue(),
    }))
}

fn single(inst: &ProblemInstance) -> Option<&IpcConstraint> {
    match inst.constraints.as_slice() {
        [c] => Some(c),
        _ => None,
    }
}

fn dot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn finish(inst: &ProblemInstance, r: HermitianMatrix, duals: DualPoint, capacity: f64, method: Method) -> Result<Solution> {
    Solution::assemble(inst, r, duals, Some(capacity), method)
}

/// Full-rank water-filling that is also IPC-feasible:
/// `R = μ1⁻¹ I − W1⁻¹`, `μ1⁻¹ = (P_T + tr W1⁻¹)/m`.
///
/// Valid when
/// `m λ1(W1⁻¹) − tr W1⁻¹ < P_T ≤ (m / tr W2)(P_I + tr(W2 W1⁻¹)) − tr W1⁻¹`.
pub fn full_rank_tpc(inst: &ProblemInstance, tol: f64) -> Result<Option<Solution>> {
    let Some(c) = single(inst) else { return Ok(None) };
    let Some(w1i) = full_rank_inverse(&inst.w1, tol)? else { return Ok(None) };
    let m = inst.dim() as f64;
    let lower = m * w1i.max_inv_eig - w1i.trace;
    if !(inst.p_t > lower + THRESHOLD_TOL) {
        return Ok(None);
    }
    let tr_w2 = c.w2.trace();
    if tr_w2 > 0.0 {
        let upper = m / tr_w2 * (c.p_i + c.w2.trace_product(&w1i.inv)) - w1i.trace;
        if !(inst.p_t <= upper - THRESHOLD_TOL) {
            return Ok(None);
        }
    }
    let level = (inst.p_t + w1i.trace) / m;
    let r = HermitianMatrix::identity(inst.dim()).scale(level).sub(&w1i.inv);
    let cap = m * level.ln() + w1i.logdet;
    finish(inst, r, DualPoint::single(1.0 / level, 0.0), cap, Method::FullRankTpc).map(Some)
}

/// Interference-limited full-rank solution with a slack TPC:
/// `R = μ2⁻¹ W2⁻¹ − W1⁻¹`, `μ2⁻¹ = (P_I + tr(W2 W1⁻¹))/m`.
///
/// Valid when
/// `m λ1(W2 W1⁻¹) − tr(W2 W1⁻¹) < P_I ≤ m/tr(W2⁻¹) (P_T + tr W1⁻¹) − tr(W2 W1⁻¹)`.
pub fn full_rank_ipc(inst: &ProblemInstance, tol: f64) -> Result<Option<Solution>> {
    let Some(c) = single(inst) else { return Ok(None) };
    let Some(w1i) = full_rank_inverse(&inst.w1, tol)? else { return Ok(None) };
    let Some(w2i) = full_rank_inverse(&c.w2, tol)? else { return Ok(None) };
    let m = inst.dim() as f64;
    let t = c.w2.trace_product(&w1i.inv);
    let s = sqrt_psd(&w1i.inv)?;
    let l1 = eig(&c.w2.congruence(&s))?.max_eigenvalue();
    if !(c.p_i > m * l1 - t + THRESHOLD_TOL) {
        return Ok(None);
    }
    let upper = m / w2i.trace * (inst.p_t + w1i.trace) - t;
    if !(c.p_i <= upper - THRESHOLD_TOL) {
        return Ok(None);
    }
    let level = (c.p_i + t) / m;
    let r = w2i.inv.scale(level).sub(&w1i.inv);
    let cap = m * level.ln() + w1i.logdet - w2i.logdet;
    finish(inst, r, DualPoint::single(0.0, 1.0 / level), cap, Method::FullRankIpc).map(Some)
}

/// Full-rank `W1` with a rank-one interference Gram `W2 = λ2 u u⁺`.
///
/// Two regions have explicit solutions: the IPC is redundant and the
/// full-rank water-filling applies, or both constraints bind and
/// `R = μ1⁻¹ I − W1⁻¹ − α u u⁺`, `α = μ1⁻¹ − (μ1 + λ2 μ2)⁻¹`.
pub fn rank1_w2(inst: &ProblemInstance, tol: f64) -> Result<Option<Solution>> {
    let Some(c) = single(inst) else { return Ok(None) };
    let e2 = eig(&c.w2)?;
    if rank_of(&e2, tol) != 1 {
        return Ok(None);
    }
    let Some(w1i) = full_rank_inverse(&inst.w1, tol)? else { return Ok(None) };
    let m = inst.dim() as f64;
    let lam2 = e2.max_eigenvalue();
    let u = e2.vector(0);
    let a = w1i.inv.quad_form(&u);
    let p_ith = lam2 * (inst.p_t + w1i.trace) / m - lam2 * a;

    if c.p_i >= p_ith + THRESHOLD_TOL && inst.p_t > m * w1i.max_inv_eig - w1i.trace + THRESHOLD_TOL {
        let level = (inst.p_t + w1i.trace) / m;
        let r = HermitianMatrix::identity(inst.dim()).scale(level).sub(&w1i.inv);
        let cap = m * level.ln() + w1i.logdet;
        return finish(inst, r, DualPoint::single(1.0 / level, 0.0), cap, Method::Rank1W2).map(Some);
    }

    let lower = lam2 * w1i.max_inv_eig - lam2 * a;
    let pt_min = m * c.p_i / lam2 + m * a - w1i.trace;
    if inst.dim() >= 2
        && c.p_i > lower + THRESHOLD_TOL
        && c.p_i < p_ith - THRESHOLD_TOL
        && inst.p_t > pt_min + THRESHOLD_TOL
    {
        let mu1 = (m - 1.0) / (inst.p_t - c.p_i / lam2 - a + w1i.trace);
        let mu2 = 1.0 / (c.p_i + lam2 * a) - mu1 / lam2;
        if !(mu1 > 0.0 && mu2 > 0.0) {
            return Ok(None);
        }
        let alpha = 1.0 / mu1 - 1.0 / (mu1 + lam2 * mu2);
        let r = HermitianMatrix::identity(inst.dim())
            .scale(1.0 / mu1)
            .sub(&w1i.inv)
            .sub(&HermitianMatrix::outer(&u).scale(alpha));
        let e = eig(&r)?;
        if e.min_eigenvalue() < -tol * e.max_abs_eigenvalue().max(1.0) {
            return Ok(None);
        }
        return Solution::assemble(inst, r, DualPoint::single(mu1, mu2), None, Method::Rank1W2).map(Some);
    }
    Ok(None)
}

/// IPC-only solution on a full-rank `W2`, ignoring the TPC.
#[derive(Clone, Debug)]
pub struct IpcOnlySolution {
    pub covariance: HermitianMatrix,
    pub mu2: f64,
    pub capacity_nats: f64,
    /// Eigenvalues of `W2^{-1/2} W1 W2^{-1/2}`, descending.
    pub lambda_b: Vec<f64>,
    pub active_modes: usize,
}

/// Water-filling over the eigenmodes of `W2^{-1/2} W1 W2^{-1/2}` with the
/// interference budget in the role of the power budget.
pub fn ipc_only_solution(
    w1: &HermitianMatrix,
    w2: &HermitianMatrix,
    p_i: f64,
    tol: f64,
) -> Result<Option<IpcOnlySolution>> {
    if !(p_i > 0.0) {
        return Ok(None);
    }
    let e2 = eig(w2)?;
    if rank_of(&e2, tol) < w2.dim() || e2.min_eigenvalue() <= 0.0 {
        return Ok(None);
    }
    let s = e2.rebuild(|_, l| Some(1.0 / l.sqrt()));
    let eb: EigenDecomposition = eig(&w1.congruence(&s))?;
    let bmax = eb.max_eigenvalue();
    if !(bmax > 0.0) {
        return Ok(None);
    }
    let rb = eb.eigenvalues.iter().filter(|&&l| l > tol * bmax).count();
    let lb = &eb.eigenvalues[..rb];
    let mut r_plus = 1;
    for r in 1..=rb {
        let gap: f64 = lb[..r].iter().map(|&l| 1.0 / lb[r - 1] - 1.0 / l).sum();
        if p_i > gap {
            r_plus = r;
        }
    }
    let level = (p_i + lb[..r_plus].iter().map(|l| 1.0 / l).sum::<f64>()) / r_plus as f64;
    let rw = eb.rebuild(|i, l| (i < r_plus).then(|| (level - 1.0 / l).max(0.0)));
    let covariance = rw.congruence(&s);
    let capacity_nats = lb[..r_plus].iter().map(|&l| (l * level).ln()).sum();
    Ok(Some(IpcOnlySolution {
        covariance,
        mu2: 1.0 / level,
        capacity_nats,
        lambda_b: eb.eigenvalues.clone(),
        active_modes: r_plus,
    }))
}

/// IPC-only solution, returned when it also satisfies the TPC
/// (`tr R ≤ P_T`), in which case the TPC is redundant.
pub fn ipc_only(inst: &ProblemInstance, tol: f64) -> Result<Option<Solution>> {
    let Some(c) = single(inst) else { return Ok(None) };
    let Some(s) = ipc_only_solution(&inst.w1, &c.w2, c.p_i, tol)? else { return Ok(None) };
    if s.covariance.trace() > inst.p_t {
        return Ok(None);
    }
    finish(inst, s.covariance, DualPoint::single(0.0, s.mu2), s.capacity_nats, Method::IpcOnly).map(Some)
}

/// Which branch of the rank-one `W1` solution applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rank1Case {
    /// TPC redundant; beamform along `W2^† u1`.
    InterferenceLimited,
    /// IPC redundant; beamform along `u1`.
    PowerLimited,
    /// Both bind; beamform along `(I + μ W2)⁻¹ u1`.
    Joint,
}

/// Geometry of a rank-one main channel `W1 = λ1 u1 u1⁺`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rank1Geometry {
    /// `P_I / P_T`.
    pub gamma_i: f64,
    /// `u1⁺ W2^† u1 / u1⁺ (W2^†)² u1` (0 when `u1 ∈ N(W2)`).
    pub gamma_1: f64,
    /// `u1⁺ W2 u1`.
    pub gamma_2: f64,
    /// Power-loss factor: `u1⁺ R u1 = α P_T`.
    pub alpha: f64,
    pub case: Rank1Case,
}

/// Beamforming solution for a rank-one `W1`; capacity `ln(1 + λ1 α P_T)`.
pub fn rank1_w1(inst: &ProblemInstance, tol: f64) -> Result<Solution> {
    rank1_w1_detailed(inst, tol).map(|(s, _)| s)
}

pub fn rank1_geometry(inst: &ProblemInstance, tol: f64) -> Result<Rank1Geometry> {
    rank1_w1_detailed(inst, tol).map(|(_, g)| g)
}

pub fn rank1_w1_detailed(inst: &ProblemInstance, tol: f64) -> Result<(Solution, Rank1Geometry)> {
    let c = single(inst).ok_or_else(|| Error::Precondition("rank-one W1 solution needs exactly one IPC".into()))?;
    let e1 = eig(&inst.w1)?;
    if rank_of(&e1, tol) != 1 {
        return Err(Error::Precondition(format!(
            "W1 must have rank 1, has rank {}",
            rank_of(&e1, tol)
        )));
    }
    let l1 = e1.max_eigenvalue();
    let u = e1.vector(0);
    let w2p = pinv(&c.w2, tol)?;
    let pu = w2p.apply(&u);
    let a = dot(&u, &pu).re;
    let b = norm_sqr(&pu);
    let proj_u = w2p.apply(&c.w2.apply(&u));
    let in_range = u.iter().zip(&proj_u).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt() <= 1e-8;
    let gamma_1 = if b > 0.0 { a / b } else { 0.0 };
    let gamma_2 = c.w2.quad_form(&u);
    let gamma_i = c.p_i / inst.p_t;

    let grad_scale = |alpha: f64| l1 / (1.0 + l1 * alpha * inst.p_t);
    let (r, alpha, duals, case) = if in_range && a > 0.0 && gamma_i < gamma_1 {
        let r = HermitianMatrix::outer(&pu).scale(c.p_i / a);
        let alpha = gamma_i * a;
        let duals = DualPoint::single(0.0, grad_scale(alpha) * a);
        (r, alpha, duals, Rank1Case::InterferenceLimited)
    } else if gamma_i >= gamma_2 {
        let r = HermitianMatrix::outer(&u).scale(inst.p_t);
        (r, 1.0, DualPoint::single(grad_scale(1.0), 0.0), Rank1Case::PowerLimited)
    } else {
        joint_rank1(inst, c, &u, l1)?
    };
    let cap = (l1 * alpha * inst.p_t).ln_1p();
    let sol = finish(inst, r, duals, cap, Method::Rank1W1)?;
    Ok((
        sol,
        Rank1Geometry {
            gamma_i,
            gamma_1,
            gamma_2,
            alpha,
            case,
        },
    ))
}

fn joint_rank1(
    inst: &ProblemInstance,
    c: &IpcConstraint,
    u: &[Complex64],
    l1: f64,
) -> Result<(HermitianMatrix, f64, DualPoint, Rank1Case)> {
    // In the eigenbasis of W2, w(μ) = (I + μW2)⁻¹u is diagonal scaling of z = V⁺u.
    let e2 = eig(&c.w2)?;
    let d: Vec<f64> = e2.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let v = &e2.eigenvectors;
    let z: Vec<Complex64> = (0..d.len()).map(|k| dot(&e2.vector(k), u)).collect();
    let leak = |mu: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for (dk, zk) in d.iter().zip(&z) {
            let s = zk.norm_sqr() / (1.0 + mu * dk).powi(2);
            num += dk * s;
            den += s;
        }
        inst.p_t * num / den
    };
    let mut hi = 1.0;
    while leak(hi) > c.p_i {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numerical("no finite multiplier meets the interference budget".into()));
        }
    }
    let mu = bisect(|x| Ok(leak(x) - c.p_i), 0.0, hi, f64::EPSILON * hi)?.root;
    let wz: Vec<Complex64> = d.iter().zip(&z).map(|(dk, zk)| zk / (1.0 + mu * dk)).collect();
    let w: Vec<Complex64> = (0..d.len())
        .map(|i| (0..d.len()).map(|k| v[(i, k)] * wz[k]).sum())
        .collect();
    let nw = norm_sqr(&w);
    let uw = dot(u, &w).re;
    let alpha = uw * uw / nw;
    let r = HermitianMatrix::outer(&w).scale(inst.p_t / nw);
    let mu1 = l1 / (1.0 + l1 * alpha * inst.p_t) * uw;
    Ok((r, alpha, DualPoint::single(mu1, mu1 * mu), Rank1Case::Joint))
}

/// Powers of the diagonal reduction when `W1` and `W2k` share eigenvectors.
pub(crate) struct DiagonalModel {
    pub l1: Vec<f64>,
    pub l2: Vec<Vec<f64>>,
    pub p_t: f64,
    pub p_i: Vec<f64>,
    pub tol: f64,
}

impl DiagonalModel {
    fn gains(&self, d: &DualPoint) -> Vec<f64> {
        (0..self.l1.len())
            .map(|i| d.mu1 + d.mu2.iter().zip(&self.l2).map(|(m, l)| m * l[i]).sum::<f64>())
            .collect()
    }

    /// Per-mode powers `(1/g − 1/λ1)₊`; `None` when all `g` vanish.
    pub fn allocation(&self, d: &DualPoint) -> Option<Vec<f64>> {
        let g = self.gains(d);
        let gmax = g.iter().fold(0.0_f64, |a, &b| a.max(b));
        if !(gmax > 0.0) {
            return None;
        }
        Some(
            g.iter()
                .zip(&self.l1)
                .map(|(&gi, &li)| {
                    if gi > self.tol * gmax && li > gi {
                        1.0 / gi - 1.0 / li
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }

    pub fn capacity(&self, d: &DualPoint) -> f64 {
        let g = self.gains(d);
        let gmax = g.iter().fold(0.0_f64, |a, &b| a.max(b));
        g.iter()
            .zip(&self.l1)
            .filter(|(&gi, &li)| gi > self.tol * gmax && li > gi)
            .map(|(&gi, &li)| (li / gi).ln())
            .sum()
    }
}

impl DualModel for DiagonalModel {
    fn p_t(&self) -> f64 {
        self.p_t
    }

    fn p_i(&self) -> Vec<f64> {
        self.p_i.clone()
    }

    fn powers(&self, d: &DualPoint) -> Result<Option<(f64, Vec<f64>)>> {
        Ok(self.allocation(d).map(|x| {
            let tx = x.iter().sum();
            let ipc = self
                .l2
                .iter()
                .map(|l| l.iter().zip(&x).map(|(a, b)| a * b).sum())
                .collect();
            (tx, ipc)
        }))
    }

    fn diverges_at_zero(&self, d: &DualPoint, coord: Coord) -> Result<bool> {
        let mut rest = d.clone();
        let dir: Vec<f64> = match coord {
            Coord::Tpc => {
                rest.mu1 = 0.0;
                vec![1.0; self.l1.len()]
            }
            Coord::Ipc(k) => {
                rest.mu2[k] = 0.0;
                self.l2[k].clone()
            }
        };
        let g = self.gains(&rest);
        let gmax = g.iter().fold(0.0_f64, |a, &b| a.max(b));
        let dmax = dir.iter().fold(0.0_f64, |a, &b| a.max(b));
        let lmax = self.l1.iter().fold(0.0_f64, |a, &b| a.max(b));
        Ok((0..g.len()).any(|i| {
            g[i] <= self.tol * gmax && dir[i] > self.tol * dmax && self.l1[i] > self.tol * lmax
        }))
    }
}

/// Unitary `U` with `U⁺ A U` and `U⁺ B U` both diagonal, if the pair
/// commutes.
fn joint_eigenbasis(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<Option<DMatrix<Complex64>>> {
    let na = a.frobenius_norm();
    let nb = b.frobenius_norm();
    let comm = a.as_matrix() * b.as_matrix() - b.as_matrix() * a.as_matrix();
    let cn = comm.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if cn > 1e-9 * (na * nb).max(f64::MIN_POSITIVE) {
        return Ok(None);
    }
    let off_diag = |x: &HermitianMatrix| {
        let m = x.dim();
        let mut worst = 0.0_f64;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    worst = worst.max(x.get(i, j).norm());
                }
            }
        }
        worst
    };
    // Generic mixing weights; a degenerate combination is retried with the next.
    for t in [0.754_877_666_2, 1.324_717_957_2, 2.236_067_977_5, 0.414_213_562_4, 3.05] {
        let e = eig(&a.add(&b.scale(t)))?;
        let u = e.eigenvectors;
        let da = compress(&u, a)?;
        let db = compress(&u, b)?;
        if off_diag(&da) <= 1e-8 * (1.0 + na) && off_diag(&db) <= 1e-8 * (1.0 + nb) {
            return Ok(Some(u));
        }
    }
    Ok(None)
}

/// Per-mode allocation when `W1` and `W2` commute:
/// `λi* = ((μ1 + μ2 λ2i)^† − λ1i^†)₊` in their joint eigenbasis, with the
/// duals found by the IBA on the scalar mode powers.
pub fn common_eigv(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<Option<Solution>> {
    cfg.validate()?;
    let Some(c) = single(inst) else { return Ok(None) };
    if c.p_i == 0.0 {
        return Ok(None);
    }
    let Some(u) = joint_eigenbasis(&inst.w1, &c.w2)? else { return Ok(None) };
    let diag = |x: &HermitianMatrix| -> Result<Vec<f64>> {
        let d = compress(&u, x)?;
        Ok((0..d.dim()).map(|i| d.get(i, i).re.max(0.0)).collect())
    };
    let model = DiagonalModel {
        l1: diag(&inst.w1)?,
        l2: vec![diag(&c.w2)?],
        p_t: inst.p_t,
        p_i: vec![c.p_i],
        tol: cfg.rank_tol,
    };
    let bounds = dual_bounds_with_tol(inst, cfg.rank_tol)?;
    let out = run_iba(&model, &bounds, cfg, &[false])?;
    let x = model.allocation(&out.duals).ok_or(Error::DegenerateDuals)?;
    let r = HermitianMatrix::from_real_diagonal(&x)?.congruence_rect(&u)?;
    let cap = model.capacity(&out.duals);
    let mut sol = finish(inst, r, out.duals, cap, Method::CommonEigenvectors)?;
    sol.iterations = out.iterations;
    sol.residual = out.residual;
    sol.converged = out.converged;
    sol.history = out.history;
    if !sol.converged {
        return Err(Error::NotConverged(Box::new(sol)));
    }
    Ok(Some(sol))
}

/// Structural capacity facts that hold for every budget.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityClass {
    /// Capacity grows without bound in `P_T`: `N(Σ W2k) ⊄ N(W1)`.
    pub unbounded_growth: bool,
    /// Zero-budget IPCs (or a zero `W1`) block every useful direction.
    pub zero_capacity: bool,
    /// The TPC binds for every `P_T`, `P_I`.
    pub tpc_always_active: bool,
    /// Zero-forcing is free: water-filling is optimal for all budgets.
    pub zf_optimal: bool,
    pub rank_w1: usize,
    pub rank_w2: Vec<usize>,
}

pub fn classify_capacity(inst: &ProblemInstance) -> Result<CapacityClass> {
    let tol = DEFAULT_RANK_TOL;
    let rank_w1 = rank_of(&eig(&inst.w1)?, tol);
    let rank_w2 = inst
        .constraints
        .iter()
        .map(|c| Ok(rank_of(&eig(&c.w2)?, tol)))
        .collect::<Result<Vec<_>>>()?;
    let unbounded_growth = rank_w1 > 0 && !null_space_contained(&inst.combined_ipc_gram(), &inst.w1, tol)?;
    let zero_budget: Vec<&IpcConstraint> = inst.constraints.iter().filter(|c| c.p_i == 0.0).collect();
    let zero_capacity = rank_w1 == 0
        || (!zero_budget.is_empty() && {
            let g0 = zero_budget
                .iter()
                .fold(HermitianMatrix::zeros(inst.dim()), |acc, c| acc.add(&c.w2));
            null_space_contained(&g0, &inst.w1, tol)?
        });
    Ok(CapacityClass {
        unbounded_growth,
        zero_capacity,
        tpc_always_active: unbounded_growth,
        zf_optimal: check_zf_shortcut(inst, tol)?,
        rank_w1,
        rank_w2,
    })
}

/// `C ≤ min(C_WF, C_IPC)`: capacity against the single-constraint optima.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityBounds {
    pub capacity_nats: f64,
    pub c_wf_nats: f64,
    /// `+∞` when the IPC-only problem is unbounded.
    pub c_ipc_nats: f64,
}

impl CapacityBounds {
    pub fn upper_bound(&self) -> f64 {
        self.c_wf_nats.min(self.c_ipc_nats)
    }
}

/// Capacity under the interference constraints alone.
pub fn ipc_only_capacity(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<f64> {
    let tol = cfg.rank_tol;
    if inst.num_ipc() == 0 {
        return Ok(f64::INFINITY);
    }
    if rank_of(&eig(&inst.w1)?, tol) == 0 {
        return Ok(0.0);
    }
    let g = inst.combined_ipc_gram();
    if !null_space_contained(&g, &inst.w1, tol)? {
        return Ok(f64::INFINITY);
    }
    let basis = range_basis(&g, tol)?;
    let w1 = compress(&basis, &inst.w1)?;
    if rank_of(&eig(&w1)?, tol) == 0 {
        return Ok(0.0);
    }
    let cs = inst
        .constraints
        .iter()
        .map(|c| {
            Ok(IpcConstraint {
                w2: compress(&basis, &c.w2)?,
                p_i: c.p_i,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let [c] = cs.as_slice() {
        return Ok(ipc_only_solution(&w1, &c.w2, c.p_i, tol)?.map_or(0.0, |s| s.capacity_nats));
    }
    // With several IPCs, tr R ≤ Σ P_Ik / λmin(Σ W2k) on the range; twice
    // that keeps the TPC slack, so its dual is exactly zero.
    let gc = compress(&basis, &g)?;
    let lmin = eig(&gc)?.min_eigenvalue();
    let total: f64 = cs.iter().map(|c| c.p_i).sum();
    if !(total > 0.0) {
        return Ok(0.0);
    }
    let relaxed = ProblemInstance::new(w1, cs, 2.0 * total / lmin)?;
    Ok(crate::solve::solve_with(&relaxed, cfg)?.capacity_nats)
}

pub fn capacity_bounds(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<CapacityBounds> {
    let capacity_nats = crate::solve::solve_with(inst, cfg)?.capacity_nats;
    let c_wf_nats = match waterfill_with_tol(&inst.w1, inst.p_t, cfg.rank_tol) {
        Ok(w) => w.capacity_nats,
        Err(Error::ZeroChannel) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(CapacityBounds {
        capacity_nats,
        c_wf_nats,
        c_ipc_nats: ipc_only_capacity(inst, cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iba::iba_solve;
    use crate::waterfill::waterfill;

    const TOL: f64 = DEFAULT_RANK_TOL;

    fn w(rows: &[&[f64]]) -> HermitianMatrix {
        HermitianMatrix::from_real_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn diag(d: &[f64]) -> HermitianMatrix {
        HermitianMatrix::from_real_diagonal(d).unwrap()
    }

    fn ex1_w2() -> HermitianMatrix {
        w(&[&[1.0, -0.5], &[-0.5, 1.0]])
    }

    #[test]
    fn full_rank_tpc_examples() {
        let inst = ProblemInstance::single(HermitianMatrix::identity(2), HermitianMatrix::identity(2), 1.0, 10.0).unwrap();
        let s = full_rank_tpc(&inst, TOL).unwrap().unwrap();
        assert!(s.covariance.sub(&HermitianMatrix::identity(2).scale(0.5)).max_abs() < 1e-14);
        assert!((s.capacity_nats - 2.0 * 1.5f64.ln()).abs() < 1e-14);
        assert!(s.kkt.within(1e-10));

        let low = ProblemInstance::single(diag(&[1.0, 0.5]), HermitianMatrix::identity(2), 0.5, 10.0).unwrap();
        assert!(full_rank_tpc(&low, TOL).unwrap().is_none());
    }

    #[test]
    fn full_rank_ipc_examples() {
        let inst = ProblemInstance::single(HermitianMatrix::identity(2).scale(2.0), HermitianMatrix::identity(2), 10.0, 1.0).unwrap();
        let s = full_rank_ipc(&inst, TOL).unwrap().unwrap();
        assert!(s.covariance.sub(&HermitianMatrix::identity(2).scale(0.5)).max_abs() < 1e-14);
        assert!((s.capacity_nats - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert_eq!(s.duals.mu1, 0.0);
        assert!(s.kkt.within(1e-10));

        let tiny = ProblemInstance::single(diag(&[2.0, 0.1]), HermitianMatrix::identity(2), 10.0, 1e-3).unwrap();
        assert!(full_rank_ipc(&tiny, TOL).unwrap().is_none());
    }

    #[test]
    fn rank1_w2_joint_example() {
        let inst = ProblemInstance::single(HermitianMatrix::identity(2), diag(&[1.0, 0.0]), 2.0, 0.5).unwrap();
        let s = rank1_w2(&inst, TOL).unwrap().unwrap();
        assert!((s.duals.mu1 - 0.4).abs() < 1e-14);
        assert!((s.duals.mu2[0] - (1.0 / 1.5 - 0.4)).abs() < 1e-14);
        assert!(s.covariance.sub(&diag(&[0.5, 1.5])).max_abs() < 1e-14);
        assert!(s.kkt.within(1e-8), "{:?}", s.kkt);
    }

    #[test]
    fn rank1_w2_redundant_ipc_is_waterfill() {
        let inst = ProblemInstance::single(diag(&[2.0, 1.0]), diag(&[1.0, 0.0]), 2.0, 5.0).unwrap();
        let s = rank1_w2(&inst, TOL).unwrap().unwrap();
        let wf = waterfill(&inst.w1, 2.0).unwrap();
        assert!(s.covariance.sub(&wf.covariance).max_abs() < 1e-13);
        assert_eq!(s.duals.mu2[0], 0.0);
    }

    #[test]
    fn ipc_only_examples() {
        let inst = ProblemInstance::single(diag(&[1.0, 0.5]), ex1_w2(), 3.0, 1.0).unwrap();
        let s = ipc_only_solution(&inst.w1, &ex1_w2(), 1.0, TOL).unwrap().unwrap();
        let r3 = 3f64.sqrt();
        assert!((s.lambda_b[0] - (1.0 + 1.0 / r3)).abs() < 1e-12);
        assert!((s.lambda_b[1] - (1.0 - 1.0 / r3)).abs() < 1e-12);
        assert_eq!(s.active_modes, 1);
        assert!((1.0 / s.mu2 - (1.0 + 1.0 / s.lambda_b[0])).abs() < 1e-12);
        assert!((s.capacity_nats - 0.9468).abs() < 1e-4);
        let sol = ipc_only(&inst, TOL).unwrap().unwrap();
        assert!(sol.kkt.within(1e-10), "{:?}", sol.kkt);
        // tr R* ≈ 1.9107: the TPC binds below that.
        assert!((s.covariance.trace() - 1.910_683_602_5).abs() < 1e-9);
        assert!(ipc_only(&inst.with_p_t(1.9).unwrap(), TOL).unwrap().is_none());

        let iso = ProblemInstance::single(HermitianMatrix::identity(2), HermitianMatrix::identity(2), 10.0, 1.0).unwrap();
        let s = ipc_only(&iso, TOL).unwrap().unwrap();
        assert!(s.covariance.sub(&HermitianMatrix::identity(2).scale(0.5)).max_abs() < 1e-14);
        assert!((s.capacity_nats - 2.0 * 1.5f64.ln()).abs() < 1e-14);

        let singular = ProblemInstance::single(diag(&[1.0, 0.5]), diag(&[1.0, 0.0]), 3.0, 1.0).unwrap();
        assert!(ipc_only(&singular, TOL).unwrap().is_none());
    }

    #[test]
    fn rank1_w1_interference_limited() {
        let inst = ProblemInstance::single(diag(&[1.0, 0.0]), HermitianMatrix::identity(2), 1.0, 0.5).unwrap();
        let (s, g) = rank1_w1_detailed(&inst, TOL).unwrap();
        assert_eq!(g.case, Rank1Case::InterferenceLimited);
        assert!((g.gamma_1 - 1.0).abs() < 1e-14 && (g.gamma_2 - 1.0).abs() < 1e-14);
        assert!(s.covariance.sub(&diag(&[0.5, 0.0])).max_abs() < 1e-14);
        assert!((s.capacity_nats - 1.5f64.ln()).abs() < 1e-14);
        assert!(s.kkt.within(1e-10), "{:?}", s.kkt);
    }

    #[test]
    fn rank1_w1_power_limited_and_joint() {
        let w2 = w(&[&[1.0, 0.4], &[0.4, 0.6]]);
        let pl = ProblemInstance::single(diag(&[2.0, 0.0]), w2.clone(), 1.0, 1.0).unwrap();
        let (s, g) = rank1_w1_detailed(&pl, TOL).unwrap();
        assert_eq!(g.case, Rank1Case::PowerLimited);
        assert!((s.capacity_nats - 3f64.ln()).abs() < 1e-14);
        assert!(s.kkt.within(1e-10));

        let joint = ProblemInstance::single(diag(&[2.0, 0.0]), w2, 1.0, 0.7).unwrap();
        let (s, g) = rank1_w1_detailed(&joint, TOL).unwrap();
        assert_eq!(g.case, Rank1Case::Joint);
        assert!(g.alpha > 0.0 && g.alpha < 1.0);
        assert!((s.tx_power - 1.0).abs() < 1e-12);
        assert!((s.interference_powers[0] - 0.7).abs() < 1e-12);
        assert!(s.kkt.within(1e-8), "{:?}", s.kkt);
        let iba = iba_solve(&joint, &SolverConfig::default()).unwrap();
        assert!((iba.capacity_nats - s.capacity_nats).abs() < 1e-8);
        assert_eq!(numerical_rank_of(&s.covariance), 1);
    }

    fn numerical_rank_of(r: &HermitianMatrix) -> usize {
        rank_of(&eig(r).unwrap(), TOL)
    }

    #[test]
    fn rank1_w1_alpha_by_case() {
        // u1 an eigenvector of W2: γ1 = γ2, so only the two beamforming cases occur.
        let w2 = diag(&[2.0, 1.0]);
        let ipc = ProblemInstance::single(diag(&[1.0, 0.0]), w2.clone(), 1.0, 1.5).unwrap();
        let g = rank1_geometry(&ipc, TOL).unwrap();
        assert_eq!(g.case, Rank1Case::InterferenceLimited);
        assert!((g.alpha - 0.75).abs() < 1e-12);
        let pl = ProblemInstance::single(diag(&[1.0, 0.0]), w2, 1.0, 2.5).unwrap();
        let g = rank1_geometry(&pl, TOL).unwrap();
        assert_eq!(g.case, Rank1Case::PowerLimited);
        assert_eq!(g.alpha, 1.0);
        assert!(rank1_w1(&ProblemInstance::single(HermitianMatrix::identity(2), diag(&[1.0, 0.0]), 1.0, 1.0).unwrap(), TOL).is_err());
    }

    #[test]
    fn common_eigv_examples() {
        let cfg = SolverConfig::default();
        // W2 = cI behaves as a TPC at P_I / c.
        let inst = ProblemInstance::single(diag(&[1.0, 0.5]), HermitianMatrix::identity(2).scale(2.0), 3.0, 2.0).unwrap();
        let s = common_eigv(&inst, &cfg).unwrap().unwrap();
        let wf = waterfill(&inst.w1, 1.0).unwrap();
        assert!((s.capacity_nats - wf.capacity_nats).abs() < 1e-9);

        let ex3 = ProblemInstance::single(diag(&[1.0, 0.0]), diag(&[1.0, 0.0]), 2.0, 1.0).unwrap();
        let s = common_eigv(&ex3, &cfg).unwrap().unwrap();
        assert!((s.capacity_nats - 2f64.ln()).abs() < 1e-9);
        assert!(s.covariance.get(1, 1).re.abs() < 1e-12);

        let both = ProblemInstance::single(diag(&[1.0, 0.5]), diag(&[1.0, 0.0]), 2.0, 0.5).unwrap();
        let s = common_eigv(&both, &cfg).unwrap().unwrap();
        assert!((s.covariance.get(0, 0).re - 0.5).abs() < 1e-8);
        assert!((s.tx_power - 2.0).abs() < 1e-8);
        assert!(s.kkt.within(1e-7), "{:?}", s.kkt);

        assert!(common_eigv(&ProblemInstance::single(diag(&[1.0, 0.5]), ex1_w2(), 1.0, 1.0).unwrap(), &cfg)
            .unwrap()
            .is_none());
    }

    #[test]
    fn classification_examples() {
        let ex2 = ProblemInstance::single(diag(&[1.0, 0.5]), w(&[&[1.0, -1.0], &[-1.0, 1.0]]), 1.0, 0.1).unwrap();
        let c = classify_capacity(&ex2).unwrap();
        assert!(c.unbounded_growth && c.tpc_always_active && !c.zero_capacity);
        assert_eq!((c.rank_w1, c.rank_w2.clone()), (2, vec![1]));
        let ex1 = ProblemInstance::single(diag(&[1.0, 0.5]), ex1_w2(), 1.0, 1.0).unwrap();
        assert!(!classify_capacity(&ex1).unwrap().unbounded_growth);
        let zero = ProblemInstance::single(diag(&[1.0, 0.0]), diag(&[1.0, 0.0]), 1.0, 0.0).unwrap();
        assert!(classify_capacity(&zero).unwrap().zero_capacity);
    }

    #[test]
    fn capacity_bound_examples() {
        let cfg = SolverConfig::default();
        let ex1 = |p_t| ProblemInstance::single(diag(&[1.0, 0.5]), ex1_w2(), p_t, 1.0).unwrap();
        let b = capacity_bounds(&ex1(0.5), &cfg).unwrap();
        assert!((b.capacity_nats - b.c_wf_nats).abs() < 1e-12);
        let b = capacity_bounds(&ex1(3.0), &cfg).unwrap();
        assert!((b.capacity_nats - b.c_ipc_nats).abs() < 1e-12);
        let b = capacity_bounds(&ex1(1.5), &cfg).unwrap();
        assert!(b.capacity_nats < b.upper_bound() - 1e-4);
        let ex2 = ProblemInstance::single(diag(&[1.0, 0.5]), w(&[&[1.0, -1.0], &[-1.0, 1.0]]), 1.0, 0.1).unwrap();
        assert_eq!(capacity_bounds(&ex2, &cfg).unwrap().c_ipc_nats, f64::INFINITY);
    }
}
