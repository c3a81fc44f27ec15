//! Dual-variable search: scalar bisection, a-priori dual bounds, redundancy
//! pre-checks and the iterative bisection algorithm (IBA).
//!
//! The IBA alternates one-dimensional bisections: `μ1` is bisected on
//! `[0, μ1u]` to zero `f1 = μ1 (tr R − P_T)` with the IPC duals held fixed,
//! then each `μ2k` in ascending `k` is bisected on `[0, μ2uk]` to zero
//! `f2k = μ2k (tr(W2k R) − P_Ik)`. Both powers are non-increasing in their
//! own dual, which is what makes each bisection well posed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{eig, rank_of, EigenDecomposition, HermitianMatrix, DEFAULT_RANK_TOL};
use crate::problem::{DualPoint, IpcConstraint, ProblemInstance};
use crate::solver::{compress, dual_response, lift, DualResponse, Method, Solution};
use crate::waterfill::waterfill_with_tol;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Inner bisection accuracy on each dual.
    pub delta: f64,
    /// Outer tolerance on the combined slackness/feasibility residual.
    pub epsilon: f64,
    pub k_max: usize,
    pub rank_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: 1e-12,
            epsilon: 1e-10,
            k_max: 500,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

impl SolverConfig {
    /// `delta` defaults to `epsilon / 100`.
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            delta: epsilon / 100.0,
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Domain("delta and epsilon must be positive".into()));
        }
        if self.delta > self.epsilon {
            return Err(Error::Domain(format!(
                "delta ({}) must not exceed epsilon ({})",
                self.delta, self.epsilon
            )));
        }
        if self.k_max == 0 {
            return Err(Error::Domain("k_max must be at least 1".into()));
        }
        if !(self.rank_tol >= 0.0) {
            return Err(Error::Domain("rank_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bisection {
    pub root: f64,
    pub iterations: usize,
}

/// Bisection for a function that is `≥ 0` left of its root and `≤ 0` right
/// of it.
///
/// Stops when the bracket is no wider than `eps` or `f(x) == 0` exactly.
/// Returns the right end of the final bracket (the side where `f < 0`), so
/// the result never overshoots into the `f > 0` region.
pub fn bisect<F>(mut f: F, x_lo: f64, x_hi: f64, eps: f64) -> Result<Bisection>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(x_lo <= x_hi) {
        return Err(Error::Domain(format!("empty bracket [{x_lo}, {x_hi}]")));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain("bisection accuracy must be positive".into()));
    }
    let (mut lo, mut hi) = (x_lo, x_hi);
    let mut iterations = 0;
    while hi - lo > eps {
        let x = 0.5 * (lo + hi);
        if x <= lo || x >= hi {
            break; // bracket at floating-point resolution
        }
        iterations += 1;
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(Bisection { root: x, iterations });
        }
        if fx < 0.0 {
            hi = x;
        } else {
            lo = x;
        }
    }
    Ok(Bisection { root: hi, iterations })
}

/// `⌈log2((x_hi − x_lo) / eps)⌉`, floored at 0.
pub fn bisection_step_bound(x_lo: f64, x_hi: f64, eps: f64) -> usize {
    let r = (x_hi - x_lo) / eps;
    if r <= 1.0 {
        0
    } else {
        r.log2().ceil() as usize
    }
}

/// Box containing the optimal duals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualBounds {
    pub mu1_upper: f64,
    pub mu2_upper: Vec<f64>,
}

impl DualBounds {
    pub fn contains(&self, d: &DualPoint) -> bool {
        d.mu1 >= 0.0
            && d.mu1 <= self.mu1_upper
            && d.mu2.len() == self.mu2_upper.len()
            && d.mu2.iter().zip(&self.mu2_upper).all(|(&x, &u)| x >= 0.0 && x <= u)
    }
}

/// `μ1u = m / (P_T + 1/λ1(W1))`,
/// `μ2uk = 1 / (P_Ik / r2k + λm(W2k) / λ1(W1))` with `r2k = rank(W2k)`.
///
/// A zero `W2k` gets bound 0 (its dual never moves). A zero budget on a
/// rank-deficient `W2k` has no finite bound and is reported as `+∞`.
pub fn dual_bounds(inst: &ProblemInstance) -> Result<DualBounds> {
    dual_bounds_with_tol(inst, DEFAULT_RANK_TOL)
}

pub fn dual_bounds_with_tol(inst: &ProblemInstance, tol: f64) -> Result<DualBounds> {
    let e1 = eig(&inst.w1)?;
    if rank_of(&e1, tol) == 0 {
        return Err(Error::ZeroChannel);
    }
    let l1 = e1.max_eigenvalue();
    let m = inst.dim() as f64;
    let mu1_upper = m / (inst.p_t + 1.0 / l1);
    let mut mu2_upper = Vec::with_capacity(inst.num_ipc());
    for c in &inst.constraints {
        let e2 = eig(&c.w2)?;
        let r2 = rank_of(&e2, tol);
        if r2 == 0 {
            mu2_upper.push(0.0);
            continue;
        }
        let lm = e2.min_eigenvalue().max(0.0);
        let lm = if r2 < inst.dim() { 0.0 } else { lm };
        let denom = c.p_i / r2 as f64 + lm / l1;
        mu2_upper.push(if denom > 0.0 { 1.0 / denom } else { f64::INFINITY });
    }
    Ok(DualBounds { mu1_upper, mu2_upper })
}

/// Per-constraint IPC redundancy test against the TPC-only water-filling:
/// `tr(W2k R_WF) ≤ P_Ik + 1e-12`.
pub fn check_ipc_redundant(inst: &ProblemInstance) -> Result<Vec<bool>> {
    let wf = waterfill_with_tol(&inst.w1, inst.p_t, DEFAULT_RANK_TOL)?;
    Ok(inst
        .constraints
        .iter()
        .map(|c| c.w2.trace_product(&wf.covariance) <= c.p_i + 1e-12)
        .collect())
}

/// True when every active eigenvector `v` of every `W2k` has `‖W1 v‖ ≈ 0`,
/// i.e. `R(W2k) ⊆ N(W1)`; water-filling is then optimal for any budgets.
pub fn check_zf_shortcut(inst: &ProblemInstance, tol: f64) -> Result<bool> {
    let scale = 1.0 + inst.w1.frobenius_norm();
    for c in &inst.constraints {
        let e = eig(&c.w2)?;
        let tau = tol * e.max_abs_eigenvalue().max(1.0);
        for k in 0..e.dim() {
            if e.eigenvalues[k] <= tau {
                continue;
            }
            let v = e.vector(k);
            let m = inst.dim();
            let norm = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| inst.w1.get(i, j) * v[j])
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum::<f64>()
                .sqrt();
            if norm > tol * scale {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Operating regime of a solved instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    PowerLimited,
    InterferenceLimited,
    JointlyConstrained,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::PowerLimited => "power-limited",
            Regime::InterferenceLimited => "interference-limited",
            Regime::JointlyConstrained => "jointly-constrained",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

pub fn classify_regime(sol: &Solution, tol: f64) -> Regime {
    if sol.duals.mu2.iter().all(|&m| m <= tol) {
        Regime::PowerLimited
    } else if sol.duals.mu1 <= tol {
        Regime::InterferenceLimited
    } else {
        Regime::JointlyConstrained
    }
}

/// Which dual a coordinate bisection moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Coord {
    Tpc,
    Ipc(usize),
}

/// Powers as functions of the duals; implemented for the full matrix map
/// and for the diagonal (common-eigenvector) reduction.
pub(crate) trait DualModel {
    fn p_t(&self) -> f64;
    fn p_i(&self) -> Vec<f64>;
    /// `(tr R*(d), [tr W2k R*(d)])`. `None` when `G(d) = 0`.
    fn powers(&self, d: &DualPoint) -> Result<Option<(f64, Vec<f64>)>>;
    /// True when the power driven by `coord` diverges as that dual → 0⁺ with
    /// the other duals of `d` held fixed.
    fn diverges_at_zero(&self, d: &DualPoint, coord: Coord) -> Result<bool>;
}

pub(crate) struct IbaOutcome {
    pub duals: DualPoint,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub history: Vec<DualPoint>,
}

fn coord_power(p: &(f64, Vec<f64>), coord: Coord) -> f64 {
    match coord {
        Coord::Tpc => p.0,
        Coord::Ipc(k) => p.1[k],
    }
}

fn set_coord(d: &DualPoint, coord: Coord, x: f64) -> DualPoint {
    match coord {
        Coord::Tpc => d.with_mu1(x),
        Coord::Ipc(k) => d.with_mu2(k, x),
    }
}

fn solve_coord<M: DualModel>(model: &M, d: &DualPoint, coord: Coord, upper: f64, delta: f64) -> Result<f64> {
    let budget = match coord {
        Coord::Tpc => model.p_t(),
        Coord::Ipc(k) => model.p_i()[k],
    };
    if upper <= 0.0 {
        return Ok(0.0);
    }
    // Root at zero: the power is already within budget with this dual off.
    if !model.diverges_at_zero(d, coord)? {
        match model.powers(&set_coord(d, coord, 0.0))? {
            None => return Ok(0.0),
            Some(p) if coord_power(&p, coord) <= budget => return Ok(0.0),
            Some(_) => {}
        }
    }
    let f = |x: f64| {
        let p = model
            .powers(&set_coord(d, coord, x))?
            .ok_or(Error::DegenerateDuals)?;
        Ok(x * (coord_power(&p, coord) - budget))
    };
    let root = bisect(f, 0.0, upper, delta)?.root;
    // Powers scale like 1/mu^2, so a small root needs a relative bracket:
    // an absolute delta at mu = 1e-4 leaves the power off by ~1e8 * delta.
    if root < 1.0 {
        let fine = delta * root.max(1e-6);
        return Ok(bisect(f, (root - delta).max(0.0), root, fine)?.root);
    }
    Ok(root)
}

/// `max(|f1|, |f2k|, feasibility excess)`.
pub(crate) fn iba_residual<M: DualModel>(model: &M, d: &DualPoint) -> Result<f64> {
    let (p1, p2) = model.powers(d)?.ok_or(Error::DegenerateDuals)?;
    let mut r = (d.mu1 * (p1 - model.p_t())).abs().max(p1 - model.p_t());
    for ((&mu, &p), &b) in d.mu2.iter().zip(&p2).zip(&model.p_i()) {
        r = r.max((mu * (p - b)).abs()).max(p - b);
    }
    Ok(r.max(0.0))
}

pub(crate) fn run_iba<M: DualModel>(
    model: &M,
    bounds: &DualBounds,
    cfg: &SolverConfig,
    pinned: &[bool],
) -> Result<IbaOutcome> {
    let k = bounds.mu2_upper.len();
    let mut d = DualPoint::zeros(k);
    let mut history = Vec::new();
    let mut best: Option<(f64, DualPoint, usize)> = None;
    for it in 1..=cfg.k_max {
        d.mu1 = solve_coord(model, &d, Coord::Tpc, bounds.mu1_upper, cfg.delta)?;
        for j in 0..k {
            if pinned.get(j).copied().unwrap_or(false) {
                continue;
            }
            d.mu2[j] = solve_coord(model, &d, Coord::Ipc(j), bounds.mu2_upper[j], cfg.delta)?;
        }
        history.push(d.clone());
        let residual = iba_residual(model, &d)?;
        if best.as_ref().is_none_or(|(r, _, _)| residual < *r) {
            best = Some((residual, d.clone(), it));
        }
        if residual <= cfg.epsilon {
            return Ok(IbaOutcome {
                duals: d,
                iterations: it,
                residual,
                converged: true,
                history,
            });
        }
    }
    let (residual, duals, _) = best.expect("k_max >= 1");
    Ok(IbaOutcome {
        duals,
        iterations: cfg.k_max,
        residual,
        converged: false,
        history,
    })
}

/// The full matrix dual map.
pub(crate) struct MatrixModel<'a> {
    pub inst: &'a ProblemInstance,
    pub tol: f64,
}

/// Orthonormal basis of the (numerical) null space of `g`; all of `C^m`
/// when `g = 0`.
fn null_basis(g: &HermitianMatrix, tol: f64) -> Result<DMatrix<Complex64>> {
    let e: EigenDecomposition = eig(g)?;
    let gmax = e.max_abs_eigenvalue();
    if gmax == 0.0 {
        return Ok(DMatrix::identity(g.dim(), g.dim()));
    }
    Ok(e.columns_at_most(tol * gmax))
}

/// Range basis relative to the largest eigenvalue.
pub(crate) fn range_basis(g: &HermitianMatrix, tol: f64) -> Result<DMatrix<Complex64>> {
    let e = eig(g)?;
    let gmax = e.max_abs_eigenvalue();
    if gmax == 0.0 {
        return Ok(DMatrix::zeros(g.dim(), 0));
    }
    Ok(e.columns_above(tol * gmax))
}

impl DualModel for MatrixModel<'_> {
    fn p_t(&self) -> f64 {
        self.inst.p_t
    }

    fn p_i(&self) -> Vec<f64> {
        self.inst.constraints.iter().map(|c| c.p_i).collect()
    }

    fn powers(&self, d: &DualPoint) -> Result<Option<(f64, Vec<f64>)>> {
        match dual_response(self.inst, d, self.tol) {
            Ok(DualResponse {
                tx_power,
                interference_powers,
                ..
            }) => Ok(Some((tx_power, interference_powers))),
            Err(Error::DegenerateDuals) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn diverges_at_zero(&self, d: &DualPoint, coord: Coord) -> Result<bool> {
        let rest = self.inst.dual_gram(&set_coord(d, coord, 0.0));
        let null = null_basis(&rest, self.tol)?;
        if null.ncols() == 0 {
            return Ok(false);
        }
        let dir = match coord {
            Coord::Tpc => HermitianMatrix::identity(self.inst.dim()),
            Coord::Ipc(k) => self.inst.constraints[k].w2.clone(),
        };
        let dir_c = compress(&null, &dir)?;
        let rb = range_basis(&dir_c, self.tol)?;
        if rb.ncols() == 0 {
            return Ok(false);
        }
        let basis = &null * &rb;
        let w1c = compress(&basis, &self.inst.w1)?;
        Ok(w1c.max_abs() > self.tol * self.inst.w1.max_abs().max(f64::MIN_POSITIVE))
    }
}

/// Reduced instance, its basis, and the indices of the kept constraints.
type Projection = (ProblemInstance, DMatrix<Complex64>, Vec<usize>);

/// Projects the instance onto `N(Σ W2k)` over the zero-budget constraints.
/// Returns the reduced instance and the basis, or `None` when the feasible
/// set collapses to `R = 0`.
fn project_zero_budgets(
    inst: &ProblemInstance,
    tol: f64,
) -> Result<Option<Projection>> {
    let zero: Vec<usize> = (0..inst.num_ipc())
        .filter(|&k| inst.constraints[k].p_i == 0.0)
        .collect();
    let g = zero
        .iter()
        .fold(HermitianMatrix::zeros(inst.dim()), |acc, &k| acc.add(&inst.constraints[k].w2));
    let basis = null_basis(&g, tol)?;
    if basis.ncols() == 0 {
        return Ok(None);
    }
    let w1 = compress(&basis, &inst.w1)?;
    if rank_of(&eig(&w1)?, tol) == 0 {
        return Ok(None);
    }
    let mut keep = Vec::new();
    let mut cs = Vec::new();
    for k in 0..inst.num_ipc() {
        if !zero.contains(&k) {
            keep.push(k);
            cs.push(IpcConstraint {
                w2: compress(&basis, &inst.constraints[k].w2)?,
                p_i: inst.constraints[k].p_i,
            });
        }
    }
    Ok(Some((ProblemInstance::new(w1, cs, inst.p_t)?, basis, keep)))
}

/// Zero-budget IPCs force transmission into the common null space of their
/// Grams; the rest of the problem is solved there and lifted back.
pub(crate) fn solve_with_zero_budgets<F>(inst: &ProblemInstance, cfg: &SolverConfig, inner_solve: F) -> Result<Solution>
where
    F: Fn(&ProblemInstance, &SolverConfig) -> Result<Solution>,
{
    let k = inst.num_ipc();
    match project_zero_budgets(inst, cfg.rank_tol)? {
        None => {
            let mut sol = Solution::assemble(
                inst,
                HermitianMatrix::zeros(inst.dim()),
                DualPoint::zeros(k),
                Some(0.0),
                Method::ZeroCapacity,
            )?;
            sol.iterations = 0;
            Ok(sol)
        }
        Some((reduced, basis, keep)) => {
            let (inner, not_converged) = match inner_solve(&reduced, cfg) {
                Ok(s) => (s, false),
                Err(Error::NotConverged(s)) => (*s, true),
                Err(e) => return Err(e),
            };
            let mut mu2 = vec![0.0; k];
            for (slot, &orig) in keep.iter().enumerate() {
                mu2[orig] = inner.duals.mu2[slot];
            }
            let duals = DualPoint { mu1: inner.duals.mu1, mu2 };
            let cov = lift(&basis, &inner.covariance)?;
            let mut sol = Solution::assemble(inst, cov, duals, Some(inner.capacity_nats), Method::ZeroBudgetProjection)?;
            // Stationarity is only meaningful on the projected problem.
            sol.kkt.stationarity = inner.kkt.stationarity;
            sol.kkt.m_psd_violation = inner.kkt.m_psd_violation;
            sol.kkt.complementarity = inner.kkt.complementarity;
            sol.iterations = inner.iterations;
            sol.residual = inner.residual;
            sol.converged = inner.converged;
            if not_converged {
                return Err(Error::NotConverged(Box::new(sol)));
            }
            Ok(sol)
        }
    }
}

/// General-purpose solve by the iterative bisection algorithm.
///
/// Fails with [`Error::NotConverged`] (carrying the best iterate) when the
/// outer residual is still above `epsilon` after `k_max` iterations.
pub fn iba_solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<Solution> {
    iba_solve_pinned(inst, cfg, &vec![false; inst.num_ipc()])
}

/// IBA with the duals of `pinned` constraints held at zero.
pub(crate) fn iba_solve_pinned(inst: &ProblemInstance, cfg: &SolverConfig, pinned: &[bool]) -> Result<Solution> {
    cfg.validate()?;
    if inst.constraints.iter().any(|c| c.p_i == 0.0) {
        return solve_with_zero_budgets(inst, cfg, iba_solve);
    }
    let bounds = dual_bounds_with_tol(inst, cfg.rank_tol)?;
    let model = MatrixModel {
        inst,
        tol: cfg.rank_tol,
    };
    let out = run_iba(&model, &bounds, cfg, pinned)?;
    let resp = dual_response(inst, &out.duals, cfg.rank_tol)?;
    let mut sol = Solution::assemble(inst, resp.covariance, out.duals, Some(resp.capacity_nats), Method::Iba)?;
    sol.iterations = out.iterations;
    sol.residual = out.residual;
    sol.converged = out.converged;
    sol.history = out.history;
    if !sol.converged {
        return Err(Error::NotConverged(Box::new(sol)));
    }
    Ok(sol)
}
