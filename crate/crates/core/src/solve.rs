//! One-call entry point: exact shortcuts and closed forms where they apply,
//! the IBA otherwise.
//!
//! Dispatch order: zero channel / zero-capacity, zero-budget projection,
//! zero-forcing, IPC redundancy, commuting Grams, rank-one `W1`, IPC-only,
//! full-rank formulas, rank-one `W2`, IBA. Every path before the IBA is exact.

use crate::closed_form::{common_eigv, full_rank_ipc, full_rank_tpc, ipc_only, rank1_w1, rank1_w2};
use crate::error::{Error, Result};
use crate::hermitian::{eig, null_space_contained, pinv, rank_of, sqrt_psd, HermitianMatrix};
use crate::iba::{check_ipc_redundant, check_zf_shortcut, iba_solve, solve_with_zero_budgets, SolverConfig};
use crate::multiuser::solve_multiuser;
use crate::problem::{DualPoint, ProblemInstance};
use crate::solver::{Method, Solution};
use crate::waterfill::waterfill_with_tol;

pub fn solve(inst: &ProblemInstance) -> Result<Solution> {
    solve_with(inst, &SolverConfig::default())
}

pub(crate) fn waterfill_solution(inst: &ProblemInstance, tol: f64, method: Method) -> Result<Solution> {
    let wf = waterfill_with_tol(&inst.w1, inst.p_t, tol)?;
    let duals = DualPoint {
        mu1: wf.mu(),
        mu2: vec![0.0; inst.num_ipc()],
    };
    Solution::assemble(inst, wf.covariance, duals, Some(wf.capacity_nats), method)
}

/// `R = 0` with duals that certify it: zero-budget IPCs get
/// `μ = λ1(G0^{†/2} W1 G0^{†/2})`, so `μ G0 − W1 ⪰ 0`.
fn zero_capacity_solution(inst: &ProblemInstance, tol: f64) -> Result<Solution> {
    let zero: Vec<usize> = (0..inst.num_ipc())
        .filter(|&k| inst.constraints[k].p_i == 0.0)
        .collect();
    let g0 = zero
        .iter()
        .fold(HermitianMatrix::zeros(inst.dim()), |acc, &k| acc.add(&inst.constraints[k].w2));
    let mu = if zero.is_empty() {
        0.0
    } else {
        let s = sqrt_psd(&pinv(&g0, tol)?)?;
        eig(&inst.w1.congruence(&s))?.max_eigenvalue().max(0.0)
    };
    let mut mu2 = vec![0.0; inst.num_ipc()];
    for &k in &zero {
        mu2[k] = mu;
    }
    Solution::assemble(
        inst,
        HermitianMatrix::zeros(inst.dim()),
        DualPoint { mu1: 0.0, mu2 },
        Some(0.0),
        Method::ZeroCapacity,
    )
}

pub fn solve_with(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let tol = cfg.rank_tol;
    if rank_of(&eig(&inst.w1)?, tol) == 0 {
        return zero_capacity_solution(inst, tol);
    }
    if inst.num_ipc() == 0 {
        return waterfill_solution(inst, tol, Method::Waterfill);
    }
    if inst.constraints.iter().any(|c| c.p_i == 0.0) {
        let g0 = inst
            .constraints
            .iter()
            .filter(|c| c.p_i == 0.0)
            .fold(HermitianMatrix::zeros(inst.dim()), |acc, c| acc.add(&c.w2));
        if null_space_contained(&g0, &inst.w1, tol)? {
            return zero_capacity_solution(inst, tol);
        }
        return solve_with_zero_budgets(inst, cfg, solve_with);
    }
    if check_zf_shortcut(inst, tol)? {
        return waterfill_solution(inst, tol, Method::ZeroForcing);
    }
    if check_ipc_redundant(inst)?.iter().all(|&r| r) {
        return waterfill_solution(inst, tol, Method::Waterfill);
    }
    if inst.num_ipc() > 1 {
        return solve_multiuser(inst, cfg);
    }
    match common_eigv(inst, cfg) {
        Ok(Some(s)) => return Ok(s),
        Ok(None) | Err(Error::NotConverged(_)) => {}
        Err(e) => return Err(e),
    }
    if rank_of(&eig(&inst.w1)?, tol) == 1 {
        return rank1_w1(inst, tol);
    }
    for closed in [ipc_only, full_rank_tpc, full_rank_ipc, rank1_w2] {
        if let Some(s) = closed(inst, tol)? {
            return Ok(s);
        }
    }
    iba_solve(inst, cfg)
}
