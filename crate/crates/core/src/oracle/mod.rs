//! Independent reference solver, used to validate the main solver.
//!
//! It shares no eigen code with the rest of the crate: every complex
//! Hermitian `A = X + iY` is handled through its real embedding
//! `[[X, −Y], [Y, X]]`, whose spectrum is that of `A` with every eigenvalue
//! doubled, and decomposed with a cyclic Jacobi solver.
//!
//! Two stages:
//! 1. a logarithmic grid over the dual box with successive zooming; every
//!    grid point yields a dual upper bound, and the most promising points
//!    yield primal candidates after scaling onto the feasible set;
//! 2. ellipsoid-method minimization of the dual function, whose
//!    subgradient is the vector of constraint slacks of the response;
//!    every iterate is again a dual bound and a primal candidate;
//! 3. pattern search over the duals, then conditional-gradient
//!    (Frank–Wolfe) ascent from the best candidate, with rank-one extreme
//!    points and a golden-section line search.

mod jacobi;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::problem::ProblemInstance;

use jacobi::{apply_fn, eigh};

pub const MAX_DIM: usize = 6;
pub const MAX_IPC: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    /// Grid resolution; the total grid size is about `grid_points²` for any
    /// number of duals.
    pub grid_points: usize,
    pub zoom_rounds: usize,
    pub refine_iters: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_points: 40,
            zoom_rounds: 8,
            refine_iters: 2000,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub capacity_nats: f64,
    pub covariance: HermitianMatrix,
    /// Smallest dual function value seen; an upper bound on the capacity.
    pub dual_bound: f64,
}

pub fn oracle_solve(inst: &ProblemInstance, grid_points: usize, refine_iters: usize) -> Result<OracleResult> {
    oracle_solve_with(
        inst,
        &OracleConfig {
            grid_points,
            refine_iters,
            ..OracleConfig::default()
        },
    )
}

fn embed(a: &HermitianMatrix) -> DMatrix<f64> {
    let m = a.dim();
    DMatrix::from_fn(2 * m, 2 * m, |i, j| {
        let z = a.get(i % m, j % m);
        match (i < m, j < m) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn unembed(a: &DMatrix<f64>) -> Result<HermitianMatrix> {
    let m = a.nrows() / 2;
    let z = DMatrix::from_fn(m, m, |i, j| {
        Complex64::new(
            0.5 * (a[(i, j)] + a[(i + m, j + m)]),
            0.5 * (a[(i + m, j)] - a[(i, j + m)]),
        )
    });
    HermitianMatrix::from_matrix(z)
}

fn half_trace(a: &DMatrix<f64>) -> f64 {
    0.5 * a.trace()
}

/// `½ tr(A B)` for symmetric `A`, `B`.
fn half_trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    0.5 * a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>()
}

struct Embedded {
    w1: DMatrix<f64>,
    q: DMatrix<f64>,
    w2: Vec<DMatrix<f64>>,
    p_t: f64,
    p_i: Vec<f64>,
    n: usize,
}

struct Response {
    r: DMatrix<f64>,
    capacity: f64,
    tx: f64,
    ipc: Vec<f64>,
}

impl Embedded {
    fn new(inst: &ProblemInstance) -> Self {
        let w1 = embed(&inst.w1);
        let (v, u) = eigh(&w1);
        let q = apply_fn(&v, &u, |l| l.max(0.0).sqrt());
        Self {
            n: w1.nrows(),
            w1,
            q,
            w2: inst.constraints.iter().map(|c| embed(&c.w2)).collect(),
            p_t: inst.p_t,
            p_i: inst.constraints.iter().map(|c| c.p_i).collect(),
        }
    }

    fn response(&self, mu: &[f64]) -> Option<Response> {
        let mut g = DMatrix::<f64>::identity(self.n, self.n) * mu[0];
        for (w, &m) in self.w2.iter().zip(&mu[1..]) {
            if m != 0.0 {
                g += w * m;
            }
        }
        let (gv, gu) = eigh(&g);
        let gmax = gv.iter().fold(0.0_f64, |a, &b| a.max(b));
        let gmin = gv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if !(gmax > 0.0) || gmin <= 1e-12 * gmax {
            return None;
        }
        let gi = apply_fn(&gv, &gu, |l| 1.0 / l.sqrt());
        let a = &gi * &self.w1 * &gi;
        let (av, au) = eigh(&a);
        let rt = apply_fn(&av, &au, |x| if x > 1.0 { 1.0 - 1.0 / x } else { 0.0 });
        let r = &gi * rt * &gi;
        let capacity = 0.5 * av.iter().filter(|&&x| x > 1.0).map(|x| x.ln()).sum::<f64>();
        Some(Response {
            tx: half_trace(&r),
            ipc: self.w2.iter().map(|w| half_trace_product(w, &r)).collect(),
            r,
            capacity,
        })
    }

    fn dual_value(&self, mu: &[f64], resp: &Response) -> f64 {
        let mut d = resp.capacity - mu[0] * (resp.tx - self.p_t);
        for ((&m, &p), &b) in mu[1..].iter().zip(&resp.ipc).zip(&self.p_i) {
            d -= m * (p - b);
        }
        d
    }

    fn capacity(&self, r: &DMatrix<f64>) -> f64 {
        let (v, _) = eigh(&(&self.q * r * &self.q));
        0.5 * v.iter().map(|l| l.max(0.0).ln_1p()).sum::<f64>()
    }

    fn gradient(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let (v, u) = eigh(&(&self.q * r * &self.q));
        let inner = apply_fn(&v, &u, |l| 1.0 / (1.0 + l.max(0.0)));
        &self.q * inner * &self.q
    }

    /// Largest multiple `s ≤ 1` of the PSD part of `r` meeting every budget.
    fn scale_feasible(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let (v, u) = eigh(r);
        let r = apply_fn(&v, &u, |l| l.max(0.0));
        let mut s = 1.0_f64;
        let tx = half_trace(&r);
        if tx > 0.0 {
            s = s.min(self.p_t / tx);
        }
        for (w, &b) in self.w2.iter().zip(&self.p_i) {
            let p = half_trace_product(w, &r);
            if p > 0.0 {
                s = s.min(b / p);
            }
        }
        r * s
    }

    /// Rank-one point of the feasible set maximizing `½ tr(grad S)`,
    /// searched over weighted combinations of the constraint matrices.
    fn lmo(&self, grad: &DMatrix<f64>, weights: &[Vec<f64>]) -> Option<(DMatrix<f64>, f64)> {
        let m = self.n / 2;
        let mut best: Option<(DMatrix<f64>, f64)> = None;
        for w in weights {
            let mut b = DMatrix::<f64>::identity(self.n, self.n) * (w[0] / self.p_t);
            for ((wk, mat), &pk) in w[1..].iter().zip(&self.w2).zip(&self.p_i) {
                if *wk > 0.0 && pk > 0.0 {
                    b += mat * (wk / pk);
                }
            }
            let (bv, bu) = eigh(&b);
            let bmax = bv.iter().fold(0.0_f64, |a, &x| a.max(x));
            if !(bmax > 0.0) || bv.iter().any(|&x| x <= 1e-12 * bmax) {
                continue;
            }
            let bi = apply_fn(&bv, &bu, |l| 1.0 / l.sqrt());
            let h = &bi * grad * &bi;
            let (hv, hu) = eigh(&h);
            let top = (0..hv.len()).max_by(|&i, &j| hv[i].total_cmp(&hv[j]))?;
            let x: DVector<f64> = hu.column(top).into_owned();
            let v = &bi * x;
            let jv = DVector::from_fn(self.n, |i, _| if i < m { -v[i + m] } else { v[i - m] });
            let s1 = &v * v.transpose() + &jv * jv.transpose();
            let mut t = self.p_t / half_trace(&s1);
            for (mat, &pk) in self.w2.iter().zip(&self.p_i) {
                let p = half_trace_product(mat, &s1);
                if p > 0.0 {
                    t = t.min(pk / p);
                }
            }
            let s = s1 * t;
            let value = half_trace_product(grad, &s);
            if best.as_ref().is_none_or(|(_, bvalue)| value > *bvalue) {
                best = Some((s, value));
            }
        }
        best
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    if hi <= 0.0 || n < 2 {
        return v;
    }
    let k = n - 1;
    if k == 1 || lo >= hi {
        v.push(hi);
        return v;
    }
    let ratio = (hi / lo).ln() / (k - 1) as f64;
    v.extend((0..k).map(|i| lo * (ratio * i as f64).exp()));
    v
}

/// Own computation of the a-priori dual box.
fn dual_box(inst: &ProblemInstance, e: &Embedded) -> Vec<f64> {
    let (v1, _) = eigh(&e.w1);
    let l1 = v1.iter().fold(0.0_f64, |a, &b| a.max(b));
    let m = inst.dim() as f64;
    let mut out = vec![m / (inst.p_t + 1.0 / l1)];
    for (w, &pk) in e.w2.iter().zip(&e.p_i) {
        let (v, _) = eigh(w);
        let vmax = v.iter().fold(0.0_f64, |a, &b| a.max(b));
        if vmax <= 0.0 {
            out.push(0.0);
            continue;
        }
        let pos: Vec<f64> = v.iter().copied().filter(|&x| x > 1e-9 * vmax).collect();
        let rank = pos.len() as f64 / 2.0;
        let lmin = if pos.len() == v.len() { pos.iter().fold(f64::INFINITY, |a, &b| a.min(b)) } else { 0.0 };
        let denom = pk / rank + lmin / l1;
        let fallback = 10.0 * l1 / pos.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        out.push(if denom > 0.0 { 1.0 / denom } else { fallback });
    }
    out
}

fn simplex_weights(k: usize, rng: &mut ChaCha8Rng, random: usize) -> Vec<Vec<f64>> {
    let dims = k + 1;
    let mut out = Vec::new();
    let steps = match dims {
        1 => 1,
        2 => 16,
        3 => 6,
        _ => 4,
    };
    fn rec(prefix: &mut Vec<usize>, left: usize, dims: usize, steps: usize, out: &mut Vec<Vec<f64>>) {
        if prefix.len() + 1 == dims {
            prefix.push(left);
            out.push(prefix.iter().map(|&x| x as f64 / steps as f64).collect());
            prefix.pop();
            return;
        }
        for i in 0..=left {
            prefix.push(i);
            rec(prefix, left - i, dims, steps, out);
            prefix.pop();
        }
    }
    rec(&mut Vec::new(), steps, dims, steps, &mut out);
    if dims > 1 {
        for _ in 0..random {
            let raw: Vec<f64> = (0..dims).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
            let s: f64 = raw.iter().sum();
            out.push(raw.into_iter().map(|x| x / s).collect());
        }
    }
    out
}

/// Feasible candidate generated by the duals `mu`, and its capacity.
fn primal_at(e: &Embedded, mu: &[f64]) -> Option<(DMatrix<f64>, f64)> {
    let resp = e.response(mu)?;
    let r = e.scale_feasible(&resp.r);
    let c = e.capacity(&r);
    Some((r, c))
}

/// Scaled primal candidate, its capacity, and the duals it came from.
type Candidate = (DMatrix<f64>, f64, Vec<f64>);

/// Ellipsoid method on the dual function over `μ ≥ 0`, starting from the
/// ball around the box `[0, upper]`. Returns the iterates' best dual value
/// and best scaled primal candidate with its duals.
fn ellipsoid(e: &Embedded, upper: &[f64], iters: usize) -> (f64, Option<Candidate>) {
    let n = upper.len();
    let mut x: Vec<f64> = upper.iter().map(|u| 0.5 * u).collect();
    let mut p = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        p[(i, i)] = (0.5 * upper[i] * (n as f64).sqrt()).powi(2).max(1e-300);
    }
    let scale = upper.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut bound = f64::INFINITY;
    let mut best: Option<(DMatrix<f64>, f64, Vec<f64>)> = None;
    let mut lo = 0.0;
    let mut hi = upper[0];
    for _ in 0..iters {
        // subgradient of the dual, or a cut back into the orthant
        let g: Vec<f64> = if let Some(i) = x.iter().position(|&v| v < 0.0) {
            (0..n).map(|j| if j == i { -1.0 } else { 0.0 }).collect()
        } else if let Some(resp) = e.response(&x) {
            bound = bound.min(e.dual_value(&x, &resp));
            let cand = e.scale_feasible(&resp.r);
            let c = e.capacity(&cand);
            if best.as_ref().is_none_or(|b| c > b.1) {
                best = Some((cand, c, x.clone()));
            }
            let mut g = vec![e.p_t - resp.tx];
            g.extend(e.p_i.iter().zip(&resp.ipc).map(|(b, q)| b - q));
            g
        } else {
            // G singular: move up along the total power dual
            (0..n).map(|j| if j == 0 { -1.0 } else { 0.0 }).collect()
        };
        if n == 1 {
            if g[0] > 0.0 {
                hi = x[0];
            } else if g[0] < 0.0 {
                lo = x[0];
            } else {
                break;
            }
            x[0] = 0.5 * (lo + hi);
            if hi - lo <= 1e-15 * scale {
                break;
            }
            continue;
        }
        let pg = &p * DVector::from_vec(g.clone());
        let gpg: f64 = g.iter().zip(pg.iter()).map(|(a, b)| a * b).sum();
        if !(gpg > 0.0) {
            break;
        }
        let b = pg / gpg.sqrt();
        let nf = n as f64;
        for i in 0..n {
            x[i] -= b[i] / (nf + 1.0);
        }
        p = (p - &b * b.transpose() * (2.0 / (nf + 1.0))) * (nf * nf / (nf * nf - 1.0));
        p = (&p + p.transpose()) * 0.5;
        if (0..n).all(|i| p[(i, i)].sqrt() <= 1e-14 * scale) {
            break;
        }
    }
    (bound, best)
}

/// Hooke–Jeeves search over the duals, maximizing the capacity of the
/// scaled candidate. Multiplicative steps; a zero coordinate probes a small
/// positive value instead.
fn pattern_search(e: &Embedded, mut mu: Vec<f64>, max_evals: usize) -> Option<(DMatrix<f64>, f64)> {
    let (mut r, mut c) = primal_at(e, &mu)?;
    let floor: Vec<f64> = mu.iter().map(|&x| if x > 0.0 { x * 1e-6 } else { 1e-9 }).collect();
    let mut h = 0.5_f64;
    let mut evals = 0;
    while h > 1e-12 && evals < max_evals {
        let mut improved = false;
        for d in 0..mu.len() {
            let trials = if mu[d] > 0.0 {
                vec![mu[d] * (1.0 + h), mu[d] / (1.0 + h)]
            } else {
                vec![floor[d] * (1.0 + h)]
            };
            for x in trials {
                let mut cand = mu.clone();
                cand[d] = x;
                evals += 1;
                if let Some((rr, cc)) = primal_at(e, &cand) {
                    if cc > c {
                        mu = cand;
                        r = rr;
                        c = cc;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    Some((r, c))
}

pub fn oracle_solve_with(inst: &ProblemInstance, cfg: &OracleConfig) -> Result<OracleResult> {
    if inst.dim() > MAX_DIM || inst.num_ipc() > MAX_IPC {
        return Err(Error::Refused(format!(
            "oracle is limited to m <= {MAX_DIM} and at most {MAX_IPC} IPCs (got m = {}, K = {})",
            inst.dim(),
            inst.num_ipc()
        )));
    }
    let e = Embedded::new(inst);
    let n = e.n;
    if e.w1.iter().all(|&x| x == 0.0) {
        return Ok(OracleResult {
            capacity_nats: 0.0,
            covariance: HermitianMatrix::zeros(inst.dim()),
            dual_bound: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = inst.num_ipc() + 1;
    let per_axis = ((cfg.grid_points.max(2) as f64).powf(2.0 / dims as f64).round() as usize).clamp(4, 200);
    let upper = dual_box(inst, &e);
    let mut ranges: Vec<(f64, f64)> = upper.iter().map(|&u| (u * 1e-7, u)).collect();

    let mut best_r = DMatrix::<f64>::zeros(n, n);
    let mut best_c = 0.0_f64;
    let mut best_mu: Option<Vec<f64>> = None;
    let mut dual_bound = f64::INFINITY;

    for _ in 0..cfg.zoom_rounds.max(1) {
        let axes: Vec<Vec<f64>> = ranges.iter().map(|&(lo, hi)| axis(lo, hi, per_axis)).collect();
        let mut idx = vec![0usize; dims];
        let mut scored: Vec<(f64, Vec<usize>, DMatrix<f64>)> = Vec::new();
        loop {
            let mu: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
            if let Some(resp) = e.response(&mu) {
                let d = e.dual_value(&mu, &resp);
                dual_bound = dual_bound.min(d);
                scored.push((d, idx.clone(), resp.r));
                // keep the list short: only the best few matter
                if scored.len() > 64 {
                    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
                    scored.truncate(8);
                }
            }
            let mut d = 0;
            loop {
                if d == dims {
                    break;
                }
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        if scored.is_empty() {
            break;
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, i, r) in scored.iter().take(4) {
            let cand = e.scale_feasible(r);
            let c = e.capacity(&cand);
            if c > best_c {
                best_c = c;
                best_r = cand;
                best_mu = Some(i.iter().zip(&axes).map(|(&j, a)| a[j]).collect());
            }
        }
        let best_idx = &scored[0].1;
        for d in 0..dims {
            let a = &axes[d];
            if a.len() < 2 {
                continue;
            }
            let i = best_idx[d];
            let rho = if a.len() >= 3 { a[2] / a[1] } else { 2.0 };
            ranges[d] = if i == 0 {
                (a[1] * 1e-4, a[1])
            } else {
                let left = if i >= 2 { a[i - 1] } else { a[1] / rho };
                let right = if i + 1 < a.len() { a[i + 1] } else { a[i] * rho };
                (left, right)
            };
        }
    }

    let (eb, ebest) = ellipsoid(&e, &upper, 60 * dims * (dims + 1));
    dual_bound = dual_bound.min(eb);
    if let Some((r, c, mu)) = ebest {
        if c > best_c {
            best_c = c;
            best_r = r;
            best_mu = Some(mu);
        }
    }

    if let Some(mu) = best_mu {
        if let Some((r, c)) = pattern_search(&e, mu, cfg.refine_iters.max(50)) {
            if c > best_c {
                best_c = c;
                best_r = r;
            }
        }
    }

    // Conditional-gradient refinement.
    let weights = simplex_weights(inst.num_ipc(), &mut rng, 6);
    let mut r = best_r;
    let mut c = best_c;
    for _ in 0..cfg.refine_iters {
        let grad = e.gradient(&r);
        let Some((s, value)) = e.lmo(&grad, &weights) else { break };
        let gap = value - half_trace_product(&grad, &r);
        if gap <= 1e-13 {
            break;
        }
        let dir = &s - &r;
        let f = |g: f64| e.capacity(&(&r + &dir * g));
        let (mut a, mut b) = (0.0_f64, 1.0_f64);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..40 {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = f(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = f(x1);
            }
            if b - a < 1e-12 {
                break;
            }
        }
        let g = 0.5 * (a + b);
        let cg = f(g);
        if cg <= c {
            break;
        }
        r = &r + &dir * g;
        c = cg;
    }
    Ok(OracleResult {
        capacity_nats: c,
        covariance: unembed(&r)?,
        dual_bound,
    })
}
