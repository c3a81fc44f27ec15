//! Instance and solution documents (JSON), and P_T / P_I sweeps.
//!
//! Instance document:
//!
//! ```json
//! { "m": 2,
//!   "W1": [[1, 0], [0, [0.5, 0]]],
//!   "constraints": [ { "W2": [[1, 0.5], [0.5, 1]], "P_I": 1 } ],
//!   "P_T": 1.5 }
//! ```
//!
//! Entries are plain numbers or `[re, im]` pairs, matrices row-major.
//! `H1` may replace `W1` and `H2` may replace `W2`; raw channels are
//! converted to Grams `H⁺H`. `m` and `constraints` are optional.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::closed_form::{capacity_bounds, CapacityClass};
use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::iba::{classify_regime, SolverConfig};
use crate::problem::{DualPoint, IpcConstraint, ProblemInstance};
use crate::solve::solve_with;
use crate::solver::{KktResiduals, Solution};

fn entry(v: &Value, name: &str) -> Result<Complex64> {
    let bad = || Error::Parse(format!("{name}: entries must be numbers or [re, im] pairs"));
    match v {
        Value::Number(n) => Ok(Complex64::new(n.as_f64().ok_or_else(bad)?, 0.0)),
        Value::Array(a) if a.len() == 2 => {
            let re = a[0].as_f64().ok_or_else(bad)?;
            let im = a[1].as_f64().ok_or_else(bad)?;
            Ok(Complex64::new(re, im))
        }
        _ => Err(bad()),
    }
}

/// Row-major nested array to a (possibly rectangular) complex matrix.
fn matrix(v: &Value, name: &str) -> Result<DMatrix<Complex64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::Parse(format!("{name}: expected an array of rows")))?;
    if rows.is_empty() {
        return Err(Error::Parse(format!("{name}: empty matrix")));
    }
    let mut data = Vec::new();
    let mut ncols = None;
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| Error::Parse(format!("{name}: row {i} is not an array")))?;
        if *ncols.get_or_insert(row.len()) != row.len() || row.is_empty() {
            return Err(Error::Parse(format!("{name}: ragged or empty row {i}")));
        }
        for x in row {
            let z = entry(x, name)?;
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Parse(format!("{name}: non-finite entry")));
            }
            data.push(z);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols.unwrap_or(0), &data))
}

fn named(name: &str, e: Error) -> Error {
    match e {
        Error::InvalidMatrix { .. } | Error::Parse(_) => e,
        other => Error::InvalidMatrix {
            matrix: name.to_string(),
            reason: other.to_string(),
        },
    }
}

/// Gram from `W` (square) or `H` (raw channel) under `obj`.
fn gram_field(obj: &serde_json::Map<String, Value>, w: &str, h: &str, label: &str) -> Result<HermitianMatrix> {
    match (obj.get(w), obj.get(h)) {
        (Some(_), Some(_)) => Err(Error::Parse(format!("{label}: give either {w} or {h}, not both"))),
        (Some(v), None) => {
            let a = matrix(v, label)?;
            if a.nrows() != a.ncols() {
                return Err(Error::InvalidMatrix {
                    matrix: label.to_string(),
                    reason: format!("not square ({}x{})", a.nrows(), a.ncols()),
                });
            }
            let herm_gap = (&a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if herm_gap > 1e-9 * scale {
                return Err(Error::InvalidMatrix {
                    matrix: label.to_string(),
                    reason: format!("not Hermitian (asymmetry {herm_gap:.3e})"),
                });
            }
            HermitianMatrix::from_matrix(a).map_err(|e| named(label, e))
        }
        (None, Some(v)) => HermitianMatrix::gram(&matrix(v, label)?).map_err(|e| named(label, e)),
        (None, None) => Err(Error::Parse(format!("missing {w} (or {h})"))),
    }
}

fn number(obj: &serde_json::Map<String, Value>, key: &str, what: &str) -> Result<f64> {
    obj.get(key)
        .ok_or_else(|| Error::Parse(format!("missing {key}{what}")))?
        .as_f64()
        .ok_or_else(|| Error::Parse(format!("{key}{what} must be a number")))
}

pub fn parse_instance(text: &str) -> Result<ProblemInstance> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Parse("instance must be a JSON object".into()))?;
    let w1 = gram_field(obj, "W1", "H1", "W1")?;
    let p_t = number(obj, "P_T", "")?;
    let list = match obj.get("constraints") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(a)) => a.clone(),
        Some(_) => return Err(Error::Parse("constraints must be an array".into())),
    };
    let single = list.len() == 1;
    let mut constraints = Vec::with_capacity(list.len());
    for (k, c) in list.iter().enumerate() {
        let label = if single { "W2".to_string() } else { format!("W2[{k}]") };
        let co = c
            .as_object()
            .ok_or_else(|| Error::Parse(format!("constraint {k} must be an object")))?;
        let w2 = gram_field(co, "W2", "H2", &label)?;
        if w2.dim() != w1.dim() {
            return Err(Error::InvalidMatrix {
                matrix: label,
                reason: format!("dimension {} does not match W1 dimension {}", w2.dim(), w1.dim()),
            });
        }
        let p_i = number(co, "P_I", &format!(" (constraint {k})"))?;
        constraints.push(IpcConstraint { w2, p_i });
    }
    if let Some(m) = obj.get("m") {
        let m = m.as_u64().ok_or_else(|| Error::Parse("m must be a positive integer".into()))?;
        if m as usize != w1.dim() {
            return Err(Error::InvalidMatrix {
                matrix: "W1".into(),
                reason: format!("dimension {} does not match m = {m}", w1.dim()),
            });
        }
    }
    ProblemInstance::new(w1, constraints, p_t)
}

fn rows_of(a: &HermitianMatrix) -> Vec<Vec<[f64; 2]>> {
    a.to_rows()
        .into_iter()
        .map(|r| r.into_iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

/// Instance document for `inst`, with complex entries as pairs.
pub fn instance_to_json(inst: &ProblemInstance) -> String {
    let constraints: Vec<Value> = inst
        .constraints
        .iter()
        .map(|c| serde_json::json!({ "W2": rows_of(&c.w2), "P_I": c.p_i }))
        .collect();
    let doc = serde_json::json!({
        "m": inst.dim(),
        "W1": rows_of(&inst.w1),
        "constraints": constraints,
        "P_T": inst.p_t,
    });
    serde_json::to_string_pretty(&doc).expect("instance document serializes")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualsDoc {
    pub mu1: f64,
    pub mu2: Vec<f64>,
}

/// Serialized form of a [`Solution`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionDoc {
    /// Capacity in the unit named by `unit`.
    pub capacity: f64,
    pub unit: String,
    pub capacity_nats: f64,
    pub capacity_bits: f64,
    pub covariance: Vec<Vec<[f64; 2]>>,
    pub duals: DualsDoc,
    pub tx_power: f64,
    pub interference_powers: Vec<f64>,
    pub tpc_active: bool,
    pub ipc_active: Vec<bool>,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub method: String,
    pub converged: bool,
    pub residual: f64,
}

impl SolutionDoc {
    pub fn new(sol: &Solution, bits: bool) -> Self {
        Self {
            capacity: if bits { sol.capacity_bits() } else { sol.capacity_nats },
            unit: if bits { "bits" } else { "nats" }.to_string(),
            capacity_nats: sol.capacity_nats,
            capacity_bits: sol.capacity_bits(),
            covariance: rows_of(&sol.covariance),
            duals: DualsDoc {
                mu1: sol.duals.mu1,
                mu2: sol.duals.mu2.clone(),
            },
            tx_power: sol.tx_power,
            interference_powers: sol.interference_powers.clone(),
            tpc_active: sol.tpc_active,
            ipc_active: sol.ipc_active.clone(),
            kkt: sol.kkt.clone(),
            iterations: sol.iterations,
            method: sol.method.label().to_string(),
            converged: sol.converged,
            residual: sol.residual,
        }
    }

    pub fn covariance_matrix(&self) -> Result<HermitianMatrix> {
        let rows: Vec<Vec<Complex64>> = self
            .covariance
            .iter()
            .map(|r| r.iter().map(|z| Complex64::new(z[0], z[1])).collect())
            .collect();
        HermitianMatrix::from_rows(&rows)
    }

    pub fn dual_point(&self) -> Result<DualPoint> {
        DualPoint::new(self.duals.mu1, self.duals.mu2.clone())
    }
}

pub fn solution_to_json(sol: &Solution, bits: bool) -> String {
    serde_json::to_string_pretty(&SolutionDoc::new(sol, bits)).expect("solution document serializes")
}

pub fn parse_solution(text: &str) -> Result<SolutionDoc> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn classification_to_json(class: &CapacityClass) -> String {
    serde_json::to_string_pretty(class).expect("classification serializes")
}

/// Budget varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVar {
    PT,
    /// Every `P_Ik` set to the sweep value.
    PI,
}

/// `min + i·step` for `i = 0..` while not past `max` (with a small slack
/// so that `max` itself is hit despite rounding).
pub fn sweep_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) || !(step > 0.0) || max < min {
        return Err(Error::InvalidInstance(format!(
            "empty sweep grid: min {min}, max {max}, step {step}"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| min + i as f64 * step).collect())
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub c_nats: f64,
    pub c_wf_nats: f64,
    pub c_ipc_nats: f64,
    pub duals: DualPoint,
    pub tx_power: f64,
    pub interference_powers: Vec<f64>,
    pub iterations: usize,
    pub regime: String,
    pub converged: bool,
}

fn sweep_point(inst: &ProblemInstance, var: SweepVar, x: f64, cfg: &SolverConfig) -> Result<SweepRow> {
    let point = match var {
        SweepVar::PT => inst.with_p_t(x)?,
        SweepVar::PI => inst.with_p_i(x)?,
    };
    let sol = match solve_with(&point, cfg) {
        Ok(s) => s,
        Err(Error::NotConverged(s)) => *s,
        Err(e) => return Err(e),
    };
    let b = capacity_bounds(&point, cfg)?;
    Ok(SweepRow {
        sweep_value: x,
        c_nats: sol.capacity_nats,
        c_wf_nats: b.c_wf_nats,
        c_ipc_nats: b.c_ipc_nats,
        regime: classify_regime(&sol, cfg.epsilon).label().to_string(),
        duals: sol.duals,
        tx_power: sol.tx_power,
        interference_powers: sol.interference_powers,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// Solves every grid point (in parallel); rows come back in grid order.
pub fn sweep(inst: &ProblemInstance, var: SweepVar, grid: &[f64], cfg: &SolverConfig) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidInstance("empty sweep grid".into()));
    }
    if var == SweepVar::PI && inst.num_ipc() == 0 {
        return Err(Error::InvalidInstance("P_I sweep needs at least one constraint".into()));
    }
    grid.par_iter().map(|&x| sweep_point(inst, var, x, cfg)).collect()
}

/// `mu2`/`P2` for one IPC, `mu2_1, mu2_2, …` for several.
pub fn csv_header(num_ipc: usize) -> String {
    let mut cols: Vec<String> = ["sweep_value", "C_nats", "C_WF_nats", "C_IPC_nats", "mu1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let indexed = |base: &str| -> Vec<String> {
        if num_ipc == 1 {
            vec![base.to_string()]
        } else {
            (1..=num_ipc).map(|k| format!("{base}_{k}")).collect()
        }
    };
    cols.extend(indexed("mu2"));
    cols.push("P1".into());
    cols.extend(indexed("P2"));
    cols.push("iterations".into());
    cols.push("regime".into());
    cols.join(",")
}

pub fn csv_row(row: &SweepRow) -> String {
    let mut f: Vec<String> = vec![
        row.sweep_value.to_string(),
        row.c_nats.to_string(),
        row.c_wf_nats.to_string(),
        row.c_ipc_nats.to_string(),
        row.duals.mu1.to_string(),
    ];
    f.extend(row.duals.mu2.iter().map(|x| x.to_string()));
    f.push(row.tx_power.to_string());
    f.extend(row.interference_powers.iter().map(|x| x.to_string()));
    f.push(row.iterations.to_string());
    f.push(row.regime.clone());
    f.join(",")
}

pub fn sweep_csv(num_ipc: usize, rows: &[SweepRow]) -> String {
    let mut out = csv_header(num_ipc);
    out.push('\n');
    for r in rows {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::kkt_check;

    const EX3: &str = r#"{"m": 2, "W1": [[1, 0], [0, 0]],
        "constraints": [{"W2": [[1, 0], [0, 0]], "P_I": 1}], "P_T": 2}"#;

    #[test]
    fn parses_real_and_complex_entries() {
        let inst = parse_instance(
            r#"{"W1": [[2, [0.5, -1]], [[0.5, 1], 1]], "constraints": [], "P_T": 1}"#,
        )
        .unwrap();
        assert_eq!(inst.w1.get(0, 1), Complex64::new(0.5, -1.0));
        assert_eq!(inst.num_ipc(), 0);
        let back = parse_instance(&instance_to_json(&inst)).unwrap();
        assert!(back.w1.sub(&inst.w1).max_abs() == 0.0);
    }

    #[test]
    fn raw_channels_become_grams() {
        let inst = parse_instance(
            r#"{"H1": [[1, 2]], "constraints": [{"H2": [[0, 1], [1, 0]], "P_I": 0.5}], "P_T": 1}"#,
        )
        .unwrap();
        assert_eq!(inst.w1.get(0, 1).re, 2.0);
        assert_eq!(inst.w1.get(1, 1).re, 4.0);
        assert_eq!(inst.constraints[0].w2.get(0, 0).re, 1.0);
    }

    #[test]
    fn errors_name_the_matrix() {
        let e = parse_instance(r#"{"W1": [[1, 0], [0, -1]], "P_T": 1}"#).unwrap_err();
        assert!(e.to_string().contains("W1"), "{e}");
        let e = parse_instance(
            r#"{"W1": [[1, 0], [0, 1]], "constraints": [{"W2": [[1, 2], [0, 1]], "P_I": 1}], "P_T": 1}"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("W2") && e.to_string().contains("Hermitian"), "{e}");
        assert!(matches!(parse_instance("{"), Err(Error::Parse(_))));
        assert!(matches!(parse_instance(r#"{"W1": [[1]]}"#), Err(Error::Parse(_))));
        let e = parse_instance(r#"{"m": 3, "W1": [[1]], "P_T": 1}"#).unwrap_err();
        assert!(e.to_string().contains("m = 3"));
    }

    #[test]
    fn solution_document_round_trip() {
        let inst = parse_instance(EX3).unwrap();
        let sol = solve_with(&inst, &SolverConfig::default()).unwrap();
        let doc = parse_solution(&solution_to_json(&sol, true)).unwrap();
        assert_eq!(doc.unit, "bits");
        assert!((doc.capacity_nats - 2f64.ln()).abs() < 1e-12);
        let kkt = kkt_check(&inst, &doc.covariance_matrix().unwrap(), &doc.dual_point().unwrap()).unwrap();
        assert!((kkt.max_residual() - doc.kkt.max_residual()).abs() <= 1e-12);
    }

    #[test]
    fn grid_and_header() {
        assert_eq!(sweep_grid(0.1, 5.0, 0.01).unwrap().len(), 491);
        assert_eq!(sweep_grid(1.0, 1.0, 0.5).unwrap(), vec![1.0]);
        assert!(sweep_grid(2.0, 1.0, 0.1).is_err());
        assert!(sweep_grid(0.0, 1.0, 0.0).is_err());
        assert_eq!(
            csv_header(1),
            "sweep_value,C_nats,C_WF_nats,C_IPC_nats,mu1,mu2,P1,P2,iterations,regime"
        );
        assert_eq!(
            csv_header(2),
            "sweep_value,C_nats,C_WF_nats,C_IPC_nats,mu1,mu2_1,mu2_2,P1,P2_1,P2_2,iterations,regime"
        );
    }

    #[test]
    fn sweep_rows_in_grid_order() {
        let inst = parse_instance(EX3).unwrap();
        let grid = sweep_grid(0.5, 2.0, 0.25).unwrap();
        let rows = sweep(&inst, SweepVar::PT, &grid, &SolverConfig::default()).unwrap();
        assert_eq!(rows.len(), grid.len());
        for (r, x) in rows.iter().zip(&grid) {
            assert_eq!(r.sweep_value, *x);
            assert!(r.c_nats <= r.c_wf_nats.min(r.c_ipc_nats) + 1e-8);
        }
        assert_eq!(rows[0].regime, "power-limited");
        assert_eq!(rows.last().unwrap().regime, "interference-limited");
    }
}
