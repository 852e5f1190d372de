use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NmfSolver {
    /// Hierarchical alternating least squares (column-wise coordinate descent).
    #[default]
    Hals,
    /// Lee-Seung style multiplicative updates with L1/L2 terms in the denominator.
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub k: usize,
    pub l1_w: f64,
    pub l2_w: f64,
    pub l1_h: f64,
    pub l2_h: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: NmfSolver,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            k: 30,
            l1_w: 0.0,
            l2_w: 0.0,
            l1_h: 0.0,
            l2_h: 0.0,
            tol: 1e-6,
            max_iter: 500,
            seed: 0,
            solver: NmfSolver::Hals,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub k: usize,
    /// Objective at initialization followed by one value per sweep.
    pub objective_trace: Vec<f64>,
    pub config: NmfConfig,
    pub converged: bool,
}

/// Regularized objective `½‖C−WH‖² + l1‖·‖₁ + ½ l2‖·‖²` for both factors.
pub fn nmf_objective(c: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>, cfg: &NmfConfig) -> f64 {
    let resid = c - w * h;
    0.5 * resid.norm_squared()
        + cfg.l1_w * w.sum()
        + 0.5 * cfg.l2_w * w.norm_squared()
        + cfg.l1_h * h.sum()
        + 0.5 * cfg.l2_h * h.norm_squared()
}

fn validate(c: &DMatrix<f64>, cfg: &NmfConfig) -> Result<()> {
    let (m, n) = c.shape();
    if m == 0 || n == 0 {
        return Err(Error::Empty("citation matrix has no entries".into()));
    }
    if cfg.k < 1 || cfg.k > m.min(n) {
        return Err(Error::invalid(format!(
            "k = {} outside [1, {}]",
            cfg.k,
            m.min(n)
        )));
    }
    if let Some(v) = c.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("matrix entry {v} is negative or not finite")));
    }
    for (name, v) in [("l1_w", cfg.l1_w), ("l2_w", cfg.l2_w), ("l1_h", cfg.l1_h), ("l2_h", cfg.l2_h)] {
        if !(v >= 0.0) {
            return Err(Error::invalid(format!("{name} must be non-negative")));
        }
    }
    Ok(())
}

fn init(c: &DMatrix<f64>, k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, n) = c.shape();
    let scale = (c.mean() / k as f64).sqrt();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // `random` is on [0, 1); flip it to (0, 1].
    let mut draw = |_, _| scale * (1.0 - rng.random::<f64>());
    let w = DMatrix::from_fn(m, k, &mut draw);
    let h = DMatrix::from_fn(k, n, &mut draw);
    (w, h)
}

pub fn nmf_fit(c: &DMatrix<f64>, cfg: &NmfConfig) -> Result<NmfModel> {
    validate(c, cfg)?;
    let (w, h) = init(c, cfg.k, cfg.seed);
    fit_from(c, w, h, cfg)
}

/// Runs the solver from the given starting factors.
pub(crate) fn fit_from(
    c: &DMatrix<f64>,
    mut w: DMatrix<f64>,
    mut h: DMatrix<f64>,
    cfg: &NmfConfig,
) -> Result<NmfModel> {
    validate(c, cfg)?;
    let mut trace = vec![nmf_objective(c, &w, &h, cfg)];
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        match cfg.solver {
            NmfSolver::Hals => {
                hals_update_w(c, &mut w, &h, cfg.l1_w, cfg.l2_w);
                hals_update_h(c, &w, &mut h, cfg.l1_h, cfg.l2_h);
            }
            NmfSolver::Multiplicative => {
                mu_update_w(c, &mut w, &h, cfg.l1_w, cfg.l2_w);
                mu_update_h(c, &w, &mut h, cfg.l1_h, cfg.l2_h);
            }
        }
        let obj = nmf_objective(c, &w, &h, cfg);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if prev <= f64::MIN_POSITIVE || (prev - obj) / prev < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(NmfModel {
        w,
        h,
        k: cfg.k,
        objective_trace: trace,
        config: *cfg,
        converged,
    })
}

fn hals_update_w(c: &DMatrix<f64>, w: &mut DMatrix<f64>, h: &DMatrix<f64>, l1: f64, l2: f64) {
    let a = c * h.transpose();
    let b = h * h.transpose();
    let (m, k) = w.shape();
    for j in 0..k {
        let den = b[(j, j)] + l2;
        if den <= 1e-300 {
            continue;
        }
        for i in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                if l != j {
                    s += w[(i, l)] * b[(l, j)];
                }
            }
            w[(i, j)] = ((a[(i, j)] - s - l1) / den).max(0.0);
        }
    }
}

fn hals_update_h(c: &DMatrix<f64>, w: &DMatrix<f64>, h: &mut DMatrix<f64>, l1: f64, l2: f64) {
    let a = w.transpose() * c;
    let b = w.transpose() * w;
    let (k, n) = h.shape();
    for j in 0..k {
        let den = b[(j, j)] + l2;
        if den <= 1e-300 {
            continue;
        }
        for t in 0..n {
            let mut s = 0.0;
            for l in 0..k {
                if l != j {
                    s += b[(j, l)] * h[(l, t)];
                }
            }
            h[(j, t)] = ((a[(j, t)] - s - l1) / den).max(0.0);
        }
    }
}

const MU_EPS: f64 = 1e-16;

fn mu_update_w(c: &DMatrix<f64>, w: &mut DMatrix<f64>, h: &DMatrix<f64>, l1: f64, l2: f64) {
    let num = c * h.transpose();
    let den = &*w * (h * h.transpose());
    for ((wv, n), d) in w.iter_mut().zip(num.iter()).zip(den.iter()) {
        *wv *= n / (d + l1 + l2 * *wv + MU_EPS);
    }
}

fn mu_update_h(c: &DMatrix<f64>, w: &DMatrix<f64>, h: &mut DMatrix<f64>, l1: f64, l2: f64) {
    let num = w.transpose() * c;
    let den = (w.transpose() * w) * &*h;
    for ((hv, n), d) in h.iter_mut().zip(num.iter()).zip(den.iter()) {
        *hv *= n / (d + l1 + l2 * *hv + MU_EPS);
    }
}

/// `‖C − WH‖_F / ‖C‖_F`.
pub fn reconstruction_error(c: &DMatrix<f64>, model: &NmfModel) -> Result<f64> {
    if model.w.nrows() != c.nrows() || model.h.ncols() != c.ncols() || model.w.ncols() != model.h.nrows() {
        return Err(Error::invalid(format!(
            "factors {}x{} * {}x{} do not match a {}x{} matrix",
            model.w.nrows(),
            model.w.ncols(),
            model.h.nrows(),
            model.h.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let norm = c.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("matrix has zero norm".into()));
    }
    Ok((c - &model.w * &model.h).norm() / norm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    /// Reconstruction error for each seed, in seed order.
    pub errors: Vec<f64>,
    pub best_error: f64,
    /// Whether the warm start from the previous dimension was needed to beat it.
    pub warm_started: bool,
}

/// Best-of-`n_seeds` reconstruction error for each `k`.
///
/// Each `k` also gets one fit warm-started from the best `k − 1` solution
/// padded with a zero column, so the best error cannot increase in `k`.
pub fn dimension_sweep(
    c: &DMatrix<f64>,
    ks: &[usize],
    n_seeds: usize,
    base: &NmfConfig,
) -> Result<Vec<SweepPoint>> {
    if n_seeds == 0 || ks.is_empty() {
        return Err(Error::invalid("sweep needs at least one k and one seed"));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let jobs: Vec<(usize, u64)> = ks
        .iter()
        .flat_map(|&k| (0..n_seeds as u64).map(move |s| (k, s)))
        .collect();
    let fits = par::map(&jobs, |&(k, s)| {
        let cfg = NmfConfig {
            k,
            seed: base.seed.wrapping_add(s),
            ..*base
        };
        nmf_fit(c, &cfg).and_then(|m| Ok((reconstruction_error(c, &m)?, m)))
    });
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(ks.len());
    let mut prev: Option<NmfModel> = None;
    for (i, &k) in ks.iter().enumerate() {
        let chunk = &fits[i * n_seeds..(i + 1) * n_seeds];
        let errors: Vec<f64> = chunk.iter().map(|(e, _)| *e).collect();
        let (mut best_error, mut best) = chunk
            .iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(e, m)| (*e, m.clone()))
            .unwrap();
        let mut warm_started = false;
        if let Some(p) = prev.as_ref().filter(|p| p.k < k) {
            let cfg = NmfConfig { k, ..*base };
            let (w, h) = pad_factors(p, k, base.seed);
            let warm = fit_from(c, w, h, &cfg)?;
            let e = reconstruction_error(c, &warm)?;
            if e < best_error {
                best_error = e;
                best = warm;
                warm_started = true;
            }
        }
        out.push(SweepPoint {
            k,
            errors,
            best_error,
            warm_started,
        });
        prev = Some(best);
    }
    Ok(out)
}

/// Extends factors to dimension `k` with zero W columns and random H rows,
/// leaving `WH` unchanged.
fn pad_factors(p: &NmfModel, k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, k0) = p.w.shape();
    let n = p.h.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let scale = p.h.mean().max(1e-3);
    let w = DMatrix::from_fn(m, k, |i, j| if j < k0 { p.w[(i, j)] } else { 0.0 });
    let h = DMatrix::from_fn(k, n, |i, j| {
        if i < k0 {
            p.h[(i, j)]
        } else {
            scale * (1.0 - rng.random::<f64>())
        }
    });
    (w, h)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    k: usize,
    rows: Vec<String>,
    columns: Vec<String>,
    config: NmfConfig,
    converged: bool,
    iterations: usize,
    objective_trace: Vec<f64>,
}

impl NmfModel {
    pub fn iterations(&self) -> usize {
        self.objective_trace.len() - 1
    }

    /// Writes `W` and `H` as dense CSV with labelled rows, plus a JSON sidecar.
    pub fn write(
        &self,
        row_names: &[String],
        col_names: &[String],
        w_path: &Path,
        h_path: &Path,
        sidecar: &Path,
    ) -> Result<()> {
        let dims: Vec<String> = (0..self.k).map(|j| format!("dim_{j}")).collect();
        write_dense(w_path, "judge_id", &dims, row_names, &self.w)?;
        write_dense(h_path, "dim", col_names, &dims, &self.h)?;
        let meta = Sidecar {
            k: self.k,
            rows: row_names.to_vec(),
            columns: col_names.to_vec(),
            config: self.config,
            converged: self.converged,
            iterations: self.iterations(),
            objective_trace: self.objective_trace.clone(),
        };
        let f = File::create(sidecar).map_err(|e| Error::io(sidecar, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &meta)?;
        Ok(())
    }

    /// Reads the weight matrix written by [`NmfModel::write`], returning row labels.
    pub fn read_weights(w_path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
        let mut r = csv::Reader::from_path(w_path)?;
        let k = r.headers()?.len().saturating_sub(1);
        let mut names = Vec::new();
        let mut vals = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            names.push(rec[0].to_string());
            for v in rec.iter().skip(1) {
                vals.push(v.parse::<f64>().map_err(|e| {
                    Error::Schema(format!("{}: bad value `{v}`: {e}", w_path.display()))
                })?);
            }
        }
        Ok((names.clone(), DMatrix::from_row_slice(names.len(), k, &vals)))
    }
}

fn write_dense(
    path: &Path,
    corner: &str,
    header: &[String],
    row_names: &[String],
    m: &DMatrix<f64>,
) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    write!(out, "{corner}").map_err(io)?;
    for h in header {
        write!(out, ",{h}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for (i, name) in row_names.iter().enumerate() {
        write!(out, "{name}").map_err(io)?;
        for j in 0..m.ncols() {
            write!(out, ",{}", m[(i, j)]).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(k: usize) -> NmfConfig {
        NmfConfig {
            k,
            tol: 1e-12,
            max_iter: 5000,
            ..Default::default()
        }
    }

    fn assert_monotone(trace: &[f64]) {
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "objective rose {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn identity_is_recovered() {
        let c = DMatrix::<f64>::identity(2, 2);
        let m = nmf_fit(&c, &cfg(2)).unwrap();
        assert!(reconstruction_error(&c, &m).unwrap() < 1e-6);
        assert_monotone(&m.objective_trace);
    }

    #[test]
    fn rank_one_outer_product() {
        let c = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 6.0, 8.0]);
        let m = nmf_fit(&c, &cfg(1)).unwrap();
        assert!(reconstruction_error(&c, &m).unwrap() < 1e-3);
    }

    #[test]
    fn multiplicative_solver_agrees() {
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 1.0, 0.0, 1.0, 3.0]);
        let hals = nmf_fit(&c, &cfg(3)).unwrap();
        let mu = nmf_fit(
            &c,
            &NmfConfig {
                solver: NmfSolver::Multiplicative,
                max_iter: 20000,
                ..cfg(3)
            },
        )
        .unwrap();
        assert_monotone(&mu.objective_trace);
        let eh = reconstruction_error(&c, &hals).unwrap();
        let em = reconstruction_error(&c, &mu).unwrap();
        assert!(eh < 1e-4 && em < 1e-2, "{eh} {em}");
    }

    #[test]
    fn regularization_keeps_factors_nonnegative_and_monotone() {
        let c = DMatrix::from_fn(6, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 / 4.0);
        let m = nmf_fit(
            &c,
            &NmfConfig {
                l1_w: 0.05,
                l2_w: 0.1,
                l1_h: 0.02,
                l2_h: 0.3,
                ..cfg(3)
            },
        )
        .unwrap();
        assert!(m.w.iter().chain(m.h.iter()).all(|v| *v >= 0.0));
        assert_monotone(&m.objective_trace);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let c = DMatrix::from_fn(8, 6, |i, j| ((i + 2 * j) % 4) as f64);
        let a = nmf_fit(&c, &cfg(3)).unwrap();
        let b = nmf_fit(&c, &cfg(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 1.0]);
        assert!(nmf_fit(&c, &cfg(1)).is_err());
        let c = DMatrix::<f64>::identity(2, 2);
        assert!(nmf_fit(&c, &cfg(3)).is_err());
        assert!(nmf_fit(&c, &cfg(0)).is_err());
        let zero = NmfModel {
            w: DMatrix::zeros(2, 1),
            h: DMatrix::zeros(1, 2),
            k: 1,
            objective_trace: vec![0.0],
            config: cfg(1),
            converged: true,
        };
        assert_eq!(reconstruction_error(&c, &zero).unwrap(), 1.0);
        assert!(reconstruction_error(&DMatrix::zeros(2, 2), &zero).is_err());
    }

    #[test]
    fn weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = DMatrix::from_fn(4, 3, |i, j| (i + j) as f64);
        let m = nmf_fit(&c, &cfg(2)).unwrap();
        let rows: Vec<String> = (0..4).map(|i| format!("j{i}")).collect();
        let cols: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
        let p = dir.path();
        m.write(&rows, &cols, &p.join("w.csv"), &p.join("h.csv"), &p.join("nmf.json"))
            .unwrap();
        let (names, w) = NmfModel::read_weights(&p.join("w.csv")).unwrap();
        assert_eq!(names, rows);
        assert_eq!(w, m.w);
    }
}
