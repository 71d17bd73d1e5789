//! Dense operator-splitting (ADMM) solver for small convex QPs
//!
//! ```text
//! minimize    1/2 x'Px + q'x
//! subject to  l <= Ax <= u
//! ```
//!
//! Iterations follow the OSQP splitting with over-relaxation and adaptive
//! step size. A converged iterate is polished by solving the equality
//! system on the detected active set, which recovers a vertex-accurate
//! solution. Warm starts carry `(x, z, y)` across calls.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// out = self * x
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// out = self' * y
    pub fn tmul_vec(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: Dense,
    pub q: Vec<f64>,
    pub a: Dense,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpProblem {
    fn check(&self) -> Result<(), QpError> {
        let n = self.q.len();
        let m = self.l.len();
        if self.p.rows != n || self.p.cols != n {
            return Err(QpError::Dimension(format!("P is {}x{}, n={n}", self.p.rows, self.p.cols)));
        }
        if self.a.rows != m || self.a.cols != n || self.u.len() != m {
            return Err(QpError::Dimension(format!("A is {}x{}, m={m}, n={n}", self.a.rows, self.a.cols)));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; x.len()];
        self.p.mul_vec(x, &mut px);
        0.5 * dot(x, &px) + dot(&self.q, x)
    }

    /// Largest bound violation of `Ax`.
    pub fn primal_violation(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.l.len()];
        self.a.mul_vec(x, &mut ax);
        ax.iter()
            .zip(self.l.iter().zip(&self.u))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// `||Px + q + A'y||_inf`.
    pub fn stationarity_residual(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let mut px = vec![0.0; n];
        let mut aty = vec![0.0; n];
        self.p.mul_vec(x, &mut px);
        self.a.tmul_vec(y, &mut aty);
        (0..n).map(|i| (px[i] + self.q[i] + aty[i]).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdmmSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub check_every: usize,
    pub adapt_rho_every: usize,
    pub polish: bool,
    /// Residual level at which an early polish is attempted.
    pub polish_eps: f64,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            eps_infeasible: 1e-7,
            max_iter: 2000,
            check_every: 5,
            adapt_rho_every: 25,
            polish: true,
            polish_eps: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    /// Iteration cap reached; the iterate is returned as is.
    MaxIterations,
    PrimalInfeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub polished: bool,
    /// For infeasible problems: rows carrying the infeasibility certificate.
    pub certificate_rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

/// Lower-triangular Cholesky factor of a dense SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &Dense) -> Result<Self, QpError> {
        let n = m.rows;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(QpError::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// LU factorisation with partial pivoting of a square dense matrix.
struct Lu {
    lu: Dense,
    perm: Vec<usize>,
}

impl Lu {
    /// `None` when the matrix is numerically singular.
    fn factor(mut m: Dense) -> Option<Self> {
        let n = m.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| m.get(i, c).abs().total_cmp(&m.get(j, c).abs()))?;
            if m.get(piv, c).abs() < 1e-14 {
                return None;
            }
            if piv != c {
                for k in 0..n {
                    m.data.swap(c * n + k, piv * n + k);
                }
                perm.swap(c, piv);
            }
            let d = m.get(c, c);
            for r in c + 1..n {
                let f = m.get(r, c) / d;
                m.set(r, c, f);
                if f == 0.0 {
                    continue;
                }
                let (top, bottom) = m.data.split_at_mut(r * n);
                let pivot_row = &top[c * n..c * n + n];
                for (x, &p) in bottom[c + 1..n].iter_mut().zip(&pivot_row[c + 1..]) {
                    *x -= f * p;
                }
            }
        }
        Some(Self { lu: m, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for r in 0..n {
            let row = self.lu.row(r);
            let s: f64 = (0..r).map(|k| row[k] * x[k]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let row = self.lu.row(r);
            let s: f64 = (r + 1..n).map(|k| row[k] * x[k]).sum();
            x[r] = (x[r] - s) / row[r];
        }
        x
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdmmSolver {
    pub settings: AdmmSettings,
    warm: Option<WarmStart>,
    /// Working set of the last polished solve, tried first on the next one.
    hint: Option<Vec<usize>>,
}

impl AdmmSolver {
    pub fn new(settings: AdmmSettings) -> Self {
        Self { settings, warm: None, hint: None }
    }

    pub fn warm_start(&mut self, ws: WarmStart) {
        self.warm = Some(ws);
    }

    pub fn clear_warm_start(&mut self) {
        self.warm = None;
        self.hint = None;
    }

    /// Re-solving a nearly unchanged problem usually keeps the previous
    /// working set; a few repair steps from it settle degenerate vertices
    /// that the ADMM guess keeps flipping.
    fn from_hint(&mut self, prob: &QpProblem) -> Option<QpSolution> {
        let rows = self.hint.take()?;
        let warm = self.warm.as_ref()?;
        if rows.iter().any(|&r| r >= prob.l.len()) || warm.y.len() != prob.l.len() {
            return None;
        }
        let active: Vec<(usize, f64)> = rows
            .into_iter()
            .filter_map(|r| match warm.y[r].partial_cmp(&0.0)? {
                std::cmp::Ordering::Greater => Some((r, prob.u[r])),
                std::cmp::Ordering::Less => Some((r, prob.l[r])),
                std::cmp::Ordering::Equal if prob.l[r] == prob.u[r] => Some((r, prob.u[r])),
                std::cmp::Ordering::Equal => None,
            })
            .filter(|&(_, b)| b.is_finite())
            .collect();
        let (x, y, active) = repair(prob, independent_rows(prob, active), 4)?;
        let mut z = vec![0.0; prob.l.len()];
        prob.a.mul_vec(&x, &mut z);
        let sol = QpSolution {
            x,
            y,
            z,
            status: QpStatus::Solved,
            iterations: 0,
            polished: true,
            certificate_rows: Vec::new(),
        };
        self.warm = Some(WarmStart { x: sol.x.clone(), z: sol.z.clone(), y: sol.y.clone() });
        self.hint = Some(active.into_iter().map(|(row, _)| row).collect());
        Some(sol)
    }

    fn kkt_matrix(p: &Dense, a: &Dense, rho: &[f64], sigma: f64) -> Dense {
        let n = p.rows;
        let mut k = p.clone();
        for i in 0..n {
            k.add(i, i, sigma);
        }
        for r in 0..a.rows {
            let row = a.row(r);
            let w = rho[r];
            for i in 0..n {
                let ai = row[i];
                if ai == 0.0 {
                    continue;
                }
                let wa = w * ai;
                for j in 0..=i {
                    let v = wa * row[j];
                    if v != 0.0 {
                        k.add(i, j, v);
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                let v = k.get(i, j);
                k.set(j, i, v);
            }
        }
        k
    }

    pub fn solve(&mut self, prob: &QpProblem) -> Result<QpSolution, QpError> {
        prob.check()?;
        let st = self.settings;
        if st.polish {
            if let Some(sol) = self.from_hint(prob) {
                return Ok(sol);
            }
        }
        let n = prob.q.len();
        let m = prob.l.len();

        // row equilibration of A to unit inf-norm
        let mut scale = vec![1.0; m];
        let mut a = prob.a.clone();
        for r in 0..m {
            let nrm = norm_inf(a.row(r));
            if nrm > 0.0 {
                scale[r] = 1.0 / nrm;
                for v in &mut a.data[r * n..(r + 1) * n] {
                    *v *= scale[r];
                }
            }
        }
        let l: Vec<f64> = prob.l.iter().zip(&scale).map(|(v, s)| v * s).collect();
        let u: Vec<f64> = prob.u.iter().zip(&scale).map(|(v, s)| v * s).collect();

        let (mut x, mut z, mut y) = match self.warm.take() {
            Some(ws) if ws.x.len() == n && ws.z.len() == m && ws.y.len() == m => {
                let z = ws.z.iter().zip(&scale).map(|(v, s)| v * s).collect();
                let y = ws.y.iter().zip(&scale).map(|(v, s)| v / s).collect();
                (ws.x, z, y)
            }
            _ => (vec![0.0; n], vec![0.0; m], vec![0.0; m]),
        };
        for i in 0..m {
            z[i] = z[i].clamp(l[i], u[i]);
        }

        let mut rho_base = st.rho;
        let rho_vec = |base: f64| -> Vec<f64> {
            (0..m).map(|i| if (u[i] - l[i]).abs() < 1e-12 { 1e3 * base } else { base }).collect()
        };
        let mut rho = rho_vec(rho_base);
        let mut chol = Cholesky::factor(&Self::kkt_matrix(&prob.p, &a, &rho, st.sigma))?;

        let mut rhs = vec![0.0; n];
        let mut tmp_m = vec![0.0; m];
        let mut ax = vec![0.0; m];
        let mut px = vec![0.0; n];
        let mut aty = vec![0.0; n];
        let mut y_prev = y.clone();
        let mut status = QpStatus::MaxIterations;
        let mut certificate_rows = Vec::new();
        let mut iterations = st.max_iter;
        let mut next_polish = 0;
        let mut polish_gap = st.adapt_rho_every.max(10) / 2;

        for k in 1..=st.max_iter {
            y_prev.copy_from_slice(&y);
            // x-update
            for i in 0..m {
                tmp_m[i] = rho[i] * z[i] - y[i];
            }
            a.tmul_vec(&tmp_m, &mut rhs);
            for i in 0..n {
                rhs[i] += st.sigma * x[i] - prob.q[i];
            }
            chol.solve_in_place(&mut rhs);
            let x_tilde = &rhs;
            a.mul_vec(x_tilde, &mut ax);
            // relaxed updates
            for i in 0..n {
                x[i] = st.alpha * x_tilde[i] + (1.0 - st.alpha) * x[i];
            }
            for i in 0..m {
                let zr = st.alpha * ax[i] + (1.0 - st.alpha) * z[i];
                let z_new = (zr + y[i] / rho[i]).clamp(l[i], u[i]);
                y[i] += rho[i] * (zr - z_new);
                z[i] = z_new;
            }

            if k % st.check_every != 0 && k != st.max_iter {
                continue;
            }
            a.mul_vec(&x, &mut ax);
            prob.p.mul_vec(&x, &mut px);
            a.tmul_vec(&y, &mut aty);
            let r_prim = ax.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let r_dual = (0..n).map(|i| (px[i] + prob.q[i] + aty[i]).abs()).fold(0.0, f64::max);
            let eps_prim = st.eps_abs + st.eps_rel * norm_inf(&ax).max(norm_inf(&z));
            let eps_dual = st.eps_abs
                + st.eps_rel * norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(&prob.q));
            if r_prim <= eps_prim && r_dual <= eps_dual {
                status = QpStatus::Solved;
                iterations = k;
                break;
            }
            // once the active set has likely settled, an exact KKT solve is
            // far cheaper than grinding ADMM to full accuracy
            if st.polish && k >= next_polish && r_prim <= st.polish_eps * (1.0 + norm_inf(&z))
                && r_dual <= st.polish_eps * (1.0 + norm_inf(&prob.q))
            {
                // each failed attempt doubles the wait for the next one
                polish_gap *= 2;
                next_polish = k + polish_gap;
                let probe = QpSolution {
                    x: x.clone(),
                    y: y.iter().zip(&scale).map(|(v, s)| v * s).collect(),
                    z: z.iter().zip(&scale).map(|(v, s)| v / s).collect(),
                    status,
                    iterations: k,
                    polished: false,
                    certificate_rows: Vec::new(),
                };
                if let Some((done, rows)) = polished_solution(prob, probe) {
                    self.warm = Some(WarmStart { x: done.x.clone(), z: done.z.clone(), y: done.y.clone() });
                    self.hint = Some(rows);
                    return Ok(done);
                }
            }

            // infeasibility certificate on the dual increment
            let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
            let dy_norm = norm_inf(&dy);
            if dy_norm > 0.0 {
                let mut at_dy = vec![0.0; n];
                a.tmul_vec(&dy, &mut at_dy);
                let support: f64 = (0..m)
                    .map(|i| {
                        let up = if u[i].is_finite() { u[i] * dy[i].max(0.0) } else if dy[i] > 0.0 { f64::INFINITY } else { 0.0 };
                        let lo = if l[i].is_finite() { l[i] * dy[i].min(0.0) } else if dy[i] < 0.0 { f64::INFINITY } else { 0.0 };
                        up + lo
                    })
                    .sum();
                if norm_inf(&at_dy) <= st.eps_infeasible * dy_norm && support < -st.eps_infeasible * dy_norm {
                    status = QpStatus::PrimalInfeasible;
                    iterations = k;
                    certificate_rows = (0..m).filter(|&i| dy[i].abs() > 1e-6 * dy_norm).collect();
                    break;
                }
            }

            if st.adapt_rho_every > 0 && k % st.adapt_rho_every == 0 {
                let prim_rel = r_prim / norm_inf(&ax).max(norm_inf(&z)).max(1e-12);
                let dual_rel = r_dual / norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(&prob.q)).max(1e-12);
                let ratio = (prim_rel / dual_rel.max(1e-12)).sqrt();
                let new_base = (rho_base * ratio).clamp(1e-6, 1e6);
                if new_base > 5.0 * rho_base || new_base < 0.2 * rho_base {
                    rho_base = new_base;
                    rho = rho_vec(rho_base);
                    chol = Cholesky::factor(&Self::kkt_matrix(&prob.p, &a, &rho, st.sigma))?;
                }
            }
        }

        // unscale
        let y_out: Vec<f64> = y.iter().zip(&scale).map(|(v, s)| v * s).collect();
        let z_out: Vec<f64> = z.iter().zip(&scale).map(|(v, s)| v / s).collect();
        let mut sol = QpSolution {
            x,
            y: y_out,
            z: z_out,
            status,
            iterations,
            polished: false,
            certificate_rows,
        };
        if status != QpStatus::PrimalInfeasible && st.polish {
            if let Some((p, rows)) = polished_solution(prob, sol.clone()) {
                sol = p;
                self.hint = Some(rows);
            }
        }
        if sol.status != QpStatus::PrimalInfeasible {
            self.warm = Some(WarmStart { x: sol.x.clone(), z: sol.z.clone(), y: sol.y.clone() });
        }
        Ok(sol)
    }
}

fn polished_solution(prob: &QpProblem, sol: QpSolution) -> Option<(QpSolution, Vec<usize>)> {
    let (xp, yp, active) = polish(prob, &sol)?;
    Some((finish(prob, sol, xp, yp), active.into_iter().map(|(row, _)| row).collect()))
}

fn finish(prob: &QpProblem, mut sol: QpSolution, xp: Vec<f64>, yp: Vec<f64>) -> QpSolution {
    let mut zp = vec![0.0; prob.l.len()];
    prob.a.mul_vec(&xp, &mut zp);
    sol.x = xp;
    sol.y = yp;
    sol.z = zp;
    sol.polished = true;
    sol.status = QpStatus::Solved;
    sol
}

/// Drops active rows that are linear combinations of earlier ones, so the
/// KKT system stays nonsingular when constraints are degenerate (e.g. a
/// stopped vehicle with both its speed floor and a position limit active).
/// Dropped rows are still checked by the primal feasibility test.
fn independent_rows(prob: &QpProblem, active: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    active
        .into_iter()
        .filter(|&(row, _)| {
            let mut r = prob.a.row(row).to_vec();
            let scale = norm_inf(&r);
            if scale == 0.0 {
                return false;
            }
            for b in &basis {
                let c = dot(&r, b);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= c * bi;
                }
            }
            let nrm = dot(&r, &r).sqrt();
            if nrm <= 1e-9 * scale {
                return false;
            }
            r.iter_mut().for_each(|v| *v /= nrm);
            basis.push(r);
            true
        })
        .collect()
}

/// Active-set polish: starting from the constraints the ADMM iterate marks
/// as active, solve the equality-constrained KKT system and repair the
/// working set (drop the worst wrong-signed multiplier, else add the most
/// violated row) until the point is primal feasible and dual
/// sign-consistent, i.e. an exact KKT point.
fn polish(prob: &QpProblem, sol: &QpSolution) -> Option<(Vec<f64>, Vec<f64>, Vec<(usize, f64)>)> {
    let n = prob.q.len();
    let m = prob.l.len();
    let mut active: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        let lower = sol.z[i] - prob.l[i] < -sol.y[i];
        let upper = prob.u[i] - sol.z[i] < sol.y[i];
        if lower {
            active.push((i, prob.l[i]));
        } else if upper {
            active.push((i, prob.u[i]));
        }
    }
    repair(prob, independent_rows(prob, active), 2 * n + 10)
}

/// Active-set repair from a working set of rows held at the given bounds:
/// drops the worst wrong-signed multiplier, else adds the most violated
/// row, until the KKT point is primal and dual feasible. Returns the point,
/// the full multiplier vector and the final working set.
fn repair(prob: &QpProblem, mut active: Vec<(usize, f64)>, max_steps: usize) -> Option<(Vec<f64>, Vec<f64>, Vec<(usize, f64)>)> {
    let m = prob.l.len();
    let mut ax = vec![0.0; m];
    for _ in 0..max_steps {
        let (x, mult) = kkt_solve(prob, &active)?;
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let wrong_sign = active
            .iter()
            .zip(&mult)
            .enumerate()
            .map(|(r, (&(row, b), &yi))| {
                let lower = b == prob.l[row] && b != prob.u[row];
                let upper = b == prob.u[row] && b != prob.l[row];
                let bad = if lower { yi } else if upper { -yi } else { 0.0 };
                (r, bad)
            })
            .filter(|&(_, bad)| bad > 1e-7)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((r, _)) = wrong_sign {
            active.remove(r);
            continue;
        }
        prob.a.mul_vec(&x, &mut ax);
        let violated = (0..m)
            .filter(|i| !active.iter().any(|&(row, _)| row == *i))
            .map(|i| {
                let (below, above) = (prob.l[i] - ax[i], ax[i] - prob.u[i]);
                if below > above {
                    (i, prob.l[i], below)
                } else {
                    (i, prob.u[i], above)
                }
            })
            .filter(|&(_, _, amount)| amount > 1e-9)
            .max_by(|a, b| a.2.total_cmp(&b.2));
        match violated {
            None => {
                let mut y = vec![0.0; m];
                for (&(row, _), &yi) in active.iter().zip(&mult) {
                    y[row] = yi;
                }
                return Some((x, y, active));
            }
            Some((row, bound, _)) => {
                let before = active.len();
                active.push((row, bound));
                active = independent_rows(prob, active);
                if active.len() == before {
                    // violated yet implied by the working set: inconsistent
                    return None;
                }
            }
        }
    }
    None
}

/// Solves the KKT system with the given rows held at their bounds; returns
/// the primal point and one multiplier per row.
fn kkt_solve(prob: &QpProblem, active: &[(usize, f64)]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = prob.q.len();
    let k = active.len();
    let dim = n + k;
    let mut kkt = Dense::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            kkt.set(i, j, prob.p.get(i, j));
        }
    }
    for (r, &(row, _)) in active.iter().enumerate() {
        for j in 0..n {
            let v = prob.a.get(row, j);
            kkt.set(n + r, j, v);
            kkt.set(j, n + r, v);
        }
    }
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        rhs[i] = -prob.q[i];
    }
    for (r, &(_, b)) in active.iter().enumerate() {
        rhs[n + r] = b;
    }
    // regularised solve followed by iterative refinement on the exact system
    let delta = 1e-10;
    let mut reg = kkt.clone();
    for i in 0..n {
        reg.add(i, i, delta);
    }
    for r in 0..k {
        reg.add(n + r, n + r, -delta);
    }
    let lu = Lu::factor(reg)?;
    let mut sol_vec = lu.solve(&rhs);
    for _ in 0..3 {
        let mut res = vec![0.0; dim];
        kkt.mul_vec(&sol_vec, &mut res);
        for i in 0..dim {
            res[i] = rhs[i] - res[i];
        }
        let corr = lu.solve(&res);
        for i in 0..dim {
            sol_vec[i] += corr[i];
        }
    }
    Some((sol_vec[..n].to_vec(), sol_vec[n..].to_vec()))
}
