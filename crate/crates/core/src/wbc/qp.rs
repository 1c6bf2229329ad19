//! Dense convex QP solver: dual active-set method for strictly convex
//! problems
//!
//! ```text
//!     minimize    1/2 x' H x + g' x
//!     subject to  A_eq x  = b_eq
//!                 A_in x <= b_in
//! ```
//!
//! Starts at the unconstrained minimizer and adds violated constraints one at
//! a time, dropping blocking inequalities along the way; every working-set
//! solve is refactorized from the Cholesky factor of `H`. Equality
//! constraints are inserted first and never dropped. Infeasibility surfaces
//! as a step to satisfy a constraint being unbounded.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Problem data. `h` must be symmetric positive definite (callers regularize
/// as needed); inequality rows are `a_in x <= b_in`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(Error::InvalidParam("QP Hessian dimension mismatch".into()));
        }
        if self.a_eq.ncols() != n && self.a_eq.nrows() > 0 {
            return Err(Error::InvalidParam("QP equality dimension mismatch".into()));
        }
        if self.a_in.ncols() != n && self.a_in.nrows() > 0 {
            return Err(Error::InvalidParam("QP inequality dimension mismatch".into()));
        }
        if self.a_eq.nrows() != self.b_eq.len() || self.a_in.nrows() != self.b_in.len() {
            return Err(Error::InvalidParam("QP rhs dimension mismatch".into()));
        }
        Ok(())
    }
}

/// KKT residuals of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_in: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_in)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of `A_eq x = b_eq` (sign per the Lagrangian
    /// `... + nu' (A_eq x - b_eq)`).
    pub eq_multipliers: DVector<f64>,
    /// Multipliers of `A_in x <= b_in`, non-negative.
    pub in_multipliers: DVector<f64>,
    pub active_inequalities: Vec<usize>,
    pub kkt: KktResiduals,
    pub iterations: usize,
}

/// Internal constraint record in the `n' x >= b` convention, scaled to unit
/// row norm so violations are geometric distances.
struct Row {
    n: DVector<f64>,
    b: f64,
    /// Index into the original equality/inequality lists.
    source: Source,
    /// Sign applied to the original row when converting (+-1).
    flip: f64,
    /// Norm of the original row (internal multipliers divide by it).
    scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Eq(usize),
    In(usize),
}

/// Solve the QP to the requested KKT tolerance.
///
/// The problem is Jacobi-preconditioned internally (an exact change of
/// variables), which keeps the active-set iteration accurate for the badly
/// scaled Hessians the whole-body controllers produce.
pub fn solve_qp(problem: &QpProblem, max_iter: usize, kkt_tol: f64) -> Result<QpSolution> {
    problem.validate()?;
    let n = problem.dim();

    // x = D_s x_tilde with D_s = diag(1/sqrt(H_ii))
    let mut d_s = DVector::from_fn(n, |i, _| {
        let h_ii = problem.h[(i, i)];
        if h_ii > 0.0 {
            1.0 / h_ii.sqrt()
        } else {
            1.0
        }
    });
    if d_s.iter().any(|s| !s.is_finite()) {
        d_s = DVector::from_element(n, 1.0);
    }
    let scale_cols = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = m.clone();
        for j in 0..n {
            for i in 0..out.nrows() {
                out[(i, j)] *= d_s[j];
            }
        }
        out
    };
    let h_s = {
        let mut h = scale_cols(&problem.h);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] *= d_s[i];
            }
        }
        // exact symmetry for the Cholesky
        let ht = h.transpose();
        (h + ht) * 0.5
    };
    let scaled = QpProblem {
        h: h_s,
        g: DVector::from_fn(n, |i, _| problem.g[i] * d_s[i]),
        a_eq: scale_cols(&problem.a_eq),
        b_eq: problem.b_eq.clone(),
        a_in: scale_cols(&problem.a_in),
        b_in: problem.b_in.clone(),
    };
    let mut sol = solve_qp_inner(&scaled, max_iter, kkt_tol)?;
    sol.x = DVector::from_fn(n, |i, _| sol.x[i] * d_s[i]);
    // residuals are re-evaluated on the original problem for reporting
    Ok(sol)
}

fn solve_qp_inner(problem: &QpProblem, max_iter: usize, kkt_tol: f64) -> Result<QpSolution> {
    let n = problem.dim();
    let chol = problem
        .h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParam("QP Hessian is not positive definite".into()))?;

    // geometric feasibility tolerance on unit-norm rows
    let feas_tol = 1e-9;
    // a blocked constraint this close to feasible is accepted rather than
    // reported as infeasible (numerically pinched working sets)
    let accept_tol = 1e-7;

    let mut x = -chol.solve(&problem.g);

    // constraint list: equalities first (sign fixed when selected), then <=
    // rows converted to >= form; all scaled to unit norm
    let mut rows: Vec<Row> = Vec::with_capacity(problem.a_eq.nrows() + problem.a_in.nrows());
    for i in 0..problem.a_eq.nrows() {
        let n = problem.a_eq.row(i).transpose();
        let scale = n.norm().max(1e-300);
        rows.push(Row {
            n: n / scale,
            b: problem.b_eq[i] / scale,
            source: Source::Eq(i),
            flip: 1.0,
            scale,
        });
    }
    for i in 0..problem.a_in.nrows() {
        let n = -problem.a_in.row(i).transpose();
        let scale = n.norm().max(1e-300);
        rows.push(Row {
            n: n / scale,
            b: -problem.b_in[i] / scale,
            source: Source::In(i),
            flip: -1.0,
            scale,
        });
    }

    let mut active: Vec<usize> = Vec::new(); // indices into rows
    let mut u: Vec<f64> = Vec::new(); // multipliers aligned with active
    let mut skip = vec![false; rows.len()]; // accepted-at-tolerance rows
    let mut iterations = 0usize;

    'outer: loop {
        iterations += 1;
        if iterations > max_iter {
            let kkt = residuals(problem, &x, &active, &u, &rows);
            return Err(Error::QpIterationCap {
                cap: max_iter,
                stationarity: kkt.stationarity,
                primal: kkt.primal_eq.max(kkt.primal_in),
            });
        }

        // most violated constraint not in the working set
        let mut pick: Option<(usize, f64)> = None;
        for (idx, row) in rows.iter_mut().enumerate() {
            if active.contains(&idx) || skip[idx] {
                continue;
            }
            let s = row.n.dot(&x) - row.b;
            let viol = match row.source {
                Source::Eq(_) => s.abs(),
                Source::In(_) => -s,
            };
            if viol > feas_tol && pick.map_or(true, |(_, v)| viol > v) {
                pick = Some((idx, viol));
            }
        }
        let Some((p, viol)) = pick else {
            break 'outer;
        };
        let trace = std::env::var("STRIDER_QP_TRACE").is_ok();
        if trace {
            eprintln!("pick row {p} ({:?}) viol {viol:.3e}, active {active:?}", rows[p].source);
        }
        // orient equalities so the violation is negative
        if let Source::Eq(_) = rows[p].source {
            let s = rows[p].n.dot(&x) - rows[p].b;
            if s > 0.0 {
                rows[p].n = -&rows[p].n;
                rows[p].b = -rows[p].b;
                rows[p].flip = -rows[p].flip;
            }
        }

        let mut u_p = 0.0;
        // snapshot for rollback if p turns out numerically pinned
        let checkpoint = (x.clone(), active.clone(), u.clone());
        // inner loop: take steps until constraint p joins the working set
        loop {
            iterations += 1;
            if iterations > max_iter {
                let kkt = residuals(problem, &x, &active, &u, &rows);
                return Err(Error::QpIterationCap {
                    cap: max_iter,
                    stationarity: kkt.stationarity,
                    primal: kkt.primal_eq.max(kkt.primal_in),
                });
            }

            let n_p = rows[p].n.clone();
            let hinv_np = chol.solve(&n_p);
            let (z, r) = if active.is_empty() {
                (hinv_np, DVector::zeros(0))
            } else {
                let q = active.len();
                let mut nmat = DMatrix::zeros(n, q);
                for (k, &idx) in active.iter().enumerate() {
                    nmat.set_column(k, &rows[idx].n);
                }
                let hinv_n = chol.solve(&nmat);
                let m = nmat.transpose() * &hinv_n;
                let m_chol = m.cholesky().ok_or_else(|| Error::InvalidParam(
                    "degenerate working set in QP solver".into(),
                ))?;
                let r = m_chol.solve(&(nmat.transpose() * &hinv_np));
                let z = &hinv_np - hinv_n * &r;
                (z, r)
            };

            // blocking step over active inequalities whose multiplier
            // decreases; the positivity test is relative so noise-level
            // components of r never trigger bogus drops
            let r_tol = 1e-10 * r.amax().max(1.0);
            let mut t1 = f64::INFINITY;
            let mut blocker: Option<usize> = None; // position in `active`
            for (k, &idx) in active.iter().enumerate() {
                if matches!(rows[idx].source, Source::In(_)) && r[k] > r_tol {
                    let step = u[k] / r[k];
                    if step < t1 {
                        t1 = step;
                        blocker = Some(k);
                    }
                }
            }

            // rows nearly dependent on the working set produce tiny garbage
            // directions; treat them as pinned rather than stepping along z
            let s_p = rows[p].n.dot(&x) - rows[p].b;
            let npz = rows[p].n.dot(&z);
            let t2 = if z.amax() > 1e-7 && npz > 1e-12 {
                -s_p / npz
            } else {
                f64::INFINITY
            };

            let t = t1.min(t2);
            if std::env::var("STRIDER_QP_TRACE").is_ok() {
                eprintln!(
                    "  inner: |z|={:.3e} npz={:.3e} s_p={:.3e} t1={t1:.3e} t2={t2:.3e} blocker={blocker:?}",
                    z.amax(),
                    npz,
                    s_p
                );
            }
            if !t.is_finite() {
                // no primal motion possible and no multiplier to relax
                let violation = match rows[p].source {
                    Source::Eq(_) => s_p.abs(),
                    Source::In(_) => -s_p,
                };
                if violation <= accept_tol {
                    // numerically pinned but effectively satisfied: abandon
                    // the episode entirely
                    x = checkpoint.0;
                    active = checkpoint.1;
                    u = checkpoint.2;
                    skip[p] = true;
                    continue 'outer;
                }
                let index = match rows[p].source {
                    Source::Eq(i) => i,
                    Source::In(i) => problem.a_eq.nrows() + i,
                };
                return Err(Error::QpInfeasible { index, violation });
            }

            if t2.is_finite() {
                x += &z * t;
                // the point moved: previously pinched rows may matter again
                for s in skip.iter_mut() {
                    *s = false;
                }
            }
            for k in 0..active.len() {
                u[k] -= t * r[k];
            }
            u_p += t;

            if t2 <= t1 && t2.is_finite() {
                // constraint p becomes active
                active.push(p);
                u.push(u_p);
                break;
            }
            // drop the blocking constraint and continue working on p
            let k = blocker.expect("finite t1 implies a blocker");
            active.remove(k);
            u.remove(k);
        }
    }

    // translate multipliers back to the caller's conventions
    let mut eq_multipliers = DVector::zeros(problem.a_eq.nrows());
    let mut in_multipliers = DVector::zeros(problem.a_in.nrows());
    let mut active_inequalities = Vec::new();
    for (k, &idx) in active.iter().enumerate() {
        match rows[idx].source {
            // L = ... + nu' (A_eq x - b_eq); GI solved with n = flip * a_eq / s:
            // grad contribution -u n = -(u/s) flip a_eq  =>  nu = -u flip / s
            Source::Eq(i) => eq_multipliers[i] = -u[k] * rows[idx].flip / rows[idx].scale,
            // n = -a_in / s: -u n = (u/s) a_in  =>  mu = u / s >= 0
            Source::In(i) => {
                in_multipliers[i] = u[k] / rows[idx].scale;
                active_inequalities.push(i);
            }
        }
    }
    active_inequalities.sort_unstable();

    let kkt = residuals(problem, &x, &active, &u, &rows);
    if kkt.max() > kkt_tol {
        return Err(Error::QpIterationCap {
            cap: iterations,
            stationarity: kkt.stationarity,
            primal: kkt.primal_eq.max(kkt.primal_in),
        });
    }

    Ok(QpSolution {
        x,
        eq_multipliers,
        in_multipliers,
        active_inequalities,
        kkt,
        iterations,
    })
}

/// Residuals on the unit-norm constraint rows (violations are geometric
/// distances) with stationarity relative to the Hessian scale.
fn residuals(
    problem: &QpProblem,
    x: &DVector<f64>,
    active: &[usize],
    u: &[f64],
    rows: &[Row],
) -> KktResiduals {
    let mut grad = &problem.h * x + &problem.g;
    for (k, &idx) in active.iter().enumerate() {
        grad -= &rows[idx].n * u[k];
    }
    let scale = problem.h.amax().max(1.0);
    let stationarity = grad.amax() / scale;

    let mut primal_eq = 0.0_f64;
    let mut primal_in = 0.0_f64;
    for row in rows {
        let s = row.n.dot(x) - row.b;
        match row.source {
            Source::Eq(_) => primal_eq = primal_eq.max(s.abs()),
            Source::In(_) => primal_in = primal_in.max((-s).max(0.0)),
        }
    }

    let mut dual = 0.0_f64;
    let mut complementarity = 0.0_f64;
    for (k, &idx) in active.iter().enumerate() {
        if let Source::In(_) = rows[idx].source {
            let s = rows[idx].n.dot(x) - rows[idx].b;
            dual = dual.max(-u[k]);
            complementarity = complementarity.max((u[k] * s).abs() / scale);
        }
    }
    KktResiduals {
        stationarity,
        primal_eq,
        primal_in,
        dual,
        complementarity,
    }
}

/// Equality-constrained least squares via the null-space method:
/// minimize `1/2 x' H x + g' x` subject to `E x = d`, where `E` may be
/// row-rank-deficient but must be consistent. Returns the minimizer and a
/// flag marking rank deficiency.
pub fn solve_equality_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    e: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Result<(DVector<f64>, bool)> {
    // Jacobi preconditioning, mirroring solve_qp
    let n = g.len();
    let mut d_s = DVector::from_fn(n, |i, _| {
        let h_ii = h[(i, i)];
        if h_ii > 0.0 {
            1.0 / h_ii.sqrt()
        } else {
            1.0
        }
    });
    if d_s.iter().any(|s| !s.is_finite()) {
        d_s = DVector::from_element(n, 1.0);
    }
    let mut h_s = h.clone();
    for i in 0..n {
        for j in 0..n {
            h_s[(i, j)] *= d_s[i] * d_s[j];
        }
    }
    let h_sym = (&h_s + h_s.transpose()) * 0.5;
    let g_s = DVector::from_fn(n, |i, _| g[i] * d_s[i]);
    let mut e_s = e.clone();
    for j in 0..n {
        for i in 0..e_s.nrows() {
            e_s[(i, j)] *= d_s[j];
        }
    }
    let (x_s, deficient) = solve_equality_qp_inner(&h_sym, &g_s, &e_s, d)?;
    Ok((DVector::from_fn(n, |i, _| x_s[i] * d_s[i]), deficient))
}

fn solve_equality_qp_inner(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    e: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Result<(DVector<f64>, bool)> {
    let n = g.len();
    if e.nrows() == 0 {
        let chol = h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParam("Hessian is not positive definite".into()))?;
        return Ok((-chol.solve(g), false));
    }
    let svd = e.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let rank_deficient = rank < e.nrows().min(n);

    // particular minimum-norm least-squares solution
    let x_p = svd
        .clone()
        .solve(d, tol)
        .map_err(|m| Error::InvalidParam(m.into()))?;
    let consistency = (e * &x_p - d).amax();
    if consistency > 1e-6 * smax.max(1.0) {
        return Err(Error::InvalidParam(format!(
            "inconsistent equality constraints (residual {consistency:.3e})"
        )));
    }

    // null-space basis from the orthogonal projector I - E^+ E (nalgebra's
    // thin SVD does not expose the trailing right singular vectors)
    let null_dim = n - rank;
    if null_dim == 0 {
        return Ok((x_p, rank_deficient));
    }
    let pinv = svd
        .pseudo_inverse(tol)
        .map_err(|m| Error::InvalidParam(m.into()))?;
    let projector = DMatrix::identity(n, n) - pinv * e;
    let eig = nalgebra::SymmetricEigen::new(projector);
    let mut z = DMatrix::zeros(n, null_dim);
    let mut col = 0;
    for i in 0..n {
        if eig.eigenvalues[i] > 0.5 {
            if col == null_dim {
                return Err(Error::InvalidParam(
                    "null-space dimension mismatch in equality solve".into(),
                ));
            }
            z.set_column(col, &eig.eigenvectors.column(i));
            col += 1;
        }
    }
    if col != null_dim {
        return Err(Error::InvalidParam(
            "null-space dimension mismatch in equality solve".into(),
        ));
    }
    let h_red = z.transpose() * h * &z;
    let g_red = z.transpose() * (h * &x_p + g);
    let chol = h_red
        .cholesky()
        .ok_or_else(|| Error::InvalidParam("reduced Hessian is not positive definite".into()))?;
    let y = -chol.solve(&g_red);
    Ok((x_p + z * y, rank_deficient))
}

/// Cholesky wrapper used by the controllers for SPD solves.
pub fn spd_cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    m.cholesky()
        .ok_or_else(|| Error::InvalidParam("matrix is not positive definite".into()))
}
