//! Dense revised simplex for packing LPs.
//!
//! Solves `max c.x  s.t.  A x <= b, x >= 0` with `b >= 0`, so the all-slack
//! basis is feasible and no phase-1 is needed. The basis inverse is kept as a
//! dense matrix and updated by elementary row operations on each pivot, with
//! periodic refactorization from scratch to keep roundoff in check.
//!
//! Pivoting follows Bland's rule throughout: the entering variable is the
//! lowest-index column with a positive reduced cost, and ratio-test ties are
//! broken by the lowest basic variable index. That rules out cycling and
//! makes every solve deterministic.

/// Sparse column: (row, coefficient) pairs sorted by row.
pub type SparseCol = Vec<(usize, f64)>;

/// A packing LP in standard inequality form.
pub struct PackingLp {
    pub nrows: usize,
    /// Structural columns.
    pub cols: Vec<SparseCol>,
    /// Objective coefficients, one per structural column.
    pub obj: Vec<f64>,
    /// Right-hand sides, all nonnegative.
    pub rhs: Vec<f64>,
}

pub struct SimplexResult {
    /// Structural variable values.
    pub x: Vec<f64>,
    /// Row duals, nonnegative at optimality.
    pub duals: Vec<f64>,
    pub objective: f64,
    /// Pivot count, exposed for determinism checks.
    #[allow(dead_code)]
    pub iterations: usize,
}

/// Reduced costs below this are treated as nonpositive, and pivot elements
/// below it are ineligible.
const PIVOT_TOL: f64 = 1e-9;
/// Rebuild the basis inverse from scratch this often.
const REFRESH_EVERY: usize = 256;

pub fn solve(lp: &PackingLp) -> SimplexResult {
    let r = lp.nrows;
    let n = lp.cols.len();
    debug_assert_eq!(lp.obj.len(), n);
    debug_assert_eq!(lp.rhs.len(), r);
    debug_assert!(lp.rhs.iter().all(|&b| b >= 0.0));

    if r == 0 {
        // No constraints: a packing column with positive objective would be
        // unbounded, which callers never construct (every agent column sits
        // in an agent row). All-zero is optimal.
        return SimplexResult {
            x: vec![0.0; n],
            duals: Vec::new(),
            objective: 0.0,
            iterations: 0,
        };
    }

    let mut state = State::new(lp);
    let max_iters = 200 * (r + n) + 20_000;
    let mut refreshes_at_optimum = 0;
    loop {
        if state.iterations > max_iters {
            panic!("simplex failed to terminate within {max_iters} iterations");
        }
        let y = state.duals();
        match state.entering(&y) {
            Some(q) => {
                state.pivot(q);
                if state.pivots_since_refresh >= REFRESH_EVERY {
                    state.refresh();
                }
            }
            None => {
                // Optimal under the current (possibly drifted) inverse.
                // Refactorize once and re-price to confirm.
                if refreshes_at_optimum >= 2 || state.pivots_since_refresh == 0 {
                    return state.extract(&y);
                }
                state.refresh();
                refreshes_at_optimum += 1;
            }
        }
    }
}

struct State<'a> {
    lp: &'a PackingLp,
    r: usize,
    n: usize,
    /// Basic variable per row; structural variables are 0..n, slack of row i
    /// is n + i.
    basis: Vec<usize>,
    /// Row position of each basic variable, usize::MAX if nonbasic.
    position: Vec<usize>,
    /// Dense basis inverse, row-major r x r.
    binv: Vec<f64>,
    /// Basic variable values.
    xb: Vec<f64>,
    iterations: usize,
    pivots_since_refresh: usize,
}

impl<'a> State<'a> {
    fn new(lp: &'a PackingLp) -> Self {
        let r = lp.nrows;
        let n = lp.cols.len();
        let mut binv = vec![0.0; r * r];
        for i in 0..r {
            binv[i * r + i] = 1.0;
        }
        let mut position = vec![usize::MAX; n + r];
        let basis: Vec<usize> = (0..r).map(|i| n + i).collect();
        for (row, &v) in basis.iter().enumerate() {
            position[v] = row;
        }
        State {
            lp,
            r,
            n,
            basis,
            position,
            binv,
            xb: lp.rhs.clone(),
            iterations: 0,
            pivots_since_refresh: 0,
        }
    }

    fn obj_of(&self, var: usize) -> f64 {
        if var < self.n {
            self.lp.obj[var]
        } else {
            0.0
        }
    }

    /// y = c_B * B^-1.
    fn duals(&self) -> Vec<f64> {
        let r = self.r;
        let mut y = vec![0.0; r];
        for (row, &v) in self.basis.iter().enumerate() {
            let c = self.obj_of(v);
            if c != 0.0 {
                let base = row * r;
                for j in 0..r {
                    y[j] += c * self.binv[base + j];
                }
            }
        }
        y
    }

    /// Bland entering rule: the lowest-index nonbasic variable with reduced
    /// cost above tolerance. Structural variables come before slacks.
    fn entering(&self, y: &[f64]) -> Option<usize> {
        for q in 0..self.n {
            if self.position[q] != usize::MAX {
                continue;
            }
            let mut d = self.lp.obj[q];
            for &(row, a) in &self.lp.cols[q] {
                d -= y[row] * a;
            }
            if d > PIVOT_TOL {
                return Some(q);
            }
        }
        for i in 0..self.r {
            let q = self.n + i;
            if self.position[q] != usize::MAX {
                continue;
            }
            if -y[i] > PIVOT_TOL {
                return Some(q);
            }
        }
        None
    }

    /// w = B^-1 * a_q for the entering column.
    fn direction(&self, q: usize) -> Vec<f64> {
        let r = self.r;
        let mut w = vec![0.0; r];
        if q < self.n {
            for &(row, a) in &self.lp.cols[q] {
                for i in 0..r {
                    w[i] += self.binv[i * r + row] * a;
                }
            }
        } else {
            let row = q - self.n;
            for i in 0..r {
                w[i] = self.binv[i * r + row];
            }
        }
        w
    }

    fn pivot(&mut self, q: usize) {
        self.iterations += 1;
        self.pivots_since_refresh += 1;
        let w = self.direction(q);
        // Ratio test with Bland tie-breaking.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.r {
            if w[i] > PIVOT_TOL {
                let ratio = (self.xb[i].max(0.0)) / w[i];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((best_i, best_ratio)) => {
                        if ratio < best_ratio - PIVOT_TOL
                            || (ratio < best_ratio + PIVOT_TOL
                                && self.basis[i] < self.basis[best_i])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((p, theta)) = leave else {
            panic!("simplex: unbounded packing LP (column without positive entries)");
        };
        let r = self.r;
        let wp = w[p];
        // Update basic values.
        for i in 0..r {
            if i != p {
                self.xb[i] -= theta * w[i];
                if self.xb[i] < 0.0 && self.xb[i] > -1e-11 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[p] = theta;
        // Eta update of the inverse.
        let (head, tail) = self.binv.split_at_mut(p * r);
        let (prow, rest) = tail.split_at_mut(r);
        for v in prow.iter_mut() {
            *v /= wp;
        }
        for i in 0..p {
            let wi = w[i];
            if wi != 0.0 {
                let row = &mut head[i * r..(i + 1) * r];
                for (a, &b) in row.iter_mut().zip(prow.iter()) {
                    *a -= wi * b;
                }
            }
        }
        for i in (p + 1)..r {
            let wi = w[i];
            if wi != 0.0 {
                let row = &mut rest[(i - p - 1) * r..(i - p) * r];
                for (a, &b) in row.iter_mut().zip(prow.iter()) {
                    *a -= wi * b;
                }
            }
        }
        let old = self.basis[p];
        self.position[old] = usize::MAX;
        self.basis[p] = q;
        self.position[q] = p;
    }

    /// Rebuilds the inverse and the basic values from the basis definition.
    fn refresh(&mut self) {
        let r = self.r;
        // Assemble B column-by-column, then invert by Gauss-Jordan with
        // partial pivoting, carrying the identity alongside.
        let mut b = vec![0.0; r * r];
        for (col, &v) in self.basis.iter().enumerate() {
            if v < self.n {
                for &(row, a) in &self.lp.cols[v] {
                    b[row * r + col] = a;
                }
            } else {
                b[(v - self.n) * r + col] = 1.0;
            }
        }
        let mut inv = vec![0.0; r * r];
        for i in 0..r {
            inv[i * r + i] = 1.0;
        }
        for col in 0..r {
            let mut piv = col;
            let mut best = b[col * r + col].abs();
            for row in (col + 1)..r {
                let v = b[row * r + col].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            assert!(best > 1e-14, "singular basis during refactorization");
            if piv != col {
                for j in 0..r {
                    b.swap(col * r + j, piv * r + j);
                    inv.swap(col * r + j, piv * r + j);
                }
            }
            let d = b[col * r + col];
            for j in 0..r {
                b[col * r + j] /= d;
                inv[col * r + j] /= d;
            }
            for row in 0..r {
                if row != col {
                    let f = b[row * r + col];
                    if f != 0.0 {
                        for j in 0..r {
                            b[row * r + j] -= f * b[col * r + j];
                            inv[row * r + j] -= f * inv[col * r + j];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        // xb = B^-1 * rhs.
        let mut xb = vec![0.0; r];
        for i in 0..r {
            let mut acc = 0.0;
            let base = i * r;
            for j in 0..r {
                acc += self.binv[base + j] * self.lp.rhs[j];
            }
            xb[i] = if acc < 0.0 && acc > -1e-10 { 0.0 } else { acc };
        }
        self.xb = xb;
        self.pivots_since_refresh = 0;
    }

    fn extract(&self, y: &[f64]) -> SimplexResult {
        let mut x = vec![0.0; self.n];
        for (row, &v) in self.basis.iter().enumerate() {
            if v < self.n {
                x[v] = self.xb[row].max(0.0);
            }
        }
        let objective = x
            .iter()
            .zip(self.lp.obj.iter())
            .map(|(xi, ci)| xi * ci)
            .sum();
        SimplexResult {
            x,
            duals: y.iter().map(|&v| v.max(0.0)).collect(),
            objective,
            iterations: self.iterations,
        }
    }
}
