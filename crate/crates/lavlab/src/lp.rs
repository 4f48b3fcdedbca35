//! Dense two-phase simplex for tiny equality-constrained LPs.
//!
//! Solves min cᵀλ subject to Aλ = b, λ ≥ 0, with few rows and many columns.

const TOL: f64 = 1e-11;

pub(crate) struct LpSolution {
    pub value: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    live: Vec<bool>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let (pivot_row, pivot_rhs) = (self.rows[r].clone(), self.rhs[r]);
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.rhs[i] -= f * pivot_rhs;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations for `costs` over columns `< allowed`.
    fn optimize(&mut self, costs: &[f64], allowed: usize) -> bool {
        let m = self.rows.len();
        let mut bland = false;
        for _ in 0..(50 * (allowed + m) + 100) {
            let mut reduced = costs[..allowed].to_vec();
            for i in (0..m).filter(|&i| self.live[i]) {
                let d = costs[self.basis[i]];
                if d != 0.0 {
                    for (r, a) in reduced.iter_mut().zip(&self.rows[i][..allowed]) {
                        *r -= d * a;
                    }
                }
            }
            for &b in &self.basis {
                if b < allowed {
                    reduced[b] = 0.0;
                }
            }
            let mut entering = None;
            let mut best = -TOL;
            for (j, &r) in reduced.iter().enumerate() {
                if r < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = r;
                }
            }
            let Some(c) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in (0..m).filter(|&i| self.live[i]) {
                let a = self.rows[i][c];
                if a > TOL {
                    let ratio = self.rhs[i] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - TOL || (ratio <= lr + TOL && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else { return false };
            bland = ratio.abs() <= TOL;
            self.pivot(r, c);
        }
        false
    }
}

/// Returns `None` when infeasible or unbounded.
pub(crate) fn minimize(columns: &[Vec<f64>], costs: &[f64], rhs: &[f64]) -> Option<LpSolution> {
    let m = rhs.len();
    let n = columns.len();
    if n == 0 {
        return None;
    }
    let mut rows = vec![vec![0.0; n + m]; m];
    let mut b = rhs.to_vec();
    for i in 0..m {
        let scale = columns
            .iter()
            .map(|c| c[i].abs())
            .fold(b[i].abs(), f64::max)
            .max(f64::MIN_POSITIVE);
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for (j, col) in columns.iter().enumerate() {
            rows[i][j] = sign * col[i] / scale;
        }
        rows[i][n + i] = 1.0;
        b[i] = sign * b[i] / scale;
    }
    let mut tab = Tableau {
        rows,
        rhs: b,
        basis: (n..n + m).collect(),
        live: vec![true; m],
    };

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|c| *c = 1.0);
    tab.optimize(&phase1, n);
    let infeasibility: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.rhs[i]).sum();
    if infeasibility > 1e-9 {
        return None;
    }
    for i in 0..m {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| tab.rows[i][j].abs() > 1e-9) {
                Some(j) => tab.pivot(i, j),
                None => tab.live[i] = false,
            }
        }
    }

    let cmax = costs.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(f64::MIN_POSITIVE);
    let mut phase2: Vec<f64> = costs.iter().map(|c| c / cmax).collect();
    phase2.extend(std::iter::repeat_n(0.0, m));
    if !tab.optimize(&phase2, n) {
        return None;
    }
    let value = (0..m)
        .filter(|&i| tab.live[i] && tab.basis[i] < n)
        .map(|i| tab.rhs[i].max(0.0) * costs[tab.basis[i]])
        .sum();
    Some(LpSolution { value })
}
