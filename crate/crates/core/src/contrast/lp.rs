//! Dense tableau simplex for small problems of the form
//! `maximize c'x  subject to  A x <= b, x >= 0` with `b >= 0`, so the slack
//! basis is feasible from the start and no phase one is needed.

const EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub pivots: usize,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x (cols + 1)`; last column is the right-hand side.
    data: Vec<f64>,
    reduced: Vec<f64>,
    objective: f64,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.at(r, c);
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f != 0.0 {
                for (v, pr) in self.data[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.data[i * w + c] = 0.0;
            }
        }
        let f = self.reduced[c];
        if f != 0.0 {
            for (v, pr) in self.reduced.iter_mut().zip(&pivot_row[..self.cols]) {
                *v -= f * pr;
            }
            self.objective += f * pivot_row[self.cols];
            self.reduced[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        if bland {
            return (0..self.cols).find(|&j| self.reduced[j] > EPS);
        }
        let (j, best) = self
            .reduced
            .iter()
            .enumerate()
            .fold((usize::MAX, EPS), |acc, (j, &r)| if r > acc.1 { (j, r) } else { acc });
        (best > EPS).then_some(j)
    }

    /// Minimum-ratio row; ties go to the smallest basic variable index.
    fn leaving(&self, c: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let a = self.at(i, c);
            if a > EPS {
                let ratio = self.rhs(i) / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Solves the LP with Dantzig pricing, falling back to Bland's rule after a
/// run of degenerate pivots so the method cannot cycle.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpSolution {
    let n = c.len();
    let m = b.len();
    assert_eq!(a.len(), m, "one constraint row per right-hand side");
    assert!(b.iter().all(|&v| v >= 0.0), "origin must be feasible");
    let cols = n + m;
    let mut data = vec![0.0; m * (cols + 1)];
    for i in 0..m {
        let row = &mut data[i * (cols + 1)..(i + 1) * (cols + 1)];
        row[..n].copy_from_slice(&a[i]);
        row[n + i] = 1.0;
        row[cols] = b[i];
    }
    let mut reduced = vec![0.0; cols];
    reduced[..n].copy_from_slice(c);
    let mut tab = Tableau {
        rows: m,
        cols,
        data,
        reduced,
        objective: 0.0,
        basis: (n..n + m).collect(),
    };

    let max_pivots = 50 * (m + n).max(10);
    let mut degenerate_run = 0;
    let mut status = LpStatus::IterationLimit;
    let mut pivots = 0;
    while pivots < max_pivots {
        let bland = degenerate_run > m;
        let Some(col) = tab.entering(bland) else {
            status = LpStatus::Optimal;
            break;
        };
        let Some(row) = tab.leaving(col) else {
            status = LpStatus::Unbounded;
            break;
        };
        if tab.rhs(row) <= EPS {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        tab.pivot(row, col);
        pivots += 1;
    }

    let mut x = vec![0.0; n];
    for (i, &j) in tab.basis.iter().enumerate() {
        if j < n {
            x[j] = tab.rhs(i).max(0.0);
        }
    }
    LpSolution { x, objective: tab.objective, status, pivots }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
        let sol = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        );
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_direction() {
        let sol = maximize(&[1.0, 1.0], &[vec![1.0, -1.0]], &[1.0]);
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_start() {
        // zero right-hand sides at the origin
        let sol = maximize(
            &[1.0, 1.0, 0.0],
            &[vec![1.0, -1.0, 0.0], vec![-1.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]],
            &[0.0, 0.0, 2.0],
        );
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-12);
    }
}
