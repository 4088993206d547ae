//! LU factorization of simplex basis matrices.
//!
//! Bases arising from flow models are dominated by unit columns and rows
//! with two or three entries, so nearly the whole matrix eliminates through
//! fill-free singleton pivots. Whatever remains is factored as a dense
//! kernel with partial pivoting. Solves replay the pivot sequence.
//!
//! Invariant: a pivot's `lower` entries only reference rows eliminated
//! later, and its `upper` entries only reference columns eliminated later,
//! so forward/backward passes over the ordered sequence are valid.

const PIVOT_EPS: f64 = 1e-11;

#[derive(Debug, Clone)]
struct Pivot {
    row: u32,
    /// Basis position (column of B).
    col: u32,
    value: f64,
    /// (row, multiplier) pairs of the eliminated column.
    lower: Vec<(u32, f64)>,
    /// (column, value) pairs of the pivot row at elimination time.
    upper: Vec<(u32, f64)>,
}

#[derive(Debug, Clone)]
pub struct Factors {
    m: usize,
    pivots: Vec<Pivot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

/// Factorizes the basis given by `cols`: column `c` holds sparse
/// (row, value) entries of basis position `c`.
pub fn factorize(m: usize, cols: &[Vec<(u32, f64)>]) -> Result<Factors, Singular> {
    debug_assert_eq!(cols.len(), m);
    let col_entries: Vec<Vec<(u32, f64)>> = cols.to_vec();
    let mut row_entries: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
    for (c, col) in col_entries.iter().enumerate() {
        for &(r, v) in col {
            row_entries[r as usize].push((c as u32, v));
        }
    }

    let mut row_alive = vec![true; m];
    let mut col_alive = vec![true; m];
    let mut row_nnz: Vec<u32> = row_entries.iter().map(|r| r.len() as u32).collect();
    let mut col_nnz: Vec<u32> = col_entries.iter().map(|c| c.len() as u32).collect();

    let mut col_stack: Vec<u32> = (0..m as u32).rev().filter(|&c| col_nnz[c as usize] == 1).collect();
    let mut row_stack: Vec<u32> = (0..m as u32).rev().filter(|&r| row_nnz[r as usize] == 1).collect();

    let mut pivots = Vec::with_capacity(m);

    loop {
        if let Some(c) = col_stack.pop() {
            let c = c as usize;
            if !col_alive[c] || col_nnz[c] != 1 {
                continue;
            }
            let &(r, value) = col_entries[c]
                .iter()
                .find(|&&(r, _)| row_alive[r as usize])
                .ok_or(Singular)?;
            if value.abs() < PIVOT_EPS {
                return Err(Singular);
            }
            let r = r as usize;
            let mut upper = Vec::new();
            for &(j, v) in &row_entries[r] {
                if j as usize != c && col_alive[j as usize] {
                    upper.push((j, v));
                    col_nnz[j as usize] -= 1;
                    if col_nnz[j as usize] == 1 {
                        col_stack.push(j);
                    }
                }
            }
            row_alive[r] = false;
            col_alive[c] = false;
            pivots.push(Pivot {
                row: r as u32,
                col: c as u32,
                value,
                lower: Vec::new(),
                upper,
            });
        } else if let Some(r) = row_stack.pop() {
            let r = r as usize;
            if !row_alive[r] || row_nnz[r] != 1 {
                continue;
            }
            let &(c, value) = row_entries[r]
                .iter()
                .find(|&&(c, _)| col_alive[c as usize])
                .ok_or(Singular)?;
            if value.abs() < PIVOT_EPS {
                return Err(Singular);
            }
            let c = c as usize;
            let mut lower = Vec::new();
            for &(i, v) in &col_entries[c] {
                if i as usize != r && row_alive[i as usize] {
                    lower.push((i, v / value));
                    row_nnz[i as usize] -= 1;
                    if row_nnz[i as usize] == 1 {
                        row_stack.push(i);
                    }
                }
            }
            row_alive[r] = false;
            col_alive[c] = false;
            pivots.push(Pivot {
                row: r as u32,
                col: c as u32,
                value,
                lower,
                upper: Vec::new(),
            });
        } else {
            break;
        }
    }

    // Dense kernel over whatever the singleton passes left behind.
    let kernel_rows: Vec<usize> = (0..m).filter(|&r| row_alive[r]).collect();
    let kernel_cols: Vec<usize> = (0..m).filter(|&c| col_alive[c]).collect();
    let q = kernel_rows.len();
    if q != kernel_cols.len() {
        return Err(Singular);
    }
    if q > 0 {
        let row_pos: Vec<Option<usize>> = {
            let mut map = vec![None; m];
            for (i, &r) in kernel_rows.iter().enumerate() {
                map[r] = Some(i);
            }
            map
        };
        let mut dense = vec![0.0f64; q * q];
        for (jk, &c) in kernel_cols.iter().enumerate() {
            for &(r, v) in &col_entries[c] {
                if let Some(ik) = row_pos[r as usize] {
                    dense[ik * q + jk] = v;
                }
            }
        }
        // rowmap[i] = original kernel row occupying dense row i
        let mut rowmap: Vec<usize> = kernel_rows.clone();
        for s in 0..q {
            let mut best = s;
            let mut best_abs = dense[s * q + s].abs();
            for i in s + 1..q {
                let a = dense[i * q + s].abs();
                if a > best_abs {
                    best = i;
                    best_abs = a;
                }
            }
            if best_abs < PIVOT_EPS {
                return Err(Singular);
            }
            if best != s {
                for j in 0..q {
                    dense.swap(s * q + j, best * q + j);
                }
                rowmap.swap(s, best);
            }
            let pivot_value = dense[s * q + s];
            let mut lower = Vec::new();
            for i in s + 1..q {
                let factor = dense[i * q + s] / pivot_value;
                if factor != 0.0 {
                    lower.push((rowmap[i] as u32, factor));
                    for j in s + 1..q {
                        dense[i * q + j] -= factor * dense[s * q + j];
                    }
                    dense[i * q + s] = 0.0;
                }
            }
            let upper: Vec<(u32, f64)> = (s + 1..q)
                .filter(|&j| dense[s * q + j] != 0.0)
                .map(|j| (kernel_cols[j] as u32, dense[s * q + j]))
                .collect();
            pivots.push(Pivot {
                row: rowmap[s] as u32,
                col: kernel_cols[s] as u32,
                value: pivot_value,
                lower,
                upper,
            });
        }
    }

    debug_assert_eq!(pivots.len(), m);
    Ok(Factors { m, pivots })
}

impl Factors {
    /// Solves `B x = b`. `b` is consumed as workspace (row-indexed) and the
    /// solution is written to `x` (basis-position-indexed).
    pub fn ftran(&self, b: &mut [f64], x: &mut [f64]) {
        debug_assert_eq!(b.len(), self.m);
        for piv in &self.pivots {
            let pv = b[piv.row as usize];
            if pv != 0.0 {
                for &(i, l) in &piv.lower {
                    b[i as usize] -= l * pv;
                }
            }
        }
        for piv in self.pivots.iter().rev() {
            let mut acc = b[piv.row as usize];
            for &(j, u) in &piv.upper {
                acc -= u * x[j as usize];
            }
            x[piv.col as usize] = acc / piv.value;
        }
    }

    /// Solves `B^T y = c`. `c` is consumed as workspace
    /// (basis-position-indexed) and the solution is written to `y`
    /// (row-indexed).
    pub fn btran(&self, c: &mut [f64], y: &mut [f64]) {
        debug_assert_eq!(c.len(), self.m);
        for piv in &self.pivots {
            let z = c[piv.col as usize] / piv.value;
            y[piv.row as usize] = z;
            if z != 0.0 {
                for &(j, u) in &piv.upper {
                    c[j as usize] -= u * z;
                }
            }
        }
        for piv in self.pivots.iter().rev() {
            let mut acc = y[piv.row as usize];
            for &(i, l) in &piv.lower {
                acc -= l * y[i as usize];
            }
            y[piv.row as usize] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
        let mut rhs = b.to_vec();
        for s in 0..n {
            let piv = (s..n).max_by(|&i, &j| m[i][s].abs().partial_cmp(&m[j][s].abs()).unwrap())?;
            if m[piv][s].abs() < 1e-12 {
                return None;
            }
            m.swap(s, piv);
            rhs.swap(s, piv);
            for i in s + 1..n {
                let f = m[i][s] / m[s][s];
                for j in s..n {
                    m[i][j] -= f * m[s][j];
                }
                rhs[i] -= f * rhs[s];
            }
        }
        let mut x = vec![0.0; n];
        for s in (0..n).rev() {
            let mut acc = rhs[s];
            for j in s + 1..n {
                acc -= m[s][j] * x[j];
            }
            x[s] = acc / m[s][s];
        }
        Some(x)
    }

    fn random_sparse_basis(n: usize, seed: u64) -> Vec<Vec<(u32, f64)>> {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        // diagonal plus a few off-diagonal entries: nonsingular with high
        // probability, resembling flow bases
        let mut cols = vec![Vec::new(); n];
        for (c, col) in cols.iter_mut().enumerate() {
            col.push((c as u32, (next() % 5 + 1) as f64));
            for _ in 0..(next() % 3) {
                let r = (next() % n as u64) as usize;
                if r != c && !col.iter().any(|&(rr, _)| rr as usize == r) {
                    col.push((r as u32, (next() % 7) as f64 - 3.0));
                }
            }
            col.retain(|&(_, v)| v != 0.0);
            if col.is_empty() {
                col.push((c as u32, 1.0));
            }
        }
        cols
    }

    #[test]
    fn ftran_btran_match_dense_elimination() {
        for seed in 1..30u64 {
            let n = 24;
            let cols = random_sparse_basis(n, seed * 0x9e3779b9);
            let factors = match factorize(n, &cols) {
                Ok(f) => f,
                Err(Singular) => continue,
            };
            let mut dense = vec![vec![0.0; n]; n];
            for (c, col) in cols.iter().enumerate() {
                for &(r, v) in col {
                    dense[r as usize][c] = v;
                }
            }
            let b: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
            let expected = dense_solve(&dense, &b).expect("oracle solvable");

            let mut work = b.clone();
            let mut x = vec![0.0; n];
            factors.ftran(&mut work, &mut x);
            for i in 0..n {
                assert!(
                    (x[i] - expected[i]).abs() < 1e-8,
                    "seed {seed} ftran mismatch at {i}: {} vs {}",
                    x[i],
                    expected[i]
                );
            }

            // B^T y = c against transposed dense oracle
            let transposed: Vec<Vec<f64>> =
                (0..n).map(|i| (0..n).map(|j| dense[j][i]).collect()).collect();
            let expected_t = dense_solve(&transposed, &b).expect("oracle solvable");
            let mut work = b.clone();
            let mut y = vec![0.0; n];
            factors.btran(&mut work, &mut y);
            for i in 0..n {
                assert!(
                    (y[i] - expected_t[i]).abs() < 1e-8,
                    "seed {seed} btran mismatch at {i}"
                );
            }
        }
    }

    #[test]
    fn singular_matrix_detected() {
        // two identical columns
        let cols = vec![
            vec![(0u32, 1.0), (1u32, 2.0)],
            vec![(0u32, 1.0), (1u32, 2.0)],
        ];
        assert!(matches!(factorize(2, &cols), Err(Singular)));
    }
}
