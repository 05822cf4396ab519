//! Sparse linear solves: exact rational Gaussian elimination with
//! min-fill-degree pivoting (the star-mesh transform when the matrix is a
//! Laplacian), and a Jacobi-preconditioned conjugate gradient for large
//! symmetric positive definite systems in floating point.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

pub type Ratio = BigRational;

pub fn ratio_int(n: i64) -> Ratio {
    Ratio::from_integer(n.into())
}

pub fn ratio(n: i64, d: i64) -> Ratio {
    Ratio::new(n.into(), d.into())
}

pub fn ratio_to_f64(r: &Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("singular pivot at row {row}")]
    SingularPivot { row: usize },
    #[error("conjugate gradient stalled at residual {residual:e} (target {target:e})")]
    NoConvergence { residual: f64, target: f64 },
}

/// A square sparse matrix over exact rationals, built by accumulation.
pub struct SparseExact {
    n: usize,
    rows: Vec<HashMap<usize, Ratio>>,
}

impl SparseExact {
    pub fn new(n: usize) -> Self {
        SparseExact {
            n,
            rows: vec![HashMap::new(); n],
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: Ratio) {
        if v.is_zero() {
            return;
        }
        let entry = self.rows[i].entry(j).or_insert_with(Ratio::zero);
        *entry += v;
        if entry.is_zero() {
            self.rows[i].remove(&j);
        }
    }

    /// Eliminates rows in min-fill-degree order, recording the operations so
    /// that multiple right-hand sides can be solved against one
    /// factorization.
    pub fn factor(self) -> Result<ExactFactor, SolveError> {
        let n = self.n;
        let mut rows = self.rows;
        let mut cols: Vec<HashSet<usize>> = vec![HashSet::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for &j in row.keys() {
                cols[j].insert(i);
            }
        }
        let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n)
            .map(|i| Reverse((rows[i].len(), i)))
            .collect();
        let mut eliminated = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut ops: Vec<(usize, usize, Ratio)> = Vec::new();
        let mut diag: Vec<Ratio> = vec![Ratio::zero(); n];
        for _ in 0..n {
            let p = loop {
                let Reverse((nnz, p)) = heap.pop().ok_or(SolveError::SingularPivot { row: n })?;
                if !eliminated[p] && rows[p].len() == nnz {
                    break p;
                }
            };
            let pivot = rows[p]
                .get(&p)
                .filter(|v| !v.is_zero())
                .cloned()
                .ok_or(SolveError::SingularPivot { row: p })?;
            eliminated[p] = true;
            order.push(p);
            diag[p] = pivot.clone();
            let pivot_row: Vec<(usize, Ratio)> = rows[p]
                .iter()
                .filter(|(&j, _)| j != p)
                .map(|(&j, v)| (j, v.clone()))
                .collect();
            let targets: Vec<usize> = cols[p]
                .iter()
                .copied()
                .filter(|&r| r != p && !eliminated[r])
                .collect();
            for r in targets {
                let factor = match rows[r].remove(&p) {
                    Some(v) => v / &pivot,
                    None => continue,
                };
                cols[p].remove(&r);
                for (j, v) in &pivot_row {
                    let entry = rows[r].entry(*j).or_insert_with(Ratio::zero);
                    *entry -= &factor * v;
                    if entry.is_zero() {
                        rows[r].remove(j);
                        cols[*j].remove(&r);
                    } else {
                        cols[*j].insert(r);
                    }
                }
                heap.push(Reverse((rows[r].len(), r)));
                ops.push((r, p, factor));
            }
        }
        let rows: Vec<Vec<(usize, Ratio)>> = rows
            .into_iter()
            .map(|row| {
                let mut v: Vec<(usize, Ratio)> = row.into_iter().collect();
                v.sort_by_key(|&(j, _)| j);
                v
            })
            .collect();
        Ok(ExactFactor {
            order,
            ops,
            rows,
            diag,
        })
    }
}

pub struct ExactFactor {
    order: Vec<usize>,
    ops: Vec<(usize, usize, Ratio)>,
    rows: Vec<Vec<(usize, Ratio)>>,
    diag: Vec<Ratio>,
}

impl ExactFactor {
    pub fn solve(&self, mut b: Vec<Ratio>) -> Vec<Ratio> {
        for (r, p, f) in &self.ops {
            let delta = f * &b[*p];
            b[*r] -= delta;
        }
        let mut x = vec![Ratio::zero(); b.len()];
        for &p in self.order.iter().rev() {
            let mut acc = b[p].clone();
            for (j, v) in &self.rows[p] {
                if *j != p {
                    acc -= v * &x[*j];
                }
            }
            x[p] = acc / &self.diag[p];
        }
        x
    }
}

/// Jacobi-preconditioned conjugate gradient on a symmetric positive definite
/// matrix given as full symmetric rows.  Returns the solution and the final
/// true relative residual.
pub fn conjugate_gradient(
    rows: &[Vec<(usize, f64)>],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = b.len();
    let matvec = |x: &[f64], out: &mut Vec<f64>| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, v) in row {
                acc += v * x[j];
            }
            out[i] = acc;
        }
    };
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = rows[i]
                .iter()
                .find(|&&(j, _)| j == i)
                .map(|&(_, v)| v)
                .unwrap_or(0.0);
            if d.abs() > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm / b_norm < tol {
            break;
        }
        matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap.abs() < f64::MIN_POSITIVE {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // true residual, recomputed
    let mut ax = vec![0.0; n];
    matvec(&x, &mut ax);
    let res = ax
        .iter()
        .zip(b)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / b_norm;
    (x, res)
}
