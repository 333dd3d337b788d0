//! Plain `Vec<Vec<f64>>` linear algebra, deliberately independent of the
//! SVD-based routines under test.

use nalgebra::DMatrix;

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

pub fn from_rows(rows: &Rows) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |r, c| rows[r][c])
}

fn transpose(a: &Rows) -> Rows {
    let n = a.len();
    let m = a.first().map_or(0, Vec::len);
    (0..m).map(|c| (0..n).map(|r| a[r][c]).collect()).collect()
}

fn matmul(a: &Rows, b: &Rows) -> Rows {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum())
                .collect()
        })
        .collect()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and the matching eigenvectors as columns.
pub fn jacobi_eigen(sym: &Rows) -> (Vec<f64>, Rows) {
    let n = sym.len();
    let mut a = sym.clone();
    let mut v: Rows = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

/// Best rank-`r` approximation `M V_r V_rᵀ`, with `V_r` the leading
/// eigenvectors of `MᵀM`.
pub fn truncated_svd(m: &Rows, r: usize) -> Rows {
    let mt = transpose(m);
    let gram = matmul(&mt, m);
    let (_, vecs) = jacobi_eigen(&gram);
    let k = r.min(vecs.len());
    let v_r: Rows = vecs.iter().map(|row| row[..k].to_vec()).collect();
    matmul(&matmul(m, &v_r), &transpose(&v_r))
}

/// Singular values of `m` (descending) from the eigenvalues of `MᵀM` or `MMᵀ`.
pub fn singular_values(m: &Rows) -> Vec<f64> {
    let mt = transpose(m);
    let gram = if m.len() <= mt.len() { matmul(m, &mt) } else { matmul(&mt, m) };
    let (vals, _) = jacobi_eigen(&gram);
    vals.into_iter().map(|v| v.max(0.0).sqrt()).collect()
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Rows, b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut aug: Rows = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        for row in col + 1..n {
            let f = aug[row][col] / aug[col][col];
            for k in col..=n {
                aug[row][k] -= f * aug[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| aug[row][k] * x[k]).sum();
        x[row] = (aug[row][n] - s) / aug[row][row];
    }
    x
}

/// Least-squares weights `w` minimising `|| y - Dᵀ w ||` for donor rows `D`
/// of full row rank, via the normal equations `(D Dᵀ) w = D y`.
pub fn normal_equations(donors: &Rows, y: &[f64]) -> Vec<f64> {
    let gram = matmul(donors, &transpose(donors));
    let rhs: Vec<f64> = donors.iter().map(|d| d.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    solve(&gram, &rhs)
}

/// `|| y - Dᵀ w ||²`.
pub fn residual_sq(donors: &Rows, w: &[f64], y: &[f64]) -> f64 {
    (0..y.len())
        .map(|t| {
            let fit: f64 = donors.iter().zip(w).map(|(d, wi)| d[t] * wi).sum();
            (y[t] - fit).powi(2)
        })
        .sum()
}

pub fn frobenius_diff(a: &Rows, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, x)| (x - b[(r, c)]).powi(2)))
        .sum::<f64>()
        .sqrt()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_on_known_matrix() {
        let (vals, vecs) = jacobi_eigen(&vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        assert!((vecs[0][0].abs() - vecs[1][0].abs()).abs() < 1e-14);
    }

    #[test]
    fn gaussian_elimination() {
        let x = solve(&vec![vec![0.0, 2.0], vec![3.0, 1.0]], &[4.0, 5.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }
}
