//! Integer least-squares ambiguity resolution.
//!
//! The float ambiguities are decorrelated with a unimodular integer
//! transform (integer Gauss reductions plus symmetric permutations on the
//! `Q = L^T D L` factorisation), searched with a shrinking ellipsoid
//! depth-first enumeration, and mapped back to the original basis.
//!
//! Conventions: `z = Z^T a`, `Q_z = Z^T Q Z`, and `a = Z^-T z`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_NODE_CAP: u64 = 10_000_000;
pub const DEFAULT_RATIO_THRESHOLD: f64 = 2.0;
const RATIO_EPS: f64 = 1e-12;
const BRUTE_FORCE_MAX_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FloatAmbiguities {
    pub values: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl FloatAmbiguities {
    pub fn new(values: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = values.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Shape(format!(
                "{}-vector with a {}x{} covariance",
                n,
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        Ok(Self { values, covariance })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegerCandidate {
    pub values: Vec<i64>,
    pub quadratic_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decorrelation {
    pub z_transform: DMatrix<i64>,
    /// Exact integer inverse of `z_transform`.
    pub z_inverse: DMatrix<i64>,
    pub transformed_cov: DMatrix<f64>,
    /// `Q_z = L^T diag(d) L`, L unit lower triangular.
    pub l: DMatrix<f64>,
    pub d: DVector<f64>,
}

/// `Q = L^T diag(D) L` with L unit lower triangular.
pub fn ltdl(q: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = q.nrows();
    if n == 0 || q.ncols() != n {
        return Err(Error::Shape(format!("covariance must be square and non-empty, got {}x{}", q.nrows(), q.ncols())));
    }
    let scale = q.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (q[(i, j)] - q[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    let mut a = q.clone();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut d = DVector::<f64>::zeros(n);
    for i in (0..n).rev() {
        d[i] = a[(i, i)];
        if !(d[i] > 0.0) || !d[i].is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let root = d[i].sqrt();
        for j in 0..=i {
            l[(i, j)] = a[(i, j)] / root;
        }
        for j in 0..i {
            for k in 0..=j {
                a[(j, k)] -= l[(i, k)] * l[(i, j)];
            }
        }
        let lii = l[(i, i)];
        for j in 0..=i {
            l[(i, j)] /= lii;
        }
    }
    Ok((l, d))
}

fn gauss_step(l: &mut DMatrix<f64>, z: &mut DMatrix<i64>, zi: &mut DMatrix<i64>, i: usize, j: usize) {
    let n = l.nrows();
    let mu = l[(i, j)].round();
    if mu == 0.0 {
        return;
    }
    let m = mu as i64;
    for k in i..n {
        l[(k, j)] -= mu * l[(k, i)];
    }
    // Z <- Z * (I - mu e_i e_j^T), inverse rows updated to match.
    for k in 0..n {
        z[(k, j)] -= m * z[(k, i)];
        zi[(i, k)] += m * zi[(j, k)];
    }
}

fn permute(
    l: &mut DMatrix<f64>,
    d: &mut DVector<f64>,
    z: &mut DMatrix<i64>,
    zi: &mut DMatrix<i64>,
    j: usize,
    delta: f64,
) {
    let n = l.nrows();
    let eta = d[j] / delta;
    let lam = d[j + 1] * l[(j + 1, j)] / delta;
    d[j] = eta * d[j + 1];
    d[j + 1] = delta;
    for k in 0..j {
        let a0 = l[(j, k)];
        let a1 = l[(j + 1, k)];
        l[(j, k)] = -l[(j + 1, j)] * a0 + a1;
        l[(j + 1, k)] = eta * a0 + lam * a1;
    }
    l[(j + 1, j)] = lam;
    for k in j + 2..n {
        l.swap((k, j), (k, j + 1));
    }
    z.swap_columns(j, j + 1);
    zi.swap_rows(j, j + 1);
}

/// Unimodular decorrelation of an SPD covariance.
pub fn decorrelate(q: &DMatrix<f64>) -> Result<Decorrelation> {
    let (mut l, mut d) = ltdl(q)?;
    let n = q.nrows();
    let mut z = DMatrix::<i64>::identity(n, n);
    let mut zi = DMatrix::<i64>::identity(n, n);
    if n > 1 {
        let mut j = n as isize - 2;
        let mut k = n as isize - 2;
        let mut guard = 0usize;
        while j >= 0 {
            let ju = j as usize;
            if j <= k {
                for i in ju + 1..n {
                    gauss_step(&mut l, &mut z, &mut zi, i, ju);
                }
            }
            let delta = d[ju] + l[(ju + 1, ju)].powi(2) * d[ju + 1];
            if delta + 1e-6 < d[ju + 1] {
                permute(&mut l, &mut d, &mut z, &mut zi, ju, delta);
                k = j;
                j = n as isize - 2;
            } else {
                j -= 1;
            }
            guard += 1;
            if guard > 100_000 {
                return Err(Error::Numeric("decorrelation did not terminate".into()));
            }
        }
    }
    let zf = z.map(|v| v as f64);
    let mut qz = zf.transpose() * q * &zf;
    qz = (&qz + qz.transpose()) * 0.5;
    Ok(Decorrelation {
        z_transform: z,
        z_inverse: zi,
        transformed_cov: qz,
        l,
        d,
    })
}

/// Exact determinant of an integer matrix (fraction-free elimination).
pub fn integer_determinant(m: &DMatrix<i64>) -> i128 {
    let n = m.nrows();
    if n == 0 {
        return 1;
    }
    let mut a: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| i128::from(m[(i, j)])).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&r| a[r][k] != 0) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

struct Search<'a> {
    l: &'a DMatrix<f64>,
    d: &'a DVector<f64>,
    zhat: &'a DVector<f64>,
}

fn sgn(x: f64) -> f64 {
    if x <= 0.0 {
        -1.0
    } else {
        1.0
    }
}

impl Search<'_> {
    /// The `m` best integer vectors in the decorrelated basis, ascending.
    fn run(&self, m: usize, node_cap: u64) -> Result<Vec<(Vec<f64>, f64)>> {
        let n = self.zhat.len();
        let (l, d, zs) = (self.l, self.d, self.zhat);
        let mut s = DMatrix::<f64>::zeros(n, n);
        let mut dist = vec![0.0; n];
        let mut zb = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut step = vec![0.0; n];
        let mut best: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m);
        let mut imax = 0usize;
        let mut maxdist = f64::INFINITY;
        let mut nodes = 0u64;

        let mut k = n - 1;
        zb[k] = zs[k];
        z[k] = zb[k].round();
        let mut y = zb[k] - z[k];
        step[k] = sgn(y);
        loop {
            nodes += 1;
            if nodes > node_cap {
                return Err(Error::ResourceLimit { cap: node_cap });
            }
            let newdist = dist[k] + y * y / d[k];
            if newdist < maxdist {
                if k != 0 {
                    k -= 1;
                    dist[k] = newdist;
                    for i in 0..=k {
                        s[(k, i)] = s[(k + 1, i)] + (z[k + 1] - zb[k + 1]) * l[(k + 1, i)];
                    }
                    zb[k] = zs[k] + s[(k, k)];
                    z[k] = zb[k].round();
                    y = zb[k] - z[k];
                    step[k] = sgn(y);
                } else {
                    if best.len() < m {
                        if best.is_empty() || newdist > best[imax].1 {
                            imax = best.len();
                        }
                        best.push((z.clone(), newdist));
                    } else if newdist < best[imax].1 {
                        best[imax] = (z.clone(), newdist);
                        imax = (0..m).max_by(|&a, &b| best[a].1.total_cmp(&best[b].1)).unwrap_or(0);
                    }
                    if best.len() == m {
                        maxdist = best[imax].1;
                    }
                    z[0] += step[0];
                    y = zb[0] - z[0];
                    step[0] = -step[0] - sgn(step[0]);
                }
            } else {
                if k == n - 1 {
                    break;
                }
                k += 1;
                z[k] += step[k];
                y = zb[k] - z[k];
                step[k] = -step[k] - sgn(step[k]);
            }
        }
        best.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(best)
    }
}

/// The `n_best` integer candidates with the smallest quadratic residual, in
/// the original ambiguity basis, ascending by residual.
pub fn ils_search(fa: &FloatAmbiguities, n_best: usize) -> Result<Vec<IntegerCandidate>> {
    ils_search_capped(fa, n_best, DEFAULT_NODE_CAP)
}

pub fn ils_search_capped(fa: &FloatAmbiguities, n_best: usize, node_cap: u64) -> Result<Vec<IntegerCandidate>> {
    if n_best < 2 {
        return Err(Error::InvalidInput(format!("n_best must be at least 2, got {n_best}")));
    }
    if fa.dim() == 0 {
        return Err(Error::Shape("no ambiguities to resolve".into()));
    }
    if fa.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite float ambiguity".into()));
    }
    let dec = decorrelate(&fa.covariance)?;
    let zf = dec.z_transform.map(|v| v as f64);

    // Search relative to an integer shift so the enumeration runs near zero.
    let shift: Vec<f64> = fa.values.iter().map(|v| v.round()).collect();
    let frac = DVector::from_iterator(fa.dim(), fa.values.iter().zip(&shift).map(|(v, s)| v - s));
    let zhat = zf.transpose() * &frac;

    let found = Search {
        l: &dec.l,
        d: &dec.d,
        zhat: &zhat,
    }
    .run(n_best, node_cap)?;

    let zi_t = dec.z_inverse.transpose();
    Ok(found
        .into_iter()
        .map(|(zv, resid)| {
            let zi: Vec<i64> = zv.iter().map(|v| *v as i64).collect();
            let values = (0..fa.dim())
                .map(|r| (0..fa.dim()).map(|c| zi_t[(r, c)] * zi[c]).sum::<i64>() + shift[r] as i64)
                .collect();
            IntegerCandidate {
                values,
                quadratic_residual: resid.max(0.0),
            }
        })
        .collect())
}

/// `(a_hat - a)^T Q^-1 (a_hat - a)` via a Cholesky solve.
pub fn quadratic_residual(fa: &FloatAmbiguities, candidate: &[i64]) -> Result<f64> {
    let chol = fa.covariance.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let diff = DVector::from_iterator(fa.dim(), fa.values.iter().zip(candidate).map(|(a, c)| a - *c as f64));
    let w = chol.solve(&diff);
    Ok(diff.dot(&w))
}

/// Exhaustive minimiser over the integer box `round(a_hat) +- box_radius`.
/// Test oracle only; refuses more than four dimensions.
pub fn brute_force_oracle(fa: &FloatAmbiguities, box_radius: i64) -> Result<IntegerCandidate> {
    let n = fa.dim();
    if n > BRUTE_FORCE_MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "brute force limited to {BRUTE_FORCE_MAX_DIM} dimensions, got {n}"
        )));
    }
    if n == 0 || box_radius < 0 {
        return Err(Error::InvalidInput("empty problem or negative box radius".into()));
    }
    let qinv = fa.covariance.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    let center: Vec<i64> = fa.values.iter().map(|v| v.round() as i64).collect();
    let width = (2 * box_radius + 1) as usize;
    let total = width.pow(n as u32);
    let mut best: Option<IntegerCandidate> = None;
    let mut cand = vec![0i64; n];
    let mut diff = DVector::<f64>::zeros(n);
    for idx in 0..total {
        let mut rem = idx;
        for i in 0..n {
            cand[i] = center[i] + (rem % width) as i64 - box_radius;
            rem /= width;
            diff[i] = fa.values[i] - cand[i] as f64;
        }
        let r = diff.dot(&(&qinv * &diff));
        if best.as_ref().is_none_or(|b| r < b.quadratic_residual) {
            best = Some(IntegerCandidate {
                values: cand.clone(),
                quadratic_residual: r,
            });
        }
    }
    Ok(best.expect("box is non-empty"))
}

/// Accept the best candidate when the second-best residual is at least
/// `threshold` times larger.
pub fn ratio_test(best: &IntegerCandidate, second: &IntegerCandidate, threshold: f64) -> bool {
    second.quadratic_residual / best.quadratic_residual.max(RATIO_EPS) >= threshold
}
