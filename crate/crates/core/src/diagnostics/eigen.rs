//! Dense nonsymmetric eigenvalues: balancing, reduction to upper Hessenberg
//! form by stabilized elementary similarities, and the shifted double-step
//! Francis QR iteration.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Real;

/// Same guard as dense materialization.
pub const EIGEN_SIZE_LIMIT: usize = 2048;

/// All eigenvalues of `a`, in no particular order.
///
/// Fails with [`Error::EigenNotConverged`] once the QR sweeps exceed `30 n`.
pub fn eigenvalues<T: Real>(a: &DenseMatrix<T>) -> Result<Vec<Complex<T>>> {
    let n = a.n();
    if n > EIGEN_SIZE_LIMIT {
        return Err(Error::SizeGuard { n, limit: EIGEN_SIZE_LIMIT });
    }
    if !a.is_finite() {
        return Err(Error::Breakdown {
            solver: "eigenvalues",
            detail: "matrix has non-finite entries".into(),
        });
    }
    let mut h: Vec<Vec<T>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    balance(&mut h);
    hessenberg(&mut h);
    hqr(&mut h)
}

fn balance<T: Real>(a: &mut [Vec<T>]) {
    let n = a.len();
    let radix = T::lit(2.0);
    let sqrdx = radix * radix;
    loop {
        let mut done = true;
        for i in 0..n {
            let (mut r, mut c) = (T::zero(), T::zero());
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c == T::zero() || r == T::zero() {
                continue;
            }
            let s = c + r;
            let mut f = T::one();
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sqrdx;
            }
            if (c + r) / f < T::lit(0.95) * s {
                done = false;
                let g = T::one() / f;
                a[i].iter_mut().for_each(|v| *v *= g);
                a.iter_mut().for_each(|row| row[i] *= f);
            }
        }
        if done {
            break;
        }
    }
}

fn hessenberg<T: Real>(a: &mut [Vec<T>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x = T::zero();
        let mut piv = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                piv = j;
            }
        }
        if piv != m {
            a.swap(piv, m);
            for row in a.iter_mut() {
                row.swap(piv, m);
            }
        }
        if x != T::zero() {
            for i in m + 1..n {
                let mut y = a[i][m - 1];
                if y != T::zero() {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        let v = a[m][j];
                        a[i][j] -= y * v;
                    }
                    for row in a.iter_mut() {
                        let v = row[i];
                        row[m] += y * v;
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut().take(i.saturating_sub(1)) {
            *v = T::zero();
        }
    }
}

fn sign<T: Real>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

fn hqr<T: Real>(a: &mut [Vec<T>]) -> Result<Vec<Complex<T>>> {
    let n = a.len() as isize;
    let eps = T::epsilon();
    let mut wr = vec![Complex::new(T::zero(), T::zero()); n as usize];
    macro_rules! at {
        ($i:expr, $j:expr) => {
            a[($i) as usize][($j) as usize]
        };
    }
    let mut anorm = T::zero();
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            anorm += at!(i, j).abs();
        }
    }
    let budget = 30 * n.max(1) as usize;
    let mut total = 0usize;
    let mut nn = n - 1;
    let mut t = T::zero();
    let (mut p, mut q, mut r) = (T::zero(), T::zero(), T::zero());
    let (mut x, mut y, mut z, mut w);
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = at!(l - 1, l - 1).abs() + at!(l, l).abs();
                if s == T::zero() {
                    s = anorm;
                }
                if at!(l, l - 1).abs() <= eps * s {
                    at!(l, l - 1) = T::zero();
                    break;
                }
                l -= 1;
            }
            x = at!(nn, nn);
            if l == nn {
                wr[nn as usize] = Complex::new(x + t, T::zero());
                nn -= 1;
            } else {
                y = at!(nn - 1, nn - 1);
                w = at!(nn, nn - 1) * at!(nn - 1, nn);
                if l == nn - 1 {
                    p = T::lit(0.5) * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= T::zero() {
                        z = p + sign(z, p);
                        let hi = x + z;
                        let lo = if z != T::zero() { x - w / z } else { hi };
                        wr[(nn - 1) as usize] = Complex::new(hi, T::zero());
                        wr[nn as usize] = Complex::new(lo, T::zero());
                    } else {
                        wr[nn as usize] = Complex::new(x + p, -z);
                        wr[(nn - 1) as usize] = Complex::new(x + p, z);
                    }
                    nn -= 2;
                } else {
                    if total >= budget {
                        return Err(Error::EigenNotConverged(total));
                    }
                    if its > 0 && its.is_multiple_of(10) {
                        // exceptional shift
                        t += x;
                        for i in 0..=nn {
                            at!(i, i) -= x;
                        }
                        let s = at!(nn, nn - 1).abs() + at!(nn - 1, nn - 2).abs();
                        x = T::lit(0.75) * s;
                        y = x;
                        w = T::lit(-0.4375) * s * s;
                    }
                    its += 1;
                    total += 1;
                    let mut m = nn - 2;
                    while m >= l {
                        z = at!(m, m);
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / at!(m + 1, m) + at!(m, m + 1);
                        q = at!(m + 1, m + 1) - z - r - s;
                        r = at!(m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = at!(m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (at!(m - 1, m - 1).abs() + z.abs() + at!(m + 1, m + 1).abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nn - 1 {
                        at!(i + 2, i) = T::zero();
                        if i != m {
                            at!(i + 2, i - 1) = T::zero();
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = at!(k, k - 1);
                            q = at!(k + 1, k - 1);
                            r = if k + 1 != nn { at!(k + 2, k - 1) } else { T::zero() };
                            x = p.abs() + q.abs() + r.abs();
                            if x != T::zero() {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != T::zero() {
                            if k == m {
                                if l != m {
                                    at!(k, k - 1) = -at!(k, k - 1);
                                }
                            } else {
                                at!(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = at!(k, j) + q * at!(k + 1, j);
                                if k + 1 != nn {
                                    p += r * at!(k + 2, j);
                                    at!(k + 2, j) -= p * z;
                                }
                                at!(k + 1, j) -= p * y;
                                at!(k, j) -= p * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * at!(i, k) + y * at!(i, k + 1);
                                if k + 1 != nn {
                                    p += z * at!(i, k + 2);
                                    at!(i, k + 2) -= p * r;
                                }
                                at!(i, k + 1) -= p * q;
                                at!(i, k) -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok(wr)
}

/// Recovers an eigenvector for the computed eigenvalue `lambda` by inverse
/// iteration and returns `(v, ||A v - lambda v|| / ||A||_F)`.
pub fn eigenpair_residual<T: Real>(
    a: &DenseMatrix<T>,
    lambda: Complex<T>,
    seed: u64,
) -> Result<(Vec<Complex<T>>, T)> {
    let n = a.n();
    let scale = a.frobenius_norm().max(T::min_positive_value());
    // nudge off the exact eigenvalue so the shifted matrix is numerically invertible
    let shift = lambda + Complex::new(T::lit(1e3) * T::epsilon() * scale, T::zero());
    let mut m: Vec<Vec<Complex<T>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let v = Complex::new(a[(i, j)], T::zero());
                    if i == j {
                        v - shift
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let perm = complex_lu(&mut m)?;
    let mut state = seed | 1;
    let mut v: Vec<Complex<T>> = (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            Complex::new(T::lit((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5), T::zero())
        })
        .collect();
    for _ in 0..3 {
        v = complex_lu_solve(&m, &perm, &v);
        let nrm = v.iter().map(|c| c.norm_sqr()).fold(T::zero(), |s, x| s + x).sqrt();
        if !(nrm > T::zero()) || !nrm.is_finite() {
            return Err(Error::Singular(0));
        }
        v.iter_mut().for_each(|c| *c /= nrm);
    }
    let mut res = T::zero();
    for i in 0..n {
        let mut s = -lambda * v[i];
        for j in 0..n {
            s += v[j] * a[(i, j)];
        }
        res += s.norm_sqr();
    }
    Ok((v, res.sqrt() / scale))
}

fn complex_lu<T: Real>(m: &mut [Vec<Complex<T>>]) -> Result<Vec<usize>> {
    let n = m.len();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| m[i][k].norm().partial_cmp(&m[j][k].norm()).unwrap())
            .unwrap();
        m.swap(k, piv);
        perm.swap(k, piv);
        let d = m[k][k];
        if d.norm() == T::zero() {
            m[k][k] = Complex::new(T::epsilon(), T::zero());
        }
        let d = m[k][k];
        for i in k + 1..n {
            let f = m[i][k] / d;
            m[i][k] = f;
            for j in k + 1..n {
                let v = m[k][j];
                m[i][j] -= f * v;
            }
        }
    }
    Ok(perm)
}

fn complex_lu_solve<T: Real>(m: &[Vec<Complex<T>>], perm: &[usize], b: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = m.len();
    let mut x: Vec<Complex<T>> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for j in 0..i {
            let v = x[j];
            x[i] -= m[i][j] * v;
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            let v = x[j];
            x[i] -= m[i][j] * v;
        }
        x[i] /= m[i][i];
    }
    x
}
