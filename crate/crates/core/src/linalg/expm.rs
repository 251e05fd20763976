use super::{count_expm, one_norm};
use crate::error::{Error, Result};
use crate::sparse::Operator;
use nalgebra::DMatrix;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^{A t}` by scaling and squaring with a diagonal Padé core.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("A", format!("{n}x{n}"), format!("{}x{}", n, a.ncols())));
    }
    if !t.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("A*t".into()));
    }
    count_expm();
    let at = a * t;
    let norm = one_norm(&at);
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(&at, coeffs, norm);
        }
    }
    let s = (norm / THETA13).log2().ceil().max(0.0);
    if s > 1000.0 {
        return Err(Error::ExpOverflow { norm });
    }
    let scaled = &at * 2f64.powi(-(s as i32));
    let mut x = pade13(&scaled, norm)?;
    for _ in 0..(s as i32) {
        x = &x * &x;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ExpOverflow { norm });
        }
    }
    Ok(x)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64], norm: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let mut powers = vec![ident.clone(), a2.clone()];
    let half = (b.len() - 1) / 2;
    for k in 2..=half {
        let next = &powers[k - 1] * &a2;
        powers.push(next);
    }
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut v = DMatrix::<f64>::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        u += p * b[2 * k + 1];
        v += p * b[2 * k];
    }
    let u = a * u;
    finish(u, v, norm)
}

fn pade13(a: &DMatrix<f64>, norm: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let b = &B13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    finish(u, v, norm)
}

fn finish(u: DMatrix<f64>, v: DMatrix<f64>, norm: f64) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = v - u;
    let x = q.lu().solve(&p).ok_or(Error::ExpOverflow { norm })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::ExpOverflow { norm });
    }
    Ok(x)
}

/// `e^{A t} B` without forming the exponential: truncated Taylor series on
/// sub-steps with `‖A h‖₁ ≤ 2`.
pub fn expm_action(a: &Operator, b: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if b.nrows() != a.dim() {
        return Err(Error::dim("B", format!("{} rows", a.dim()), b.nrows()));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("t".into()));
    }
    if t == 0.0 || b.ncols() == 0 {
        return Ok(b.clone());
    }
    let norm = a.one_norm() * t.abs();
    let steps = (norm / 2.0).ceil().max(1.0);
    if steps > 1e7 {
        return Err(Error::ExpOverflow { norm });
    }
    let h = t / steps;
    let mut f = b.clone();
    for _ in 0..(steps as usize) {
        let mut term = f.clone();
        let mut acc = f.clone();
        let mut small = 0;
        for k in 1..=60 {
            term = a.apply(&term) * (h / k as f64);
            acc += &term;
            let tn = one_norm(&term);
            let an = one_norm(&acc);
            if tn <= f64::EPSILON * an {
                small += 1;
                if small == 2 {
                    break;
                }
            } else {
                small = 0;
            }
        }
        f = acc;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::ExpOverflow { norm });
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_time_is_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matrix_exponential(&a, 0.0).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn nilpotent() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert_relative_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn scalar_and_all_pade_orders() {
        for &x in &[1e-3, 0.1, 0.5, 1.5, 4.0, 30.0, -2.0, -40.0] {
            let e = matrix_exponential(&DMatrix::from_element(1, 1, x), 1.0).unwrap();
            assert_relative_eq!(e[(0, 0)], x.exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn rotation_generator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = matrix_exponential(&a, 3.0).unwrap();
        let (s, c) = 3f64.sin_cos();
        assert_relative_eq!(e, DMatrix::from_row_slice(2, 2, &[c, s, -s, c]), epsilon = 1e-14);
    }

    #[test]
    fn overflow_is_reported() {
        let a = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(matrix_exponential(&a, 1e6), Err(Error::ExpOverflow { .. })));
    }

    #[test]
    fn action_matches_full_exponential() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[-1.0, 2.0, 0.0, -2.0, -1.0, 0.5, 0.0, 0.3, -3.0],
        );
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 1.0, -1.0, 2.0]);
        let full = matrix_exponential(&a, 2.5).unwrap() * &b;
        let act = expm_action(&Operator::new(&a), &b, 2.5).unwrap();
        assert_relative_eq!(full, act, epsilon = 1e-13);
    }
}
