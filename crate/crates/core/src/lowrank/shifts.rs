use crate::error::{Error, Result};
use crate::linalg::{diagonal_blocks, RealSchur};
use crate::model::LtiQoSystem;
use nalgebra::Complex;

type C64 = Complex<f64>;

/// ADI shifts chosen from the dominant poles of `(A, B, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSelection {
    /// Conjugate-closed, each complex shift followed by its conjugate.
    pub shifts: Vec<C64>,
    /// Residue magnitudes of the selected poles (one entry per pole or pair).
    pub residues: Vec<f64>,
    /// `A` looked defective; poles were ranked by `|λ|` instead.
    pub defective_fallback: bool,
    /// The quadratic maps `M_i` take no part in the ranking.
    pub ignores_quadratic_terms: bool,
}

struct Pole {
    lambda: C64,
    residue: f64,
    defective: bool,
}

/// Ranks the poles of `A` by `‖C x‖ ‖yᴴ B‖ / (|yᴴ x| |Re λ|)` and returns up
/// to `k` mirrored shifts `−|Re λ| ± j Im λ`. A pair occupies two slots and is
/// skipped when only one slot remains.
pub fn dominant_shifts(sys: &LtiQoSystem, k: usize) -> Result<ShiftSelection> {
    let n = sys.n();
    if k > n {
        return Err(Error::InvalidArgument(format!("requested {k} shifts for n = {n}")));
    }
    let mut sel = ShiftSelection {
        shifts: vec![],
        residues: vec![],
        defective_fallback: false,
        ignores_quadratic_terms: true,
    };
    if k == 0 {
        return Ok(sel);
    }
    sys.require_stable()?;
    let mut poles = match diagonal_blocks(sys.a()) {
        Some(blocks) => block_poles(sys, &blocks),
        None => schur_poles(sys)?,
    };
    if poles.iter().any(|p| p.defective) {
        sel.defective_fallback = true;
        poles.sort_by(|a, b| a.lambda.norm().total_cmp(&b.lambda.norm()));
    } else {
        poles.sort_by(|a, b| b.residue.total_cmp(&a.residue));
    }
    for pole in poles {
        let free = k - sel.shifts.len();
        if free == 0 {
            break;
        }
        let p = C64::new(-pole.lambda.re.abs(), pole.lambda.im.abs());
        if p.im == 0.0 {
            sel.shifts.push(p);
        } else if free >= 2 {
            sel.shifts.push(p);
            sel.shifts.push(p.conj());
        } else {
            continue;
        }
        sel.residues.push(pole.residue);
    }
    Ok(sel)
}

fn residue(cx: f64, yb: f64, overlap: f64, lambda: C64) -> f64 {
    cx * yb / overlap.max(f64::MIN_POSITIVE) / lambda.re.abs().max(f64::MIN_POSITIVE)
}

/// Poles of a block-diagonal `A` from closed-form 2×2 eigenvectors. Only the
/// member with `Im λ ≥ 0` of each complex pair is listed.
fn block_poles(sys: &LtiQoSystem, blocks: &[(usize, usize)]) -> Vec<Pole> {
    let a = sys.a();
    let b = sys.b();
    let c = sys.c();
    let use_c = c.iter().any(|v| *v != 0.0);
    let zero = C64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(a.nrows());
    for &(s, size) in blocks {
        let mut cands: Vec<(C64, [C64; 2], [C64; 2], bool)> = Vec::new();
        if size == 1 {
            let one = C64::new(1.0, 0.0);
            cands.push((C64::new(a[(s, s)], 0.0), [one, zero], [one, zero], false));
        } else {
            let (p, q, r, t) = (a[(s, s)], a[(s, s + 1)], a[(s + 1, s)], a[(s + 1, s + 1)]);
            let half_tr = 0.5 * (p + t);
            let disc = 0.25 * (p - t) * (p - t) + q * r;
            let scale = p.abs().max(q.abs()).max(r.abs()).max(t.abs());
            let defective = disc.abs() <= 1e-14 * scale * scale;
            let lams = if disc < 0.0 {
                vec![C64::new(half_tr, (-disc).sqrt())]
            } else {
                let sq = disc.sqrt();
                vec![C64::new(half_tr + sq, 0.0), C64::new(half_tr - sq, 0.0)]
            };
            for lam in lams {
                let x = if q != 0.0 { [C64::new(q, 0.0), lam - p] } else { [lam - t, C64::new(r, 0.0)] };
                let lc = lam.conj();
                let y = if r != 0.0 { [C64::new(r, 0.0), lc - p] } else { [lc - t, C64::new(q, 0.0)] };
                cands.push((lam, x, y, defective));
            }
        }
        for (lambda, x, y, defective) in cands {
            let right = if use_c {
                (0..c.nrows())
                    .map(|row| (x[0] * c[(row, s)] + if size == 2 { x[1] * c[(row, s + 1)] } else { zero }).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            } else {
                (x[0].norm_sqr() + x[1].norm_sqr()).sqrt()
            };
            let left = (0..b.ncols())
                .map(|col| (y[0].conj() * b[(s, col)] + if size == 2 { y[1].conj() * b[(s + 1, col)] } else { zero }).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let overlap = (y[0].conj() * x[0] + y[1].conj() * x[1]).norm();
            out.push(Pole { lambda, residue: residue(right, left, overlap, lambda), defective });
        }
    }
    out
}

fn schur_poles(sys: &LtiQoSystem) -> Result<Vec<Pole>> {
    let schur = RealSchur::new(sys.a())?.to_complex();
    let scale = schur.t().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut out = Vec::new();
    for t in schur.triplets(sys.b(), sys.c()) {
        let mut lambda = t.lambda;
        if lambda.im.abs() <= 1e-12 * scale {
            lambda.im = 0.0;
        }
        if lambda.im < 0.0 {
            continue;
        }
        out.push(Pole {
            lambda,
            residue: residue(t.right_norm, t.left_norm, t.overlap, lambda),
            defective: t.defective,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use approx::assert_relative_eq;

    fn sys(a: DMatrix<f64>, b: DMatrix<f64>, c: Option<DMatrix<f64>>) -> LtiQoSystem {
        let n = a.nrows();
        LtiQoSystem::new_stable(a, b, c, vec![DMatrix::identity(n, n)]).unwrap()
    }

    #[test]
    fn scalar() {
        let s = sys(DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0), None);
        let sel = dominant_shifts(&s, 1).unwrap();
        assert_eq!(sel.shifts, vec![C64::new(-1.0, 0.0)]);
        assert!(dominant_shifts(&s, 0).unwrap().shifts.is_empty());
        assert!(dominant_shifts(&s, 2).is_err());
    }

    #[test]
    fn modal_block_pair() {
        let (w, z) = (1.0, 0.1);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, w, -w, -2.0 * z * w]);
        let s = sys(a, DMatrix::from_column_slice(2, 1, &[0.0, 1.0]), Some(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])));
        let sel = dominant_shifts(&s, 2).unwrap();
        assert_eq!(sel.shifts.len(), 2);
        assert_relative_eq!(sel.shifts[0].re, -0.1, epsilon = 1e-14);
        assert_relative_eq!(sel.shifts[0].im, 0.99498743710662, epsilon = 1e-12);
        assert_eq!(sel.shifts[1], sel.shifts[0].conj());
        // One slot cannot hold a pair.
        assert!(dominant_shifts(&s, 1).unwrap().shifts.is_empty());
    }

    #[test]
    fn block_path_matches_schur_path() {
        let a = DMatrix::from_row_slice(
            5,
            5,
            &[
                -0.1, 2.0, 0.0, 0.0, 0.0, //
                -2.0, -0.3, 0.0, 0.0, 0.0, //
                0.0, 0.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, -0.5, 0.7, //
                0.0, 0.0, 0.0, -0.2, -2.0,
            ],
        );
        let b = DMatrix::from_column_slice(5, 2, &[1.0, -0.5, 2.0, 0.3, 1.1, 0.0, 1.0, 0.4, -1.0, 0.2]);
        let c = DMatrix::from_row_slice(1, 5, &[0.5, 1.0, -1.0, 0.2, 0.9]);
        let s = sys(a, b, Some(c));
        let blocks = diagonal_blocks(s.a()).unwrap();
        let mut fast: Vec<(f64, f64, f64)> =
            block_poles(&s, &blocks).iter().map(|p| (p.lambda.re, p.lambda.im, p.residue)).collect();
        let mut slow: Vec<(f64, f64, f64)> =
            schur_poles(&s).unwrap().iter().map(|p| (p.lambda.re, p.lambda.im, p.residue)).collect();
        fast.sort_by(|a, b| a.0.total_cmp(&b.0));
        slow.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(fast.len(), slow.len());
        for (f, s) in fast.iter().zip(&slow) {
            assert_relative_eq!(f.0, s.0, epsilon = 1e-12);
            assert_relative_eq!(f.1, s.1, epsilon = 1e-12);
            assert_relative_eq!(f.2, s.2, max_relative = 1e-9);
        }
    }

    #[test]
    fn conjugate_closed_and_left_half_plane() {
        let s = crate::model::random_stable_system(12, 2, 1, 3, 5).unwrap();
        let sel = dominant_shifts(&s, 7).unwrap();
        assert!(sel.shifts.len() <= 7);
        let mut i = 0;
        while i < sel.shifts.len() {
            let p = sel.shifts[i];
            assert!(p.re < 0.0);
            if p.im != 0.0 {
                assert_eq!(sel.shifts[i + 1], p.conj());
                i += 2;
            } else {
                i += 1;
            }
        }
    }
}
