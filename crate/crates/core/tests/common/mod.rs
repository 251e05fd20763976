#![allow(dead_code)]

use nalgebra::DMatrix;
use qomor::model::{modal_space_structure, random_stable_system, LtiQoSystem, ModalParams};

/// `A = −1`, `B = 1`, `C = 0`, `M = 1`.
pub fn s1() -> LtiQoSystem {
    LtiQoSystem::new_stable(
        DMatrix::from_element(1, 1, -1.0),
        DMatrix::from_element(1, 1, 1.0),
        None,
        vec![DMatrix::from_element(1, 1, 1.0)],
    )
    .unwrap()
}

/// Twenty seeded random stable systems with `n ≤ 20`, `m ≤ 2`, `p ≤ 2`.
pub fn random_set() -> Vec<LtiQoSystem> {
    (0..20)
        .map(|k| {
            let n = 2 + (k * 7) % 19;
            let m = 1 + k % 2;
            let p = 1 + (k / 2) % 2;
            let quad_card = n.min(1 + k % 5);
            random_stable_system(n, m, p, quad_card, 100 + k as u64).unwrap()
        })
        .collect()
}

pub fn modal(n_modes: usize, quad_card: usize, seed: u64) -> LtiQoSystem {
    modal_space_structure(&ModalParams {
        n_modes,
        m: 1,
        p: 1,
        damping_range: (0.2, 0.6),
        freq_range: (0.5, 5.0),
        quad_card,
        seed,
    })
    .unwrap()
}

/// The `n = 40` modal test system.
pub fn designated_modal() -> LtiQoSystem {
    modal(20, 4, 1)
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let nb = b.norm();
    if nb == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / nb
    }
}

pub fn eig_desc(x: &DMatrix<f64>) -> Vec<f64> {
    qomor::linalg::symmetric_eigenvalues_desc(x)
}

pub fn min_eig(x: &DMatrix<f64>) -> f64 {
    eig_desc(x).last().copied().unwrap_or(0.0)
}
