mod common;

use common::{designated_modal, eig_desc};
use nalgebra::DMatrix;
use proptest::prelude::*;
use qomor::error::Error;
use qomor::gramians::gram_infinite;
use qomor::lowrank::{AdiOptions, LaguerreConfig};
use qomor::model::{random_stable_system, FrequencyBand, Scenario, TimeInterval};
use qomor::reduction::{eigenvalue_decay, reduce, square_root_reduce, BackendConfig, ReductionReport};

#[test]
fn rom_of_rom_keeps_the_leading_ladder() {
    let sys = designated_modal();
    let (rom, _) = reduce(&sys, Scenario::Infinite, &BackendConfig::Dense, 20).unwrap();
    let (_, again) = reduce(&rom.system, Scenario::Infinite, &BackendConfig::Dense, 5).unwrap();
    let (_, direct) = reduce(&sys, Scenario::Infinite, &BackendConfig::Dense, 5).unwrap();
    for (a, b) in again.sigma.iter().zip(&direct.sigma) {
        assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn low_rank_backends_track_dense_sigma() {
    let sys = designated_modal();
    let scenario = Scenario::TimeLimited(TimeInterval::new(0.0, 2.0).unwrap());
    let (_, dense) = reduce(&sys, scenario, &BackendConfig::Dense, 6).unwrap();
    let adi = BackendConfig::Adi(AdiOptions { n_shifts: 30, max_iter: 80, rel_residual_tol: 1e-10, shifts: None });
    let lag = BackendConfig::Laguerre(LaguerreConfig::new(1.0, 40).unwrap());
    for backend in [adi, lag] {
        let (rom, rep) = reduce(&sys, scenario, &backend, 6).unwrap();
        assert_eq!(rom.system.n(), 6);
        assert!(rep.controllability.is_some() && rep.observability.is_some());
        for (a, b) in rep.sigma.iter().zip(&dense.sigma) {
            assert!(((a - b) / b).abs() < 1e-2, "{backend:?}: {a} vs {b}");
        }
    }
}

#[test]
fn report_serializes() {
    let sys = designated_modal();
    let scenario = Scenario::FrequencyLimited(FrequencyBand::new(3.0, 4.0).unwrap());
    let (_, rep) = reduce(&sys, scenario, &BackendConfig::Dense, 4).unwrap();
    assert!(rep.timings.f_omega.is_some());
    assert_eq!(rep.sigma.len(), 4);
    assert_eq!(rep.sigma.len() + rep.discarded_sigma.len(), sys.n());
    let json = serde_json::to_string(&rep).unwrap();
    let back: ReductionReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rep);
}

#[test]
fn controllability_decay_of_modal_system() {
    let p = gram_infinite(&designated_modal()).unwrap().p;
    let d = eigenvalue_decay(&p).unwrap();
    assert_eq!(d[0], 1.0);
    assert!(d.iter().all(|v| *v > 0.0));
    assert!(d.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn floor_and_rank_errors() {
    let sys = random_stable_system(6, 1, 1, 1, 3).unwrap();
    let z = DMatrix::from_fn(6, 2, |i, j| ((i + 2 * j) as f64).cos());
    let mut y = z.clone();
    y.column_mut(1).scale_mut(1e-14);
    let r = square_root_reduce(&sys, &z, &y, 2, Scenario::Infinite, qomor::model::GramianBackend::Dense);
    assert!(matches!(r, Err(Error::BelowFloor { order: 2, .. })));
    let r = square_root_reduce(&sys, &z, &y, 3, Scenario::Infinite, qomor::model::GramianBackend::Dense);
    assert!(matches!(r, Err(Error::RankExceeded { requested: 3, max: 2 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sigma_invariant_under_rotation(n in 3usize..9, seed in 0u64..500, angle in 0.0f64..6.0) {
        let sys = random_stable_system(n, 1, 2, 2, seed).unwrap();
        let q = DMatrix::from_fn(n, n, |i, j| (angle * (i + 1) as f64 + (j * j) as f64).sin()).qr().q();
        let moved = sys.orthogonal_transform(&q).unwrap();
        let scenario = Scenario::TimeLimited(TimeInterval::new(0.0, 1.0).unwrap());
        let (_, a) = reduce(&sys, scenario, &BackendConfig::Dense, 2).unwrap();
        let (_, b) = reduce(&moved, scenario, &BackendConfig::Dense, 2).unwrap();
        for (x, y) in a.sigma.iter().zip(&b.sigma) {
            prop_assert!(((x - y) / x).abs() <= 1e-8);
        }
    }

    #[test]
    fn decay_is_normalized_and_sorted(n in 1usize..8, seed in 0u64..500) {
        let sys = random_stable_system(n.max(2), 1, 1, 1, seed).unwrap();
        let p = gram_infinite(&sys).unwrap().p;
        let d = eigenvalue_decay(&p).unwrap();
        prop_assert_eq!(d[0], 1.0);
        prop_assert!(d.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(d.len(), eig_desc(&p).len());
    }
}
