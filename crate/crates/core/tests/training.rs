//! The training iteration at toy scale: update partition, null updates,
//! determinism, state export and a finite 200-iteration run.

use alphagan_core::networks::{AlphaGanBundle, Preset};
use alphagan_core::train::{Trainer, TrainingConfig, UpdateRatio};
use alphagan_core::volume::{generate_phantom, preprocess, AugmentationPolicy, Preprocessing, VoxelGrid};

fn toy_config() -> TrainingConfig {
    let mut c = TrainingConfig::for_preset(Preset::SigmaRat2);
    c.volume = [16; 3];
    c.width = 0.125;
    c.iterations = 200;
    c.augmentation = AugmentationPolicy::none();
    c.seed = 3;
    c
}

fn data(n: u64) -> Vec<VoxelGrid> {
    (0..n)
        .map(|i| preprocess(&generate_phantom(i, [16; 3], 3).unwrap(), &Preprocessing::cube(16)).unwrap().grid)
        .collect()
}

/// Flattened parameters of G, D, E and C.
fn snapshot(b: &AlphaGanBundle<f32>) -> [Vec<f32>; 4] {
    b.networks().map(|n| n.parameters().iter().flat_map(|p| p.value().data().to_vec()).collect())
}

#[test]
fn each_phase_updates_only_its_group() {
    let d = data(8);
    for (ratio, changed) in [
        (UpdateRatio { d: 1, c: 0, g: 0 }, [false, true, false, false]),
        (UpdateRatio { d: 0, c: 1, g: 0 }, [false, false, false, true]),
        (UpdateRatio { d: 0, c: 0, g: 1 }, [true, false, true, false]),
    ] {
        let mut t = Trainer::<f32>::new(TrainingConfig { ratio, ..toy_config() }).unwrap();
        let before = snapshot(&t.bundle);
        t.step(&d).unwrap();
        let after = snapshot(&t.bundle);
        for i in 0..4 {
            assert_eq!(before[i] != after[i], changed[i], "{ratio:?} network {i}");
        }
    }
}

#[test]
fn zero_learning_rate_is_a_null_update() {
    let mut c = toy_config();
    c.optimizers.set_learning_rate(0.0);
    let mut t = Trainer::<f32>::new(c).unwrap();
    let before = snapshot(&t.bundle);
    let r = t.step(&data(8)).unwrap();
    assert!(r.l_d.is_finite() && r.l_c.is_finite() && r.l_g.is_finite());
    assert_eq!(before, snapshot(&t.bundle));
}

#[test]
fn identical_configs_train_identically() {
    let d = data(8);
    let run = || {
        let mut t = Trainer::<f32>::new(toy_config()).unwrap();
        let records: Vec<_> = (0..3).map(|_| t.step(&d).unwrap()).collect();
        (records, t.export_state())
    };
    let (ra, sa) = run();
    let (rb, sb) = run();
    assert_eq!(ra, rb);
    assert_eq!(sa, sb);
}

#[test]
fn imported_state_continues_the_same_trajectory() {
    let d = data(8);
    let mut a = Trainer::<f32>::new(toy_config()).unwrap();
    for _ in 0..2 {
        a.step(&d).unwrap();
    }
    let state = a.export_state();
    let expected: Vec<_> = (0..2).map(|_| a.step(&d).unwrap()).collect();
    let mut b = Trainer::<f32>::new(TrainingConfig { seed: 99, ..toy_config() }).unwrap();
    b.import_state(&state).unwrap();
    assert_eq!(b.iteration(), 2);
    let got: Vec<_> = (0..2).map(|_| b.step(&d).unwrap()).collect();
    for (x, y) in expected.iter().zip(&got) {
        for (p, q) in [(x.l_d, y.l_d), (x.l_c, y.l_c), (x.l_g, y.l_g), (x.gp_d, y.gp_d), (x.gp_c, y.gp_c)] {
            assert!((p - q).abs() <= 1e-6 * p.abs().max(1.0), "{p} vs {q}");
        }
    }
}

#[test]
fn fewer_volumes_than_the_batch_fall_back_to_replacement() {
    let mut t = Trainer::<f32>::new(toy_config()).unwrap();
    assert!(t.needs_replacement(2));
    assert!(!t.needs_replacement(4));
    let r = t.step(&data(2)).unwrap();
    assert!(r.l_g.is_finite());
    assert!(Trainer::<f32>::new(TrainingConfig { batch_size: 1, ..toy_config() }).is_err());
}

#[test]
fn toy_run_stays_finite_and_bounded() {
    let d = data(16);
    let config = TrainingConfig {
        augmentation: AugmentationPolicy::standard().with_fill(-1.0),
        ..toy_config()
    };
    let bound = 10.0 * config.weights.lambda1;
    let mut t = Trainer::<f32>::new(config).unwrap();
    for _ in 0..200 {
        let r = t.step(&d).unwrap();
        for v in [r.l_d, r.l_c, r.l_g, r.gp_d, r.gp_c] {
            assert!(v.is_finite(), "iteration {}: {r:?}", r.iteration);
        }
        assert!(r.l_d.abs() < bound, "iteration {}: L_D {}", r.iteration, r.l_d);
    }
    for net in t.bundle.networks() {
        assert!(net.parameters().iter().all(|p| p.value().is_finite()));
    }
}
