//! Evaluation metrics: closed forms, brute-force oracles and properties.

use alphagan_core::metrics::{
    dice, evaluate_sets, mae, mmd, ms_ssim_3d, ms_ssim_batch_protocol, ncc, Kernel, ProtocolConfig, SsimConfig,
};
use alphagan_core::random::SeedStream;
use alphagan_core::volume::{generate_phantom, VoxelGrid};
use proptest::prelude::*;

fn noise(dims: [usize; 3], seed: u64) -> VoxelGrid {
    let mut s = SeedStream::new(seed);
    VoxelGrid::from_fn(dims, |_, _, _| s.normal() as f32)
}

/// Biased estimate from every pairwise kernel value.
fn brute_force_mmd(a: &[&VoxelGrid], b: &[&VoxelGrid], k: impl Fn(&VoxelGrid, &VoxelGrid) -> f64) -> f64 {
    let mean = |p: &[&VoxelGrid], q: &[&VoxelGrid]| {
        let mut s = 0.0;
        for x in p {
            for y in q {
                s += k(x, y);
            }
        }
        s / (p.len() * q.len()) as f64
    };
    mean(a, a) + mean(b, b) - 2.0 * mean(a, b)
}

fn dot(x: &VoxelGrid, y: &VoxelGrid) -> f64 {
    x.data().iter().zip(y.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

pub fn identities() {
    let x = generate_phantom(1, [16; 3], 3).unwrap();
    let cfg = SsimConfig::for_extent(16);
    assert!((ms_ssim_3d(&x, &x, &cfg).unwrap() - 1.0).abs() < 1e-6);
    assert!((ncc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    assert!((ncc(&x, &x.map(|v| -v)).unwrap() + 1.0).abs() < 1e-12);
    assert!((ncc(&x, &x.map(|v| 2.5 * v + 3.0)).unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(mae(&x, &x).unwrap(), 0.0);
    assert_eq!(mae(&VoxelGrid::filled([4; 3], 0.0), &VoxelGrid::filled([4; 3], 1.0)).unwrap(), 1.0);
    let set = [&x, &x, &x];
    assert!(mmd(&set, &set, Kernel::Linear).unwrap() < 1e-6);
    assert!(mmd(&set, &set, Kernel::Gaussian { bandwidth: 4.0 }).unwrap() < 1e-6);
}

#[test]
fn structure_against_noise_scores_low() {
    let x = generate_phantom(2, [32; 3], 3).unwrap();
    let y = noise([32; 3], 3);
    let v = ms_ssim_3d(&x, &y, &SsimConfig::for_extent(32)).unwrap();
    assert!(v < 0.2, "{v}");
}

#[test]
fn ms_ssim_is_invariant_to_a_joint_positive_rescaling() {
    let x = generate_phantom(4, [16; 3], 3).unwrap();
    let y = generate_phantom(5, [16; 3], 3).unwrap();
    let cfg = SsimConfig::for_extent(16);
    let base = ms_ssim_3d(&x, &y, &cfg).unwrap();
    for a in [0.25f32, 3.0, 40.0] {
        let mapped = ms_ssim_3d(&x.map(|v| a * v), &y.map(|v| a * v), &cfg).unwrap();
        assert!((base - mapped).abs() < 1e-4, "{a}: {base} {mapped}");
    }
}

#[test]
fn too_many_scales_is_a_domain_error() {
    let x = noise([16; 3], 1);
    let cfg = SsimConfig { scales: 5, ..SsimConfig::default() };
    assert!(matches!(ms_ssim_3d(&x, &x, &cfg), Err(alphagan_core::Error::Domain(_))));
}

#[test]
fn linear_discrepancy_matches_pairwise_sums() {
    let a: Vec<VoxelGrid> = (0..4).map(|i| noise([4; 3], i)).collect();
    let b: Vec<VoxelGrid> = (0..5).map(|i| noise([4; 3], 10 + i).map(|v| v + 0.3)).collect();
    let (ra, rb): (Vec<&VoxelGrid>, Vec<&VoxelGrid>) = (a.iter().collect(), b.iter().collect());
    let fast = mmd(&ra, &rb, Kernel::Linear).unwrap();
    let slow = brute_force_mmd(&ra, &rb, dot);
    assert!((fast - slow).abs() < 1e-6 * slow.max(1.0));

    let h = 5.0;
    let gauss = |x: &VoxelGrid, y: &VoxelGrid| {
        let d: f64 = x.data().iter().zip(y.data()).map(|(&p, &q)| (p as f64 - q as f64).powi(2)).sum();
        (-d / (2.0 * h * h)).exp()
    };
    let fast = mmd(&ra, &rb, Kernel::Gaussian { bandwidth: h }).unwrap();
    assert!((fast - brute_force_mmd(&ra, &rb, gauss)).abs() < 1e-9);

    // constants 0 versus 1 over M voxels
    let zeros = [VoxelGrid::filled([4; 3], 0.0), VoxelGrid::filled([4; 3], 0.0)];
    let ones = [VoxelGrid::filled([4; 3], 1.0), VoxelGrid::filled([4; 3], 1.0)];
    let v = mmd(&zeros.iter().collect::<Vec<_>>(), &ones.iter().collect::<Vec<_>>(), Kernel::Linear).unwrap();
    assert_eq!(v, 64.0);
}

#[test]
fn discrepancy_shrinks_as_the_means_approach() {
    let a: Vec<VoxelGrid> = (0..6).map(|i| noise([4; 3], i)).collect();
    let ra: Vec<&VoxelGrid> = a.iter().collect();
    let mut last = f64::INFINITY;
    for shift in [2.0f32, 1.5, 1.0, 0.5, 0.1] {
        let b: Vec<VoxelGrid> = (0..6).map(|i| noise([4; 3], 20 + i).map(|v| v + shift)).collect();
        let rb: Vec<&VoxelGrid> = b.iter().collect();
        for kernel in [Kernel::Linear] {
            let v = mmd(&ra, &rb, kernel).unwrap();
            assert!(v < last, "shift {shift}: {v} !< {last}");
            last = v;
        }
    }
}

#[test]
fn undersized_sets_are_contract_errors() {
    let x = noise([4; 3], 0);
    assert!(matches!(mmd(&[&x], &[&x, &x], Kernel::Linear), Err(alphagan_core::Error::Contract(_))));
    assert!(matches!(ncc(&x, &VoxelGrid::filled([4; 3], 1.0)), Err(alphagan_core::Error::Domain(_))));
    assert!(matches!(mae(&x, &VoxelGrid::filled([4, 4, 5], 1.0)), Err(alphagan_core::Error::Contract(_))));
}

pub fn dice_closed_forms() {
    let m: Vec<u32> = (0..64).map(|i| (i % 4) as u32).collect();
    let s = dice(&m, &m, &[1, 2, 3]).unwrap();
    assert!(s.per_class.iter().all(|(_, v)| *v == Some(1.0)));
    assert_eq!(s.global, Some(1.0));

    let a: Vec<u32> = (0..8).map(|i| u32::from(i < 4)).collect();
    let b: Vec<u32> = (0..8).map(|i| u32::from(i >= 4)).collect();
    assert_eq!(dice(&a, &b, &[1]).unwrap().global, Some(0.0));
    let half: Vec<u32> = (0..8).map(|i| u32::from((2..6).contains(&i))).collect();
    assert_eq!(dice(&a, &half, &[1]).unwrap().global, Some(0.5));
    let absent = dice(&a, &a, &[1, 2]).unwrap();
    assert_eq!(absent.per_class[1], (2, None));
    assert_eq!(absent.global, Some(1.0));
}

#[test]
fn protocol_counts_and_determinism() {
    let set: Vec<VoxelGrid> = (0..8).map(|i| generate_phantom(i, [16; 3], 3).unwrap()).collect();
    let cfg = SsimConfig::for_extent(16);
    let draw = |n: usize, s: &mut SeedStream| -> alphagan_core::Result<Vec<VoxelGrid>> {
        let picks = alphagan_core::metrics::sample_without_replacement(&set, n, s)?;
        Ok(picks.into_iter().cloned().collect())
    };
    let a = ms_ssim_batch_protocol(draw, 2, 8, &cfg, &mut SeedStream::new(1)).unwrap();
    let b = ms_ssim_batch_protocol(draw, 2, 8, &cfg, &mut SeedStream::new(1)).unwrap();
    assert_eq!(a, b);
    let same = |n: usize, _: &mut SeedStream| Ok(vec![set[0].clone(); n]);
    let one = ms_ssim_batch_protocol(same, 1, 8, &cfg, &mut SeedStream::new(2)).unwrap();
    assert!((one.mean - 1.0).abs() < 1e-6);
    let too_few = |_: usize, s: &mut SeedStream| -> alphagan_core::Result<Vec<VoxelGrid>> {
        let picks = alphagan_core::metrics::sample_without_replacement(&set[..4], 8, s)?;
        Ok(picks.into_iter().cloned().collect())
    };
    assert!(matches!(
        ms_ssim_batch_protocol(too_few, 1, 8, &cfg, &mut SeedStream::new(3)),
        Err(alphagan_core::Error::Contract(_))
    ));

    let mut p = ProtocolConfig::scaled(8, 16, 4);
    p.pair_comparisons = 50;
    p.mmd_trials = 5;
    p.ms_ssim_trials = 1;
    let other: Vec<VoxelGrid> = (0..8).map(|i| noise([16; 3], i)).collect();
    let r1 = evaluate_sets(&set, &other, &p).unwrap();
    let r2 = evaluate_sets(&set, &other, &p).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.ncc.count, 50);
    assert!(r1.mae.std >= 0.0 && r1.ms_ssim_generated.std >= 0.0);
}

fn grid(dims: [usize; 3]) -> impl Strategy<Value = VoxelGrid> {
    let n = dims.iter().product::<usize>();
    prop::collection::vec(-1.0f32..1.0, n).prop_map(move |v| VoxelGrid::new(dims, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symmetric_metrics(x in grid([4, 3, 5]), y in grid([4, 3, 5])) {
        prop_assert!((mae(&x, &y).unwrap() - mae(&y, &x).unwrap()).abs() < 1e-12);
        let (a, b) = (ncc(&x, &y).unwrap(), ncc(&y, &x).unwrap());
        prop_assert!((a - b).abs() < 1e-12 && (-1.0..=1.0).contains(&a));
        let (s1, s2) = ([&x, &y], [&y, &x, &x]);
        let d1 = mmd(&s1, &s2, Kernel::Linear).unwrap();
        let d2 = mmd(&s2, &s1, Kernel::Linear).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-6 && d1 >= 0.0);
    }

    #[test]
    fn ms_ssim_stays_in_the_unit_interval(x in grid([8, 8, 8]), y in grid([8, 8, 8])) {
        let v = ms_ssim_3d(&x, &y, &SsimConfig::for_extent(8)).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn dice_is_symmetric_and_bounded(a in prop::collection::vec(0u32..3, 40), b in prop::collection::vec(0u32..3, 40)) {
        let (p, q) = (dice(&a, &b, &[1, 2]).unwrap(), dice(&b, &a, &[1, 2]).unwrap());
        prop_assert_eq!(&p, &q);
        for (_, v) in &p.per_class {
            if let Some(v) = v {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}

/// These checks are public so the acceptance binary can run them too.
mod shared {
    #[test]
    fn identities() {
        super::identities();
    }
    #[test]
    fn dice_closed_forms() {
        super::dice_closed_forms();
    }
}
