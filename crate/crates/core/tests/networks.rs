//! Preset structure by introspection, shape propagation and the layer-code
//! grammar.

use alphagan_core::networks::{
    build_network, load_preset, parse_layer_code, preset_specs, Geometry, LayerCode, LayerKind, Mode, NetworkSpec, Norm,
    Preset, Role,
};
use alphagan_core::{Tensor, Var};

fn geometry(side: usize, latent: usize, width: f64) -> Geometry {
    Geometry {
        volume: [side, side, side],
        latent_dim: latent,
        width,
    }
}

fn toy(latent: usize) -> Geometry {
    geometry(16, latent, 0.125)
}

pub fn sigmarat1_wraps_every_weight_layer() {
    let b = load_preset::<f32>("sigmarat1", toy(500), 0).unwrap();
    let mut wrapped = 0;
    let mut layers = 0;
    for net in b.networks() {
        for l in net.layers() {
            layers += 1;
            assert!(l.spectral_norm, "{:?} {:?} unwrapped in {}", l.kind, l.code, net.role().name());
            wrapped += 1;
        }
    }
    assert_eq!(wrapped, layers);
    assert_eq!(b.networks().iter().map(|n| n.count_spectral()).sum::<usize>(), layers);
    let convolutions: usize = b
        .networks()
        .iter()
        .flat_map(|n| n.layers())
        .filter(|l| matches!(l.kind, LayerKind::Conv | LayerKind::TransposedConv))
        .filter(|l| l.spectral_norm)
        .count();
    assert_eq!(convolutions, 12);
}

pub fn sigmarat2_moves_normalization_out_of_the_critics() {
    let b = load_preset::<f32>("sigmarat2", toy(500), 0).unwrap();
    assert_eq!(b.generator.count_spectral(), 0);
    assert_eq!(b.encoder.count_spectral(), 0);
    for critic in [&b.discriminator, &b.code_discriminator] {
        assert_eq!(critic.count_spectral(), critic.layers().len());
        assert_eq!(critic.count_norm(), 0);
        assert!(critic.layers().iter().all(|l| l.declared_norm == Norm::None));
    }
    for net in [&b.generator, &b.encoder] {
        assert!(net.layers().iter().any(|l| l.norm == Norm::Instance));
    }
}

#[test]
fn baseline_uses_batch_norm_relu_and_a_large_latent() {
    assert_eq!(Preset::AdniBaseline.default_latent(), 1000);
    let b = load_preset::<f32>("adni_baseline", toy(1000), 0).unwrap();
    assert_eq!(b.latent_dim(), 1000);
    assert_eq!(b.encoder.output_shape(), &[1000]);
    assert_eq!(b.code_discriminator.input_shape(), &[1000]);
    for net in b.networks() {
        assert_eq!(net.count_spectral(), 0);
        assert!(net.layers().iter().all(|l| matches!(l.declared_norm, Norm::None | Norm::Batch)));
    }
    assert!(b.generator.count_norm() > 0);
}

#[test]
fn every_preset_closes_the_autoencoder_loop() {
    for preset in Preset::ALL {
        let mut b = load_preset::<f32>(preset.name(), toy(preset.default_latent()), 1).unwrap();
        let x = Var::constant(Tensor::full(&[2, 1, 16, 16, 16], 0.1));
        let z = b.encoder.forward(&x, Mode::TRAIN).unwrap();
        assert_eq!(z.shape(), &[2, preset.default_latent()]);
        let y = b.generator.forward(&z, Mode::TRAIN).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|v| v.abs() <= 1.0));
        // critics are unbounded linear heads
        assert_eq!(b.discriminator.forward(&y, Mode::TRAIN).unwrap().shape(), &[2, 1]);
        assert_eq!(b.code_discriminator.forward(&z, Mode::TRAIN).unwrap().shape(), &[2, 1]);
        assert_eq!(b.discriminator.layers().last().unwrap().activation, alphagan_core::autodiff::Activation::Linear);
    }
}

#[test]
fn full_scale_generator_reaches_64_cubed() {
    let specs = preset_specs(Preset::SigmaRat2, 500);
    let g = build_network::<f32>(&specs[0], geometry(64, 500, 1.0), 0).unwrap();
    assert_eq!(g.output_shape(), &[1, 64, 64, 64]);
    let channels: Vec<usize> = g.layers().iter().map(|l| l.code.n).collect();
    assert_eq!(channels, vec![512, 256, 128, 64, 1]);
    assert_eq!(g.layers()[0].output_shape, vec![512, 4, 4, 4]);
    let toy_g = build_network::<f32>(&specs[0], toy(500), 0).unwrap();
    assert_eq!(toy_g.output_shape(), &[1, 16, 16, 16]);
    assert_eq!(toy_g.layers().len(), g.layers().len());
}

#[test]
fn builds_are_deterministic_per_seed() {
    let a = load_preset::<f32>("sigmarat2", toy(500), 9).unwrap();
    let b = load_preset::<f32>("sigmarat2", toy(500), 9).unwrap();
    let c = load_preset::<f32>("sigmarat2", toy(500), 10).unwrap();
    let values = |x: &alphagan_core::networks::AlphaGanBundle<f32>| -> Vec<f32> {
        x.networks().iter().flat_map(|n| n.parameters()).flat_map(|p| p.value().data().to_vec()).collect()
    };
    assert_eq!(values(&a), values(&b));
    assert_ne!(values(&a), values(&c));
    for net in a.networks() {
        for p in net.parameters() {
            if p.name().ends_with(".bias") {
                assert!(p.value().data().iter().all(|v| *v == 0.0));
            }
        }
        let mut names: Vec<&str> = net.parameters().iter().map(|p| p.name()).collect();
        let before = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), before);
    }
}

pub fn layer_codes_follow_the_fixed_field_order() {
    assert_eq!(parse_layer_code("n256k3s1p1").unwrap(), LayerCode { n: 256, k: 3, s: 1, p: 1 });
    assert_eq!(parse_layer_code("n1k1s1p0").unwrap(), LayerCode { n: 1, k: 1, s: 1, p: 0 });
    for bad in ["k3n256s1p1", "n256s1k3p1", "n256k3p1s1", "p1n256k3s1", "n256k3s1", "256k3s1p1", "n256k3s1p1q"] {
        assert!(
            matches!(parse_layer_code(bad), Err(alphagan_core::Error::Parse { .. })),
            "{bad} accepted"
        );
    }
}

#[test]
fn spec_files_round_trip_and_report_the_failing_layer() {
    for spec in preset_specs(Preset::SigmaRat1, 500) {
        let text = spec.to_string();
        assert_eq!(NetworkSpec::parse(&text).unwrap(), spec);
    }
    let text = "role discriminator\nconv n8k4s2p1 sn leaky_relu\nconv n8k4s2p1 sn\ndense n1k1s1p0 sn linear\n";
    let spec = NetworkSpec::parse(text).unwrap();
    assert_eq!(spec.role, Role::Discriminator);
    let d = build_network::<f32>(&spec, geometry(8, 500, 1.0), 0).unwrap();
    assert_eq!(d.output_shape(), &[1]);
    let bad = "role discriminator\nconv n8k4s2p1\nconv n8k5s1p0\ndense n1k1s1p0\n";
    match build_network::<f32>(&NetworkSpec::parse(bad).unwrap(), geometry(8, 500, 1.0), 0) {
        Err(alphagan_core::Error::Shape { layer, .. }) => assert_eq!(layer, 1),
        other => panic!("unexpected {:?}", other.map(|_| ())),
    }
}

/// These checks are public so the acceptance binary can run them too.
mod shared {
    #[test]
    fn sigmarat1_wraps_every_weight_layer() {
        super::sigmarat1_wraps_every_weight_layer();
    }
    #[test]
    fn sigmarat2_moves_normalization_out_of_the_critics() {
        super::sigmarat2_moves_normalization_out_of_the_critics();
    }
    #[test]
    fn layer_codes_follow_the_fixed_field_order() {
        super::layer_codes_follow_the_fixed_field_order();
    }
}
