use beamkit::dsp::MultichannelSignal;
use beamkit::io::{checkpoint_container, pipeline_from_container};
use beamkit::nn::{
    BeamformerVariant, Domain, HeadConfig, MaskSource, Pipeline, PipelineConfig, PreparedInput, TcnConfig, Trainer,
};
use beamkit::scene::{simulate_from_spec, ArrayGeometry, Scene, SceneSpec};

fn geometry4() -> ArrayGeometry {
    ArrayGeometry::new(vec![0.0, 0.1, 0.25, 0.3], vec![(0, 3), (1, 2), (0, 1)], 0, 343.0).unwrap()
}

fn small(domain: Domain, variant: BeamformerVariant, seed: u64) -> PipelineConfig {
    let mut c = match domain {
        Domain::Fd => PipelineConfig::fd(),
        Domain::Td => PipelineConfig::td(),
    };
    c.encoder.window = Some(match domain {
        Domain::Fd => 128,
        Domain::Td => 16,
    });
    c.encoder.hop = Some(c.encoder.window.unwrap() / 2);
    if domain == Domain::Td {
        c.encoder.bands = Some(24);
    }
    c.beamformer = variant;
    c.tcn = TcnConfig { bottleneck: 8, hidden: 12, kernel: 3, blocks: 2, repeats: 1 };
    c.head = HeadConfig { projection: Some(8), gru: Some(6) };
    c.seed = seed;
    c
}

fn scene(seed: u64) -> Scene {
    let spec = SceneSpec { target_doa: 50.0, interferer_doa: 140.0, sir_db: 0.0, seed, duration_s: 0.15 };
    simulate_from_spec(&spec, &geometry4()).unwrap()
}

fn head_param_count(p: &Pipeline) -> usize {
    p.head_params().iter().map(|&id| p.store.value(id).len()).sum()
}

#[test]
fn fd_head_size_does_not_depend_on_frequency_count() {
    let mut counts = Vec::new();
    for window in [64, 128, 512] {
        let mut c = small(Domain::Fd, BeamformerVariant::AnMvdr, 0);
        c.encoder.window = Some(window);
        c.encoder.hop = Some(window / 2);
        let p = Pipeline::new(c, geometry4()).unwrap();
        assert_eq!(p.head_dims().unwrap().input, 4 * 16);
        counts.push(head_param_count(&p));
    }
    assert!(counts.windows(2).all(|w| w[0] == w[1]), "{counts:?}");
    assert!(counts[0] > 0);
}

#[test]
fn every_variant_separates_to_input_length() {
    let sc = scene(3);
    let cases = [
        (Domain::Fd, BeamformerVariant::MaskOnly),
        (Domain::Fd, BeamformerVariant::EqMvdr),
        (Domain::Fd, BeamformerVariant::EqMcwf),
        (Domain::Fd, BeamformerVariant::AnMvdr),
        (Domain::Fd, BeamformerVariant::AnMcwf),
        (Domain::Td, BeamformerVariant::MaskOnly),
        (Domain::Td, BeamformerVariant::EqMvdr),
        (Domain::Td, BeamformerVariant::EqMcwf),
        (Domain::Td, BeamformerVariant::AnMvdr),
        (Domain::Td, BeamformerVariant::AnMcwf),
        (Domain::Td, BeamformerVariant::LatentTiMcwf),
        (Domain::Td, BeamformerVariant::LatentTvMcwf),
    ];
    for (d, v) in cases {
        let p = Pipeline::new(small(d, v, 1), geometry4()).unwrap();
        let input = p.prepare_scene(&sc).unwrap();
        for masks in [MaskSource::Estimator, MaskSource::Oracle] {
            let out = p.separate(&input, masks).unwrap();
            assert_eq!(out.len(), sc.mixture.len(), "{d:?} {v:?} {masks:?}");
            assert!(out.iter().all(|x| x.is_finite()), "{d:?} {v:?} {masks:?}");
        }
    }
}

#[test]
fn latent_variants_are_rejected_in_frequency_domain() {
    for v in [BeamformerVariant::LatentTiMcwf, BeamformerVariant::LatentTvMcwf] {
        assert!(Pipeline::new(small(Domain::Fd, v, 0), geometry4()).is_err());
    }
}

#[test]
fn silent_input_gives_finite_output() {
    let silence = MultichannelSignal::zeros(4, 2400, 16_000);
    for (d, v) in [
        (Domain::Td, BeamformerVariant::AnMvdr),
        (Domain::Td, BeamformerVariant::AnMcwf),
        (Domain::Td, BeamformerVariant::EqMvdr),
        (Domain::Fd, BeamformerVariant::AnMvdr),
        (Domain::Fd, BeamformerVariant::EqMcwf),
    ] {
        let p = Pipeline::new(small(d, v, 2), geometry4()).unwrap();
        let input = p.prepare(&silence, 90.0, None, None).unwrap();
        let out = p.separate(&input, MaskSource::Estimator).unwrap();
        assert!(out.iter().all(|x| x.is_finite()), "{d:?} {v:?}");
    }
}

#[test]
fn construction_is_seeded() {
    let sc = scene(4);
    let run = |seed| {
        let p = Pipeline::new(small(Domain::Td, BeamformerVariant::AnMcwf, seed), geometry4()).unwrap();
        let input = p.prepare_scene(&sc).unwrap();
        p.separate(&input, MaskSource::Estimator).unwrap()
    };
    let (a, b, c) = (run(7), run(7), run(8));
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a.iter().zip(&c).any(|(x, y)| x != y));
}

#[test]
fn head_only_training_with_oracle_masks_lowers_loss() {
    let sc = scene(5);
    let p = Pipeline::new(small(Domain::Fd, BeamformerVariant::AnMvdr, 3), geometry4()).unwrap();
    let input: PreparedInput = p.prepare_scene(&sc).unwrap();
    let head = p.head_params();
    let before = p.store.clone();
    let mut trainer = Trainer::new(p).only(head.clone()).with_masks(MaskSource::Oracle);
    let first = trainer.evaluate(&input).unwrap();
    for _ in 0..30 {
        trainer.step(&input).unwrap();
    }
    let last = trainer.evaluate(&input).unwrap();
    assert!(last < first, "{first} -> {last}");
    for id in trainer.pipeline.store.ids() {
        let unchanged = trainer.pipeline.store.value(id) == before.value(id);
        assert_eq!(unchanged, !head.contains(&id), "{}", before.name(id));
    }
}

#[test]
fn checkpoint_restores_identical_separation() {
    let sc = scene(6);
    let mut trainer = Trainer::new(Pipeline::new(small(Domain::Td, BeamformerVariant::AnMvdr, 4), geometry4()).unwrap());
    let input = trainer.pipeline.prepare_scene(&sc).unwrap();
    for _ in 0..3 {
        trainer.step(&input).unwrap();
    }
    let extra = serde_json::json!({ "steps": 3 });
    let c = checkpoint_container(&trainer.pipeline, extra.clone()).unwrap();
    let (restored, meta) = pipeline_from_container(c).unwrap();
    assert_eq!(meta, extra);
    let a = trainer.pipeline.separate(&input, MaskSource::Estimator).unwrap();
    let b = restored.separate(&restored.prepare_scene(&sc).unwrap(), MaskSource::Estimator).unwrap();
    assert_eq!(a, b);
}
