use pdn_core::pipeline::{load_dataset, save_dataset, synth_generate, train_er, ErSystem};
use pdn_core::RunConfig;

fn tiny() -> RunConfig {
    RunConfig {
        samples: 60,
        clusters: 12,
        plan_epochs: 10,
        plan_dim: 8,
        pdn_hidden: 8,
        pdn_kmax: 4,
        pdn_code: 4,
        dynamics_epochs: 1,
        er_epochs: 2,
        er_proj: 8,
        er_hidden: 8,
        ..RunConfig::default()
    }
}

fn trained() -> (RunConfig, ErSystem, Vec<pdn_core::EventSample>) {
    let cfg = tiny();
    let data = synth_generate(&cfg.scene_config(), 8).unwrap();
    let (sys, _) = train_er(&data, &cfg, 4).unwrap();
    (cfg, sys, data)
}

#[test]
fn every_scene_passes_the_structural_checks() {
    let (cfg, sys, data) = trained();
    let mut with_plans = 0;
    for s in &data {
        let a = sys.analyze(&s.frames, 1.0).unwrap();
        for map in [&a.bua, &a.attention] {
            assert!(map.values().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        }
        assert_eq!(a.plans.len(), a.glimpses.len());
        let Some(masked) = &a.masked else {
            assert!(a.glimpses.is_empty());
            continue;
        };
        with_plans += 1;
        let mut codes: Vec<usize> = (0..cfg.n)
            .flat_map(|i| (0..cfg.n).map(move |j| (i, j)))
            .map(|(i, j)| masked.mask_at(i, j))
            .collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), a.glimpses.len() + 1);
        let prda = a.prda.as_ref().unwrap();
        assert!(prda.values().iter().all(|v| v.is_finite() && *v >= 0.0));
        let mass = (a.glimpses.len() * cfg.horizon * cfg.n * cfg.n) as f64 / cfg.z;
        assert!((prda.sum() - mass).abs() < 1e-9);
        for p in &a.plans {
            p.validate(sys.library.clusters(), cfg.horizon).unwrap();
        }
    }
    assert!(with_plans * 2 > data.len(), "only {with_plans} scenes had glimpses");
}

#[test]
fn predictions_survive_disk_round_trips() {
    let (_, sys, data) = trained();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path().join("data"), &data).unwrap();
    sys.save(dir.path().join("model")).unwrap();
    let data2 = load_dataset(dir.path().join("data")).unwrap();
    let sys2 = ErSystem::load(dir.path().join("model")).unwrap();
    for (a, b) in data.iter().zip(&data2).take(10) {
        let p = sys.predict(&a.frames).unwrap();
        assert_eq!(p, sys2.predict(&b.frames).unwrap());
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
