use centrobind::evalsuite::{embed_split, evaluate, probe_accuracy, retrieve_one_to_one, similarity_stats, ProbeConfig};
use centrobind::experiment::{
    bind, derived_seed, make_dataset, pretrained_backbones, random_backbones, streams, ExperimentConfig, Method,
    DEFAULT_CONFIG,
};
use centrobind::numkit::SeededRng;
use centrobind::synthgen::{MultiModalDataset, Split};

const SEED: u64 = 21;

fn config(edit: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(DEFAULT_CONFIG).unwrap();
    edit(&mut cfg);
    cfg.validate().unwrap();
    cfg
}

fn probe(set: &centrobind::binder::EncoderSet, ds: &MultiModalDataset, modality: usize) -> (f64, usize) {
    let train = embed_split(set, ds, Split::Train).unwrap();
    let test = embed_split(set, ds, Split::Test).unwrap();
    let train_y = ds.labels_of(&ds.indices(Split::Train));
    let test_y = ds.labels_of(&ds.indices(Split::Test));
    let acc = probe_accuracy(
        &train[modality],
        &train_y,
        &test[modality],
        &test_y,
        ds.components(),
        &ProbeConfig::default(),
        &mut SeededRng::new(5),
    )
    .unwrap();
    (acc, test_y.len())
}

/// Upper end of a 3σ binomial interval around chance.
fn chance_ceiling(p: f64, n: usize) -> f64 {
    p + 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn pretraining_beats_chance_only_on_informative_modalities() {
    let cfg = config(|c| {
        c.dataset.modalities = 2;
        c.dataset.fractions = Some(vec![1.0, 0.1]);
        c.run.methods = vec!["none".into()];
    });
    let ds = make_dataset(&cfg, SEED).unwrap();
    let init = random_backbones(&ds, SEED).unwrap();
    let (pre, curves) = pretrained_backbones(&cfg, &ds, &init, SEED).unwrap();
    assert!(curves[1].last() < curves[1].first());
    let chance = 1.0 / ds.components() as f64;
    let (informative, n) = probe(&pre, &ds, 1);
    let (noise, _) = probe(&pre, &ds, 0);
    assert!(informative > chance_ceiling(chance, n), "informative {informative}");
    assert!(noise <= chance_ceiling(chance, n), "noise-only modality {noise}");
}

#[test]
fn centrobind_loss_decreases_and_halves() {
    let cfg = config(|_| {});
    let ds = make_dataset(&cfg, SEED).unwrap();
    let init = random_backbones(&ds, SEED).unwrap();
    let (pre, _) = pretrained_backbones(&cfg, &ds, &init, SEED).unwrap();
    let bcfg = cfg.bind_config(derived_seed(SEED, streams::BIND)).unwrap();
    let (_, trace) = bind(&Method::Adaptive(centrobind::anchors::AnchorStrategy::Centroid), &ds, &pre, &bcfg).unwrap();
    let curve = trace.unwrap().mean_losses();
    // ten-epoch block means after the first block keep falling
    let blocks: Vec<f64> = curve.chunks(10).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    assert!(blocks.windows(2).all(|w| w[1] < w[0]), "{blocks:?}");
    let ratio = curve[0] / curve[curve.len() - 1];
    assert!(ratio > 2.0, "first/last loss ratio {ratio}");
}

#[test]
fn binding_to_a_noise_anchor_leaves_retrieval_at_chance() {
    let cfg = config(|c| {
        c.dataset.modalities = 2;
        c.dataset.fractions = Some(vec![1.0, 0.1]);
        c.run.methods = vec!["none".into()];
        c.train.epochs = 30;
    });
    let ds = make_dataset(&cfg, SEED).unwrap();
    let init = random_backbones(&ds, SEED).unwrap();
    let bcfg = cfg.bind_config(derived_seed(SEED, streams::BIND)).unwrap();
    let (set, _) = bind(&Method::FaBind(0), &ds, &init, &bcfg).unwrap();
    assert_eq!(set.encoders[0], init.encoders[0]);
    let test = embed_split(&set, &ds, Split::Test).unwrap();
    let n = test[0].rows();
    let top1 = retrieve_one_to_one(&test[1], &test[0], 1).unwrap();
    assert!(top1 <= chance_ceiling(1.0 / n as f64, n), "top-1 {top1} with {n} items");
}

#[test]
fn centrobind_raises_cross_modal_agreement() {
    let cfg = config(|c| c.train.epochs = 30);
    let ds = make_dataset(&cfg, SEED).unwrap();
    let init = random_backbones(&ds, SEED).unwrap();
    let (pre, _) = pretrained_backbones(&cfg, &ds, &init, SEED).unwrap();
    let bcfg = cfg.bind_config(derived_seed(SEED, streams::BIND)).unwrap();
    let (bound, _) = bind(&"centrobind".parse().unwrap(), &ds, &pre, &bcfg).unwrap();
    let pairs = ds.indices(Split::Test);
    let before = similarity_stats(&pre, &ds, &pairs, &mut SeededRng::new(1)).unwrap();
    let after = similarity_stats(&bound, &ds, &pairs, &mut SeededRng::new(1)).unwrap();
    assert!(after.shared > before.shared + 0.1, "{before:?} -> {after:?}");
    assert!(after.intra > 0.5, "{after:?}");

    let report = evaluate(&bound, &ds, "centrobind", "pretrained", &cfg.eval_config(SEED)).unwrap();
    assert_eq!(report.modality_accuracy.len(), 4);
    assert_eq!(report.one_to_one.len(), 4 * 3 * 3);
    assert!(report.modality_accuracy[3] > report.modality_accuracy[0]);
}
