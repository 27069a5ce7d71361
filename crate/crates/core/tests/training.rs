use hga::doc::{load_funsd_json, save_funsd_json, Document, LabelSet};
use hga::numerics::Graph;
use hga::rng::rng_for;
use hga::synth::{gen_dataset, SynthConfig, SynthSplits};
use hga::trainer::{train, Model, TrainConfig};

fn small_config(steps: usize) -> TrainConfig {
    let mut cfg = TrainConfig::desk(3);
    cfg.encoder.hidden_size = 16;
    cfg.encoder.ffn_size = Some(32);
    cfg.encoder.layers = 1;
    cfg.encoder.attn_heads = 2;
    cfg.head_hidden = 8;
    cfg.max_steps = steps;
    cfg.eval_every = 5;
    cfg
}

fn data() -> (LabelSet, SynthSplits) {
    let cfg = SynthConfig::with_num_types(5, 0, 3).unwrap();
    (cfg.label_set.clone(), SynthSplits::generate(&cfg, 24, 6, 6).unwrap())
}

#[test]
fn checkpoint_round_trip_reproduces_dev_f1() {
    let (labels, d) = data();
    let out = train::<f64>(&small_config(20), &d.train, &d.dev, &labels).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.best.save(dir.path()).unwrap();
    let loaded = Model::<f64>::load(dir.path()).unwrap();
    let dev = loaded.prepare_all(&d.dev).unwrap();
    assert_eq!(loaded.evaluate(&dev).unwrap().f1, out.best_dev.f1);
    let ex = &dev[0];
    assert_eq!(loaded.scores(ex).unwrap(), out.best.scores(ex).unwrap());
}

#[test]
fn early_steps_reduce_loss_on_a_fixed_batch() {
    let (labels, d) = data();
    let mut cfg = small_config(1);
    cfg.batch_size = 1;
    // Training on one document makes every step see the same batch.
    let doc = vec![d.train[0].clone()];
    let mut losses = Vec::new();
    for steps in 0..=10 {
        cfg.max_steps = steps.max(1);
        let model = if steps == 0 {
            let vocab = hga::doc::build_vocab(&doc, 1).unwrap();
            Model::<f64>::new(cfg.clone(), labels.clone(), vocab).unwrap()
        } else {
            train::<f64>(&cfg, &doc, &doc, &labels).unwrap().last
        };
        let ex = model.prepare(&doc[0]).unwrap();
        let mut g = Graph::new();
        let loss = model.loss_graph(&mut g, &ex, &mut rng_for(0, &[])).unwrap().unwrap();
        losses.push(g.scalar(loss));
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn training_is_deterministic() {
    let (labels, d) = data();
    let a = train::<f64>(&small_config(10), &d.train, &d.dev, &labels).unwrap();
    let b = train::<f64>(&small_config(10), &d.train, &d.dev, &labels).unwrap();
    assert_eq!(a.history.to_csv(), b.history.to_csv());
    assert_eq!(a.last.params, b.last.params);
}

#[test]
fn synthetic_documents_survive_funsd_round_trip() {
    let cfg = SynthConfig::with_num_types(9, 5, 3).unwrap();
    let docs = gen_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for doc in &docs {
        save_funsd_json(&dir.path().join(format!("{}.json", doc.id)), doc).unwrap();
    }
    let mut back: Vec<Document> = load_funsd_json(dir.path(), &cfg.label_set).unwrap();
    back.sort_by(|a, b| a.id.cmp(&b.id));
    let mut want = docs.clone();
    want.sort_by(|a, b| a.id.cmp(&b.id));
    assert_eq!(back, want);
    assert_eq!(gen_dataset(&cfg).unwrap(), docs);
}
