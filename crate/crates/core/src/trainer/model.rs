use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{HeadKind, TrainConfig};
use crate::baseline::{baseline_logits, decode_tags, init_baseline_params, token_cross_entropy, Dropout};
use crate::decode::{decode, DecodeConfig};
use crate::doc::{entities_to_tags, gold_entities, token_boxes, tokenize, BBox, Document, EntitySet, LabelSet, TokenSequence, Vocabulary};
use crate::encoder::{encode, EncoderInput};
use crate::error::{Error, Result};
use crate::eval::{EvalAccumulator, EvalReport};
use crate::head::{collect_scores, init_head_params, score_graph, HeadConfig, ScoreTensor};
use crate::loss::{balanced_loss_graph, build_labels, BalanceConfig, HyperedgeLabels};
use crate::numerics::checkpoint::{load_params, save_params};
use crate::numerics::{Graph, ParamStore, Var};
use crate::rng::rng_for;
use crate::scalar::Scalar;

const INIT_STREAM: u64 = 0x696e_6974;
const PARAMS_FILE: &str = "params.bin";
const VOCAB_FILE: &str = "vocab.tsv";
const CONFIG_FILE: &str = "config.json";

/// A tokenized document with everything training and evaluation need.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub doc_id: String,
    /// Real tokens only; trailing padding is dropped.
    pub seq: TokenSequence,
    pub words: Vec<String>,
    pub boxes: Vec<Option<BBox>>,
    pub page_size: Option<(u32, u32)>,
    pub gold: EntitySet,
    /// BIO tag index per token.
    pub tags: Vec<usize>,
    pub labels: HyperedgeLabels,
}

impl Example {
    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }
}

/// Encoder, head and the vocabulary/label set they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: TrainConfig,
    pub labels: LabelSet,
    pub vocab: Vocabulary,
    pub params: ParamStore<T>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SavedMeta {
    config: TrainConfig,
    labels: LabelSet,
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters drawn from the config seed.
    pub fn new(config: TrainConfig, labels: LabelSet, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, &[INIT_STREAM]);
        let mut params = ParamStore::new();
        let enc = config.encoder_config();
        enc.init_params(vocab.len(), &mut params, &mut rng)?;
        let h = enc.hidden_size;
        match config.head_kind.baseline() {
            None => {
                let hc = HeadConfig {
                    num_types: labels.len(),
                    head_hidden: config.head_hidden,
                    rope_base: config.rope_base,
                    ..HeadConfig::new(labels.len())
                };
                hc.validate()?;
                init_head_params(&mut params, labels.len(), h, config.head_hidden, config.head_init_std, &mut rng)?
            }
            Some(kind) => init_baseline_params(&mut params, kind, h, labels.len(), config.head_init_std, &mut rng)?,
        }
        Ok(Model {
            config,
            labels,
            vocab,
            params,
        })
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            num_types: self.labels.len(),
            head_hidden: self.config.head_hidden,
            rope_base: self.config.rope_base,
            position_mode: self.config.position_mode,
            ..HeadConfig::new(self.labels.len())
        }
    }

    pub fn balance(&self) -> BalanceConfig {
        BalanceConfig {
            b: self.config.balance_b,
        }
    }

    pub fn prepare(&self, doc: &Document) -> Result<Example> {
        prepare_example(doc, &self.vocab, &self.labels, self.config.max_seq_len)
    }

    pub fn prepare_all(&self, docs: &[Document]) -> Result<Vec<Example>> {
        docs.iter().map(|d| self.prepare(d)).collect()
    }

    fn encoder_input<'a>(ex: &'a Example) -> EncoderInput<'a> {
        EncoderInput {
            seq: &ex.seq,
            boxes: Some(&ex.boxes),
            page_size: ex.page_size,
        }
    }

    /// Records encoder and HGA head; returns per-type score nodes.
    pub fn score_nodes(&self, g: &mut Graph<T>, ex: &Example) -> Result<Vec<Var>> {
        let h = encode(g, Self::encoder_input(ex), &self.config.encoder_config(), &self.params)?;
        let hc = self.head_config();
        let positions = hc.positions(&ex.seq);
        score_graph(g, h, positions.as_deref(), &ex.seq.attention_keep, &hc, &self.params)
    }

    /// Records the training objective of one example. `None` for an
    /// example without tokens.
    pub fn loss_graph<R: Rng>(&self, g: &mut Graph<T>, ex: &Example, rng: &mut R) -> Result<Option<Var>> {
        if ex.is_empty() {
            return Ok(None);
        }
        let loss = match self.config.head_kind.baseline() {
            None => {
                let s = self.score_nodes(g, ex)?;
                balanced_loss_graph(g, &s, &ex.labels, &self.balance())?
            }
            Some(kind) => {
                let h = encode(g, Self::encoder_input(ex), &self.config.encoder_config(), &self.params)?;
                let dropout = Some(Dropout {
                    p: self.config.dropout,
                    rng,
                });
                let logits = baseline_logits(g, h, kind, &self.params, dropout)?;
                token_cross_entropy(g, logits, &ex.tags)?
            }
        };
        Ok(Some(loss))
    }

    /// Hyperedge scores of one example (HGA head only).
    pub fn scores(&self, ex: &Example) -> Result<ScoreTensor<T>> {
        if self.config.head_kind != HeadKind::Hga {
            return Err(Error::Config("score tensors exist only for the hga head".into()));
        }
        let mut g = Graph::new();
        let s = self.score_nodes(&mut g, ex)?;
        collect_scores(&g, &s, &ex.seq.attention_keep)
    }

    pub fn predict(&self, ex: &Example) -> Result<EntitySet> {
        if ex.is_empty() {
            return Ok(EntitySet::new());
        }
        match self.config.head_kind.baseline() {
            None => {
                let cfg = DecodeConfig {
                    threshold: self.config.threshold,
                    ..DecodeConfig::default()
                };
                Ok(decode(&self.scores(ex)?, &cfg))
            }
            Some(kind) => {
                let mut g = Graph::new();
                let h = encode(&mut g, Self::encoder_input(ex), &self.config.encoder_config(), &self.params)?;
                let logits = baseline_logits::<T, rand_chacha::ChaCha8Rng>(&mut g, h, kind, &self.params, None)?;
                Ok(decode_tags(g.value(logits)))
            }
        }
    }

    pub fn evaluate(&self, examples: &[Example]) -> Result<EvalReport> {
        let mut acc = EvalAccumulator::new(&self.labels);
        for ex in examples {
            acc.add(&self.predict(ex)?, &ex.gold)?;
        }
        Ok(acc.report())
    }

    /// Writes `params.bin`, `vocab.tsv` and `config.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = json!({
            "config": self.config,
            "labels": self.labels,
        });
        save_params(&dir.join(PARAMS_FILE), &self.params, meta)?;
        let vocab = dir.join(VOCAB_FILE);
        fs::write(&vocab, self.vocab.to_tsv()).map_err(|e| Error::io(vocab, e))?;
        let cfg = dir.join(CONFIG_FILE);
        let text = serde_json::to_string_pretty(&self.config).expect("config serializes");
        fs::write(&cfg, text + "\n").map_err(|e| Error::io(cfg, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (params, manifest) = load_params::<T>(&dir.join(PARAMS_FILE))?;
        let meta: SavedMeta =
            serde_json::from_value(manifest.metadata).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let vocab_path = dir.join(VOCAB_FILE);
        let vocab_text = fs::read_to_string(&vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let vocab = Vocabulary::from_tsv(&vocab_text)?;
        let fresh = Model::<T>::new(meta.config.clone(), meta.labels.clone(), vocab.clone())?;
        for (name, p) in fresh.params.iter() {
            let loaded = params
                .value(name)
                .map_err(|_| Error::Checkpoint(format!("checkpoint lacks parameter {name}")))?;
            if loaded.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!("parameter {name} has shape {:?}", loaded.shape())));
            }
        }
        if params.len() != fresh.params.len() {
            return Err(Error::Checkpoint("checkpoint has unexpected parameters".into()));
        }
        Ok(Model {
            config: meta.config,
            labels: meta.labels,
            vocab,
            params,
        })
    }
}

/// Tokenizes `doc`, drops padding and derives gold entities, BIO targets
/// and hyperedge labels.
pub fn prepare_example(doc: &Document, vocab: &Vocabulary, labels: &LabelSet, max_seq_len: usize) -> Result<Example> {
    let full = tokenize(doc, vocab, max_seq_len);
    let gold = gold_entities(doc, &full, labels)?;
    let seq = full.trimmed();
    let len = seq.len();
    let words: Vec<String> = doc
        .nodes
        .iter()
        .flat_map(|n| n.words().map(str::to_string))
        .take(len)
        .collect();
    let boxes = token_boxes(doc, &seq);
    let tags = entities_to_tags(&gold, len)?.into_iter().map(|t| t.index()).collect();
    let hyper = build_labels(&gold, len, labels.len(), &seq.attention_keep)?;
    Ok(Example {
        doc_id: doc.id.clone(),
        seq,
        words,
        boxes,
        page_size: doc.page_size,
        gold,
        tags,
        labels: hyper,
    })
}
