//! Stage-1 sketch generator: question encoder, skeleton decoder, and a
//! relation encoder that scores textual relation surfaces against decoder
//! states at relation placeholders.

mod forward;
mod infer;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::query::skeleton::VOCAB_SIZE;
use crate::query::QuerySkeleton;
use crate::tensor::{Checkpoint, CheckpointError, Tensor, TensorError};
use crate::text::{tokenize, RelationCatalog, TokenVocab};

pub use forward::BatchStats;
pub use infer::{Decoded, SketchCandidate};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("question has {len} tokens, limit is {max}")]
    TooLong { len: usize, max: usize },
    #[error("no beam produced a valid skeleton")]
    NoValidSkeleton,
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("checkpoint does not match model: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// Mean of the surface's token states, excluding the framing tokens.
    Mean,
    /// The `[CLS]` state.
    First,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub max_question_len: usize,
    pub max_skeleton_len: usize,
    pub beam_width: usize,
    pub shortlist: usize,
    pub candidate_cap: usize,
    pub link_weight: f64,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_layers_enc: 2,
            n_layers_dec: 2,
            n_heads: 4,
            ff_dim: 256,
            dropout: 0.1,
            max_question_len: 48,
            max_skeleton_len: 24,
            beam_width: 5,
            shortlist: 3,
            candidate_cap: 25,
            link_weight: 1.0,
            pooling: Pooling::Mean,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("d_model", self.d_model),
            ("n_layers_enc", self.n_layers_enc),
            ("n_layers_dec", self.n_layers_dec),
            ("n_heads", self.n_heads),
            ("ff_dim", self.ff_dim),
            ("max_question_len", self.max_question_len),
            ("max_skeleton_len", self.max_skeleton_len),
            ("beam_width", self.beam_width),
            ("shortlist", self.shortlist),
            ("candidate_cap", self.candidate_cap),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::BadConfig(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::BadConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.link_weight < 0.0 || !self.link_weight.is_finite() {
            return Err(ModelError::BadConfig("link_weight must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let pooling = match self.pooling {
            Pooling::Mean => "mean",
            Pooling::First => "first",
        };
        [
            ("d_model", self.d_model.to_string()),
            ("n_layers_enc", self.n_layers_enc.to_string()),
            ("n_layers_dec", self.n_layers_dec.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("ff_dim", self.ff_dim.to_string()),
            ("dropout", self.dropout.to_string()),
            ("max_question_len", self.max_question_len.to_string()),
            ("max_skeleton_len", self.max_skeleton_len.to_string()),
            ("beam_width", self.beam_width.to_string()),
            ("shortlist", self.shortlist.to_string()),
            ("candidate_cap", self.candidate_cap.to_string()),
            ("link_weight", self.link_weight.to_string()),
            ("pooling", pooling.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Overrides fields from `key=value` pairs; unknown keys are returned.
    pub fn apply_pairs<'a, I>(&mut self, pairs: I) -> Result<Vec<String>, ModelError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, ModelError> {
            v.trim()
                .parse()
                .map_err(|_| ModelError::BadConfig(format!("{k}: cannot parse {v:?}")))
        }
        let mut unknown = Vec::new();
        for (k, v) in pairs {
            match k {
                "d_model" => self.d_model = num(k, v)?,
                "n_layers_enc" => self.n_layers_enc = num(k, v)?,
                "n_layers_dec" => self.n_layers_dec = num(k, v)?,
                "n_heads" => self.n_heads = num(k, v)?,
                "ff_dim" => self.ff_dim = num(k, v)?,
                "dropout" => self.dropout = num(k, v)?,
                "max_question_len" => self.max_question_len = num(k, v)?,
                "max_skeleton_len" => self.max_skeleton_len = num(k, v)?,
                "beam_width" => self.beam_width = num(k, v)?,
                "shortlist" => self.shortlist = num(k, v)?,
                "candidate_cap" => self.candidate_cap = num(k, v)?,
                "link_weight" => self.link_weight = num(k, v)?,
                "pooling" => {
                    self.pooling = match v.trim() {
                        "mean" => Pooling::Mean,
                        "first" => Pooling::First,
                        other => return Err(ModelError::BadConfig(format!("pooling: {other:?}"))),
                    }
                }
                _ => unknown.push(k.to_string()),
            }
        }
        Ok(unknown)
    }
}

/// One supervised example in model-ready form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// `[CLS] q [SEP]` token ids.
    pub question: Vec<usize>,
    /// Skeleton token indices, `BOS ... EOS`.
    pub target: Vec<usize>,
    /// Gold surface index per `PROP_k`.
    pub gold_surfaces: Vec<usize>,
    pub entity_order: Vec<String>,
}

impl TrainingExample {
    pub fn new(
        vocab: &TokenVocab,
        question: &str,
        skeleton: &QuerySkeleton,
        gold_surfaces: Vec<usize>,
        entity_order: Vec<String>,
    ) -> Self {
        debug_assert_eq!(skeleton.prop_count(), gold_surfaces.len());
        Self {
            question: vocab.encode_framed(&tokenize(question)),
            target: skeleton.serialize().iter().map(|t| t.index()).collect(),
            gold_surfaces,
            entity_order,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct EncLayer {
    pub ln1: Norm,
    pub qkv: Linear,
    pub out: Linear,
    pub ln2: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
}

#[derive(Debug, Clone)]
pub(crate) struct DecLayer {
    pub ln1: Norm,
    pub qkv: Linear,
    pub self_out: Linear,
    pub ln2: Norm,
    pub cross_q: Linear,
    pub cross_kv: Linear,
    pub cross_out: Linear,
    pub ln3: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok_emb: usize,
    pub enc_pos: usize,
    pub dec_emb: usize,
    pub dec_pos: usize,
    pub enc: Vec<EncLayer>,
    pub enc_ln: Norm,
    pub dec: Vec<DecLayer>,
    pub dec_ln: Norm,
    pub out: Linear,
    pub rel: Linear,
}

enum Init {
    Uniform(f64),
    Zeros,
    Ones,
}

struct Builder<'r> {
    names: Vec<String>,
    params: Vec<Tensor>,
    rng: &'r mut ChaCha8Rng,
}

impl Builder<'_> {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let t = match init {
            Init::Uniform(s) => Tensor::uniform(shape, s, self.rng),
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::filled(shape, 1.0),
        };
        self.names.push(name);
        self.params.push(t);
        self.params.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            w: self.add(
                format!("{name}.w"),
                &[fan_in, fan_out],
                Init::Uniform(1.0 / (fan_in as f64).sqrt()),
            ),
            b: self.add(format!("{name}.b"), &[fan_out], Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            g: self.add(format!("{name}.g"), &[d], Init::Ones),
            b: self.add(format!("{name}.b"), &[d], Init::Zeros),
        }
    }
}

/// Parameters plus the token vocabulary they were trained with.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    vocab: TokenVocab,
    names: Vec<String>,
    params: Vec<Tensor>,
    pub(crate) layout: Layout,
}

impl Model {
    /// Random initialization, uniform in `±1/√fan_in`.
    pub fn new(config: ModelConfig, vocab: TokenVocab, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let emb = 1.0 / (d as f64).sqrt();
        let mut b = Builder {
            names: Vec::new(),
            params: Vec::new(),
            rng: &mut rng,
        };
        let tok_emb = b.add("tok_emb".into(), &[vocab.len(), d], Init::Uniform(emb));
        let enc_pos = b.add("enc_pos".into(), &[config.max_question_len + 2, d], Init::Uniform(emb));
        let dec_emb = b.add("dec_emb".into(), &[VOCAB_SIZE, d], Init::Uniform(emb));
        let dec_pos = b.add("dec_pos".into(), &[config.max_skeleton_len, d], Init::Uniform(emb));
        let enc = (0..config.n_layers_enc)
            .map(|i| EncLayer {
                ln1: b.norm(&format!("enc{i}.ln1"), d),
                qkv: b.linear(&format!("enc{i}.qkv"), d, 3 * d),
                out: b.linear(&format!("enc{i}.out"), d, d),
                ln2: b.norm(&format!("enc{i}.ln2"), d),
                ff1: b.linear(&format!("enc{i}.ff1"), d, config.ff_dim),
                ff2: b.linear(&format!("enc{i}.ff2"), config.ff_dim, d),
            })
            .collect();
        let enc_ln = b.norm("enc_ln", d);
        let dec = (0..config.n_layers_dec)
            .map(|i| DecLayer {
                ln1: b.norm(&format!("dec{i}.ln1"), d),
                qkv: b.linear(&format!("dec{i}.qkv"), d, 3 * d),
                self_out: b.linear(&format!("dec{i}.self_out"), d, d),
                ln2: b.norm(&format!("dec{i}.ln2"), d),
                cross_q: b.linear(&format!("dec{i}.cross_q"), d, d),
                cross_kv: b.linear(&format!("dec{i}.cross_kv"), d, 2 * d),
                cross_out: b.linear(&format!("dec{i}.cross_out"), d, d),
                ln3: b.norm(&format!("dec{i}.ln3"), d),
                ff1: b.linear(&format!("dec{i}.ff1"), d, config.ff_dim),
                ff2: b.linear(&format!("dec{i}.ff2"), config.ff_dim, d),
            })
            .collect();
        let dec_ln = b.norm("dec_ln", d);
        let out = b.linear("out", d, VOCAB_SIZE);
        let rel = b.linear("rel", d, d);
        let (names, params) = (b.names, b.params);
        Ok(Self {
            config,
            vocab,
            names,
            params,
            layout: Layout {
                tok_emb,
                enc_pos,
                dec_emb,
                dec_pos,
                enc,
                enc_ln,
                dec,
                dec_ln,
                out,
                rel,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Inference-time knobs (beam width, shortlist, cap) that do not change
    /// parameter shapes.
    pub fn set_search(&mut self, beam_width: usize, shortlist: usize, candidate_cap: usize) {
        self.config.beam_width = beam_width.max(1);
        self.config.shortlist = shortlist.max(1);
        self.config.candidate_cap = candidate_cap.max(1);
    }

    pub fn set_dropout(&mut self, p: f64) {
        self.config.dropout = p;
    }

    pub fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Framed token ids of every catalog surface, in catalog order.
    pub fn surface_ids(&self, catalog: &RelationCatalog) -> Vec<Vec<usize>> {
        catalog
            .surfaces()
            .iter()
            .map(|s| self.vocab.encode_framed(&tokenize(s)))
            .collect()
    }

    /// Framed question ids, rejecting questions over the length limit.
    pub fn question_ids(&self, question: &str) -> Result<Vec<usize>, ModelError> {
        let toks = tokenize(question);
        if toks.len() > self.config.max_question_len {
            return Err(ModelError::TooLong {
                len: toks.len(),
                max: self.config.max_question_len,
            });
        }
        Ok(self.vocab.encode_framed(&toks))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.to_pairs(),
            vocab: self.vocab.tokens().to_vec(),
            params: self.names.iter().cloned().zip(self.params.iter().cloned()).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let mut config = ModelConfig::default();
        config.apply_pairs(ckpt.config.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        let vocab = TokenVocab::from_tokens(ckpt.vocab.clone());
        let mut model = Self::new(config, vocab, 0)?;
        if ckpt.params.len() != model.params.len() {
            return Err(ModelError::CheckpointMismatch(format!(
                "{} tensors, expected {}",
                ckpt.params.len(),
                model.params.len()
            )));
        }
        for (i, (name, t)) in ckpt.params.iter().enumerate() {
            if name != &model.names[i] || t.shape() != model.params[i].shape() {
                return Err(ModelError::CheckpointMismatch(format!(
                    "tensor {i}: {name} {:?}, expected {} {:?}",
                    t.shape(),
                    model.names[i],
                    model.params[i].shape()
                )));
            }
            model.params[i] = t.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::query::sparql::canonicalize_gold;

    pub const DIRECTOR: &str = "http://fixture.example/ontology/directedBy";
    pub const LANGUAGE: &str = "http://fixture.example/ontology/inLanguage";
    pub const STARRED: &str = "http://fixture.example/ontology/starredActors";

    pub fn catalog() -> RelationCatalog {
        let iris: Vec<String> = [DIRECTOR, LANGUAGE, STARRED].iter().map(|s| s.to_string()).collect();
        RelationCatalog::build(&iris, None).unwrap()
    }

    pub fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_layers_enc: 1,
            n_layers_dec: 1,
            n_heads: 2,
            ff_dim: 24,
            dropout: 0.0,
            max_question_len: 16,
            ..ModelConfig::default()
        }
    }

    pub fn vocab() -> TokenVocab {
        let words = "the films directed by in which language who starred actors what are x y z krasinski john";
        TokenVocab::build(words.split(' '))
    }

    pub fn example(question: &str, sparql: &str, entities: &[&str]) -> TrainingExample {
        let cat = catalog();
        let order: Vec<String> = entities.iter().map(|s| s.to_string()).collect();
        let gold = canonicalize_gold(sparql, &order, &cat).unwrap();
        let surfaces = gold.surfaces.iter().map(|s| cat.surface_index(s).unwrap()).collect();
        TrainingExample::new(&vocab(), question, &gold.skeleton, surfaces, order)
    }

    pub fn running_example() -> TrainingExample {
        example(
            "the films directed by john krasinski are in which language",
            &format!("SELECT ?x WHERE {{ ?f <{DIRECTOR}> <http://e/jk> . ?f <{LANGUAGE}> ?x . }}"),
            &["http://e/jk"],
        )
    }

    pub fn one_hop() -> TrainingExample {
        example(
            "who starred in x",
            &format!("SELECT ?a WHERE {{ <http://e/x> <{STARRED}> ?a . }}"),
            &["http://e/x"],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn config_round_trips_through_pairs() {
        let mut c = ModelConfig {
            d_model: 32,
            pooling: Pooling::First,
            dropout: 0.25,
            ..ModelConfig::default()
        };
        let pairs = c.to_pairs();
        let mut back = ModelConfig::default();
        let unknown = back
            .apply_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .unwrap();
        assert!(unknown.is_empty());
        assert_eq!(back, c);
        c.n_heads = 5;
        assert!(matches!(c.validate(), Err(ModelError::BadConfig(_))));
    }

    #[test]
    fn checkpoint_round_trip_preserves_parameters() {
        let m = Model::new(tiny_config(), vocab(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        m.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.vocab(), m.vocab());
        assert_eq!(back.config(), m.config());
    }

    #[test]
    fn too_long_question_rejected() {
        let m = Model::new(tiny_config(), vocab(), 3).unwrap();
        let q = vec!["x"; 17].join(" ");
        assert!(matches!(m.question_ids(&q), Err(ModelError::TooLong { len: 17, max: 16 })));
    }

    #[test]
    fn example_targets_match_running_skeleton() {
        let ex = running_example();
        assert_eq!(ex.target.len(), 14);
        assert_eq!(ex.gold_surfaces.len(), 2);
        let cat = catalog();
        assert_eq!(cat.surface(ex.gold_surfaces[0]), "directed by");
        assert_eq!(cat.surface(ex.gold_surfaces[1]), "in language");
    }
}
