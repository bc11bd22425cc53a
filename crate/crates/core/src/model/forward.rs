//! Recorded (differentiable) forward pass over a packed minibatch.
//!
//! Sequences of a batch are stacked row-wise; attention is computed per
//! sequence segment so no padding is needed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Linear, Model, ModelError, Norm, Pooling, TrainingExample};
use crate::query::skeleton::{SkeletonToken, MAX_PROPS};
use crate::tensor::{Tape, Tensor, Var};

const MASKED: f64 = -1e30;

/// Row range of one sequence inside a packed matrix.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Seg {
    pub start: usize,
    pub len: usize,
}

fn segments(lens: impl Iterator<Item = usize>) -> Vec<Seg> {
    let mut start = 0;
    lens.map(|len| {
        let s = Seg { start, len };
        start += len;
        s
    })
    .collect()
}

/// Summary of a batch under teacher forcing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub loss: f64,
    pub token_loss: f64,
    pub link_loss: f64,
    pub examples: usize,
    pub tokens: usize,
    pub tokens_correct: usize,
    pub links: usize,
    pub links_correct: usize,
    /// Examples whose every token and every link is top-1 correct.
    pub exact: usize,
}

impl BatchStats {
    pub fn merge(&mut self, other: &BatchStats) {
        let n = (self.examples + other.examples).max(1) as f64;
        self.loss = (self.loss * self.examples as f64 + other.loss * other.examples as f64) / n;
        self.token_loss =
            (self.token_loss * self.examples as f64 + other.token_loss * other.examples as f64) / n;
        self.link_loss = (self.link_loss * self.examples as f64 + other.link_loss * other.examples as f64) / n;
        self.examples += other.examples;
        self.tokens += other.tokens;
        self.tokens_correct += other.tokens_correct;
        self.links += other.links;
        self.links_correct += other.links_correct;
        self.exact += other.exact;
    }

    pub fn token_accuracy(&self) -> f64 {
        self.tokens_correct as f64 / self.tokens.max(1) as f64
    }

    pub fn link_accuracy(&self) -> f64 {
        self.links_correct as f64 / self.links.max(1) as f64
    }

    pub fn exact_match(&self) -> f64 {
        self.exact as f64 / self.examples.max(1) as f64
    }
}

pub(crate) struct Recorder<'m, 't, 'r> {
    model: &'m Model,
    pub tape: &'t mut Tape,
    rng: Option<&'r mut ChaCha8Rng>,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

impl<'m, 't, 'r> Recorder<'m, 't, 'r> {
    /// `rng` enables dropout.
    pub fn new(model: &'m Model, tape: &'t mut Tape, rng: Option<&'r mut ChaCha8Rng>) -> Self {
        Self { model, tape, rng }
    }

    fn p(&mut self, id: usize) -> Var {
        self.tape.param(id, &self.model.params[id])
    }

    fn linear(&mut self, x: Var, l: Linear) -> Result<Var, ModelError> {
        let w = self.p(l.w);
        let b = self.p(l.b);
        let y = self.tape.matmul(x, w)?;
        Ok(self.tape.add_row(y, b)?)
    }

    fn norm(&mut self, x: Var, n: Norm) -> Result<Var, ModelError> {
        let g = self.p(n.g);
        let b = self.p(n.b);
        Ok(self.tape.layer_norm(x, g, b)?)
    }

    fn dropout(&mut self, x: Var) -> Result<Var, ModelError> {
        let p = self.model.config.dropout;
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x);
        };
        if p == 0.0 {
            return Ok(x);
        }
        let n = self.tape.value(x).len();
        let keep = 1.0 / (1.0 - p);
        let mask = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        Ok(self.tape.mul_const(x, mask)?)
    }

    /// Multi-head attention. `q` holds queries at column offset `q_off`;
    /// `kv` holds keys at `k_off` and values at `v_off`. Segment `i` of the
    /// query rows attends to segment `i` of the key rows.
    #[allow(clippy::too_many_arguments)]
    fn attend(
        &mut self,
        q: Var,
        q_off: usize,
        q_segs: &[Seg],
        kv: Var,
        k_off: usize,
        v_off: usize,
        kv_segs: &[Seg],
        causal: bool,
    ) -> Result<Var, ModelError> {
        let heads = self.model.config.n_heads;
        let dh = self.model.config.d_model / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(q_segs.len());
        for (qs, ks) in q_segs.iter().zip(kv_segs) {
            let qrows = self.tape.slice_rows(q, qs.start, qs.len)?;
            let kvrows = if kv == q && qs.start == ks.start {
                qrows
            } else {
                self.tape.slice_rows(kv, ks.start, ks.len)?
            };
            let mask: Option<Vec<bool>> = causal.then(|| {
                (0..qs.len)
                    .flat_map(|i| (0..ks.len).map(move |j| j > i))
                    .collect()
            });
            let mut head_outs = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = self.tape.slice_cols(qrows, q_off + h * dh, dh)?;
                let kh = self.tape.slice_cols(kvrows, k_off + h * dh, dh)?;
                let vh = self.tape.slice_cols(kvrows, v_off + h * dh, dh)?;
                let s = self.tape.matmul_t(qh, kh)?;
                let mut s = self.tape.scale(s, scale);
                if let Some(m) = &mask {
                    s = self.tape.masked_fill(s, m, MASKED)?;
                }
                let a = self.tape.softmax(s);
                head_outs.push(self.tape.matmul(a, vh)?);
            }
            outs.push(if heads == 1 {
                head_outs[0]
            } else {
                self.tape.concat_cols(&head_outs)?
            });
        }
        Ok(if outs.len() == 1 {
            outs[0]
        } else {
            self.tape.concat_rows(&outs)?
        })
    }

    fn feed_forward(&mut self, x: Var, ln: Norm, ff1: Linear, ff2: Linear) -> Result<Var, ModelError> {
        let h = self.norm(x, ln)?;
        let h = self.linear(h, ff1)?;
        let h = self.tape.gelu(h);
        let h = self.linear(h, ff2)?;
        let h = self.dropout(h)?;
        Ok(self.tape.add(x, h)?)
    }

    fn embed(&mut self, table: usize, pos_table: usize, seqs: &[Vec<usize>]) -> Result<Var, ModelError> {
        let ids: Vec<usize> = seqs.iter().flatten().copied().collect();
        let pos: Vec<usize> = seqs.iter().flat_map(|s| 0..s.len()).collect();
        let t = self.p(table);
        let pt = self.p(pos_table);
        let e = self.tape.embedding(t, &ids)?;
        let pe = self.tape.embedding(pt, &pos)?;
        let x = self.tape.add(e, pe)?;
        self.dropout(x)
    }

    /// Encodes framed token sequences; returns packed final states.
    pub fn encode(&mut self, seqs: &[Vec<usize>]) -> Result<(Var, Vec<Seg>), ModelError> {
        let segs = segments(seqs.iter().map(Vec::len));
        let lay = &self.model.layout;
        let (tok, pos) = (lay.tok_emb, lay.enc_pos);
        let mut x = self.embed(tok, pos, seqs)?;
        let d = self.model.config.d_model;
        for i in 0..self.model.layout.enc.len() {
            let l = self.model.layout.enc[i].clone();
            let h = self.norm(x, l.ln1)?;
            let qkv = self.linear(h, l.qkv)?;
            let a = self.attend(qkv, 0, &segs, qkv, d, 2 * d, &segs, false)?;
            let a = self.linear(a, l.out)?;
            let a = self.dropout(a)?;
            x = self.tape.add(x, a)?;
            x = self.feed_forward(x, l.ln2, l.ff1, l.ff2)?;
        }
        let n = self.model.layout.enc_ln;
        Ok((self.norm(x, n)?, segs))
    }

    /// Teacher-forced decoder states (after the final norm) for `inputs`.
    pub fn decode(&mut self, inputs: &[Vec<usize>], enc: Var, enc_segs: &[Seg]) -> Result<Var, ModelError> {
        let segs = segments(inputs.iter().map(Vec::len));
        let lay = &self.model.layout;
        let (tok, pos) = (lay.dec_emb, lay.dec_pos);
        let mut x = self.embed(tok, pos, inputs)?;
        let d = self.model.config.d_model;
        for i in 0..self.model.layout.dec.len() {
            let l = self.model.layout.dec[i].clone();
            let h = self.norm(x, l.ln1)?;
            let qkv = self.linear(h, l.qkv)?;
            let a = self.attend(qkv, 0, &segs, qkv, d, 2 * d, &segs, true)?;
            let a = self.linear(a, l.self_out)?;
            let a = self.dropout(a)?;
            x = self.tape.add(x, a)?;
            let h = self.norm(x, l.ln2)?;
            let q = self.linear(h, l.cross_q)?;
            let kv = self.linear(enc, l.cross_kv)?;
            let a = self.attend(q, 0, &segs, kv, 0, d, enc_segs, false)?;
            let a = self.linear(a, l.cross_out)?;
            let a = self.dropout(a)?;
            x = self.tape.add(x, a)?;
            x = self.feed_forward(x, l.ln3, l.ff1, l.ff2)?;
        }
        let n = self.model.layout.dec_ln;
        self.norm(x, n)
    }

    /// Relation encodings, one row per surface.
    pub fn relations(&mut self, surfaces: &[Vec<usize>]) -> Result<Var, ModelError> {
        let (states, segs) = self.encode(surfaces)?;
        let total: usize = segs.iter().map(|s| s.len).sum();
        let mut pool = vec![0.0; surfaces.len() * total];
        for (r, s) in segs.iter().enumerate() {
            match self.model.config.pooling {
                Pooling::First => pool[r * total + s.start] = 1.0,
                Pooling::Mean => {
                    let inner = s.len.saturating_sub(2).max(1);
                    let first = if s.len > 2 { s.start + 1 } else { s.start };
                    for c in first..first + inner {
                        pool[r * total + c] = 1.0 / inner as f64;
                    }
                }
            }
        }
        let pool = self.tape.leaf(Tensor::matrix(surfaces.len(), total, pool)?);
        let pooled = self.tape.matmul(pool, states)?;
        let rel = self.model.layout.rel;
        self.linear(pooled, rel)
    }

    /// Skeleton cross-entropy plus `link_weight` times linking cross-entropy.
    pub fn joint_loss(&mut self, batch: &[TrainingExample], relations: Var) -> Result<(Var, BatchStats), ModelError> {
        let questions: Vec<Vec<usize>> = batch.iter().map(|e| e.question.clone()).collect();
        let (enc, enc_segs) = self.encode(&questions)?;
        let inputs: Vec<Vec<usize>> = batch.iter().map(|e| e.target[..e.target.len() - 1].to_vec()).collect();
        let states = self.decode(&inputs, enc, &enc_segs)?;
        let out = self.model.layout.out;
        let logits = self.linear(states, out)?;
        let targets: Vec<usize> = batch.iter().flat_map(|e| e.target[1..].iter().copied()).collect();
        let token_ce = self.tape.cross_entropy(logits, &targets)?;

        let mut link_rows = Vec::new();
        let mut link_gold = Vec::new();
        let mut link_owner = Vec::new();
        let mut offset = 0;
        for (i, e) in batch.iter().enumerate() {
            let mut seen = [false; MAX_PROPS];
            for (j, &t) in e.target[1..].iter().enumerate() {
                if let Some(SkeletonToken::Prop(k)) = SkeletonToken::from_index(t) {
                    if !seen[k as usize] {
                        seen[k as usize] = true;
                        link_rows.push(offset + j);
                        link_gold.push(e.gold_surfaces[k as usize]);
                        link_owner.push(i);
                    }
                }
            }
            offset += e.target.len() - 1;
        }

        let mut stats = BatchStats {
            examples: batch.len(),
            tokens: targets.len(),
            ..BatchStats::default()
        };
        let mut example_ok = vec![true; batch.len()];
        {
            let lv = self.tape.value(logits);
            let mut row = 0;
            for (i, e) in batch.iter().enumerate() {
                for &t in &e.target[1..] {
                    if argmax(lv.row(row)) == t {
                        stats.tokens_correct += 1;
                    } else {
                        example_ok[i] = false;
                    }
                    row += 1;
                }
            }
        }

        let mut loss = token_ce;
        stats.token_loss = self.tape.value(token_ce).item();
        if !link_rows.is_empty() {
            let h = self.tape.select_rows(states, &link_rows)?;
            let scores = self.tape.matmul_t(h, relations)?;
            let link_ce = self.tape.cross_entropy(scores, &link_gold)?;
            stats.link_loss = self.tape.value(link_ce).item();
            stats.links = link_rows.len();
            let sv = self.tape.value(scores);
            for (r, (&g, &owner)) in link_gold.iter().zip(&link_owner).enumerate() {
                if argmax(sv.row(r)) == g {
                    stats.links_correct += 1;
                } else {
                    example_ok[owner] = false;
                }
            }
            let weighted = self.tape.scale(link_ce, self.model.config.link_weight);
            loss = self.tape.add(loss, weighted)?;
        }
        stats.exact = example_ok.iter().filter(|&&ok| ok).count();
        stats.loss = self.tape.value(loss).item();
        Ok((loss, stats))
    }
}

impl Model {
    /// Records the joint loss of `batch` on `tape`. Dropout is active when
    /// `rng` is given.
    pub fn joint_loss(
        &self,
        tape: &mut Tape,
        batch: &[TrainingExample],
        surfaces: &[Vec<usize>],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Var, BatchStats), ModelError> {
        let mut r = Recorder::new(self, tape, rng);
        let rel = r.relations(surfaces)?;
        r.joint_loss(batch, rel)
    }

    /// Loss, statistics and a dense gradient per parameter.
    pub fn loss_and_grads(
        &self,
        batch: &[TrainingExample],
        surfaces: &[Vec<usize>],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(BatchStats, Vec<Tensor>), ModelError> {
        let mut tape = Tape::new();
        let (loss, stats) = self.joint_loss(&mut tape, batch, surfaces, rng)?;
        let grads = tape.backward(loss)?;
        let mut dense: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        for (id, g) in grads.params() {
            dense[id] = g;
        }
        Ok((stats, dense))
    }

    /// Teacher-forced statistics without gradients, in chunks of `batch_size`.
    pub fn evaluate_teacher_forced(
        &self,
        examples: &[TrainingExample],
        surfaces: &[Vec<usize>],
        batch_size: usize,
    ) -> Result<BatchStats, ModelError> {
        let mut total = BatchStats::default();
        let mut tape = Tape::new();
        let rel = Recorder::new(self, &mut tape, None).relations(surfaces)?;
        let rel_value = tape.value(rel).clone();
        for chunk in examples.chunks(batch_size.max(1)) {
            let mut tape = Tape::new();
            let rel = tape.leaf(rel_value.clone());
            let (_, stats) = Recorder::new(self, &mut tape, None).joint_loss(chunk, rel)?;
            total.merge(&stats);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use rand::SeedableRng;

    fn model(seed: u64) -> Model {
        Model::new(tiny_config(), vocab(), seed).unwrap()
    }

    #[test]
    fn encoder_shapes_and_order_sensitivity() {
        let m = model(1);
        let v = vocab();
        let a = v.encode_framed(&["john".into(), "krasinski".into(), "films".into()]);
        let b = v.encode_framed(&["films".into(), "krasinski".into(), "john".into()]);
        let mut tape = Tape::new();
        let (states, segs) = Recorder::new(&m, &mut tape, None).encode(&[a.clone(), b]).unwrap();
        assert_eq!(tape.shape(states), &[10, 16]);
        assert_eq!(segs[1].start, 5);
        let t = tape.value(states);
        assert_ne!(t.row(1), t.row(8));
        assert_ne!(t.row(0), t.row(5));
    }

    #[test]
    fn single_surface_catalog_has_zero_link_loss() {
        let m = model(2);
        let ex = one_hop();
        let mut ex = ex;
        ex.gold_surfaces = vec![0];
        let surfaces = vec![vocab().encode_framed(&["starred".into(), "actors".into()])];
        let mut tape = Tape::new();
        let (_, stats) = m.joint_loss(&mut tape, &[ex], &surfaces, None).unwrap();
        assert!(stats.link_loss.abs() < 1e-12);
        assert_eq!(stats.links, 1);
    }

    #[test]
    fn duplicated_example_leaves_mean_loss_unchanged() {
        let m = model(3);
        let cat = catalog();
        let surfaces = m.surface_ids(&cat);
        let ex = running_example();
        let mut t1 = Tape::new();
        let (_, one) = m.joint_loss(&mut t1, &[ex.clone()], &surfaces, None).unwrap();
        let mut t2 = Tape::new();
        let (_, two) = m.joint_loss(&mut t2, &[ex.clone(), ex], &surfaces, None).unwrap();
        assert!((one.loss - two.loss).abs() < 1e-12);
    }

    #[test]
    fn zero_link_weight_is_plain_token_cross_entropy() {
        let mut cfg = tiny_config();
        cfg.link_weight = 0.0;
        let m = Model::new(cfg, vocab(), 4).unwrap();
        let cat = catalog();
        let surfaces = m.surface_ids(&cat);
        let batch = [running_example(), one_hop()];
        let mut tape = Tape::new();
        let (loss, _) = m.joint_loss(&mut tape, &batch, &surfaces, None).unwrap();
        // independent cross-entropy from the inference logits
        let mut total = 0.0;
        let mut count = 0;
        for ex in &batch {
            let enc = m.encode_plain(&ex.question);
            let logits = m.teacher_forced_logits(&enc, &ex.target[..ex.target.len() - 1]);
            for (row, &t) in logits.iter().zip(&ex.target[1..]) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                total += lse - row[t];
                count += 1;
            }
        }
        assert!((tape.value(loss).item() - total / count as f64).abs() < 1e-9);
    }

    #[test]
    fn causal_mask_makes_steps_independent_of_the_future() {
        let m = model(5);
        let ex = running_example();
        let input = ex.target[..ex.target.len() - 1].to_vec();
        let mut changed = input.clone();
        for t in changed.iter_mut().skip(6) {
            *t = SkeletonToken::Dot.index();
        }
        let run = |inp: &Vec<usize>| {
            let mut tape = Tape::new();
            let mut r = Recorder::new(&m, &mut tape, None);
            let (enc, segs) = r.encode(&[ex.question.clone()]).unwrap();
            let s = r.decode(&[inp.clone()], enc, &segs).unwrap();
            tape.value(s).clone()
        };
        let a = run(&input);
        let b = run(&changed);
        for i in 0..6 {
            assert_eq!(a.row(i), b.row(i), "step {i}");
        }
        assert_ne!(a.row(7), b.row(7));
    }

    #[test]
    fn dropout_changes_training_loss_only() {
        let mut cfg = tiny_config();
        cfg.dropout = 0.5;
        let m = Model::new(cfg, vocab(), 6).unwrap();
        let surfaces = m.surface_ids(&catalog());
        let batch = [running_example()];
        let eval = |m: &Model| {
            let mut t = Tape::new();
            m.joint_loss(&mut t, &batch, &surfaces, None).unwrap().1.loss
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = Tape::new();
        let train = m.joint_loss(&mut t, &batch, &surfaces, Some(&mut rng)).unwrap().1.loss;
        assert_eq!(eval(&m), eval(&m));
        assert_ne!(eval(&m), train);
    }

    #[test]
    fn relation_rows_move_after_a_training_step() {
        let mut m = model(7);
        let cat = catalog();
        let surfaces = m.surface_ids(&cat);
        let before = m.relation_matrix(&cat);
        let (_, grads) = m.loss_and_grads(&[running_example()], &surfaces, None).unwrap();
        let mut opt = crate::tensor::Adam::new(m.params(), Default::default());
        opt.step(m.params_mut(), &grads);
        let after = m.relation_matrix(&cat);
        assert_ne!(before.row(0), after.row(0));
    }

    #[test]
    fn identical_surfaces_get_identical_rows_and_order_matters() {
        let m = model(8);
        let v = vocab();
        let s1 = v.encode_framed(&["directed".into(), "by".into()]);
        let s2 = v.encode_framed(&["by".into(), "directed".into()]);
        let mut tape = Tape::new();
        let rel = Recorder::new(&m, &mut tape, None)
            .relations(&[s1.clone(), s1, s2])
            .unwrap();
        let r = tape.value(rel);
        assert_eq!(r.row(0), r.row(1));
        assert_ne!(r.row(0), r.row(2));
    }
}
