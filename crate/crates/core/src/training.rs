//! Semi-supervised training.
//!
//! Per labeled triplet `(s, p, n, c)` the objective combines
//! - the triplet loss on `(translate(v_s, c), v_p, v_n)`;
//! - the classifier loss on the genuine encodings `v_s` and `v_p`, fed through a
//!   stop-gradient so the classifier never trains the encoder;
//! - the adversarial term on `translate(v_s, c)`, fed through a gradient-reversal
//!   node: the objective carries `ln p(c | v^c_s)`, so the classifier learns to
//!   reject translated vectors while the translator, receiving the reversed
//!   gradient, learns to pass them off as members of `c`;
//! - the cycle loss between `v_s` (as a stopped label) and
//!   `reconstruct(translate(v_s, c), category(s))`.
//!
//! Unlabeled `(item, category)` samples contribute the adversarial and cycle
//! terms only.

use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Catalog, CategoryId, ComplementaryCategoryMap, DatasetSplit, ItemIdx, LabeledPair};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Protocol};
use crate::losses::{classifier_loss, cycle_loss, triplet_loss, AblationPreset, LossWeights, TripletConfig};
use crate::math::{Optimizer, Tape, UpdateRule, Var};
use crate::model::Alcir;
use crate::retrieval::{AlcirRanker, CategoryIndex};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: UpdateRule,
    pub loss_weights: LossWeights,
    pub triplet: TripletConfig,
    pub early_stop_patience: usize,
    pub rng_seed: u64,
    /// Unlabeled `(item, category)` samples per labeled triplet.
    pub unlabeled_ratio: f64,
    /// Global gradient-norm cap per step; `None` (written as `0` in config
    /// files) disables clipping.
    #[serde(with = "zero_is_none")]
    pub max_grad_norm: Option<f64>,
}

mod zero_is_none {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(0.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = f64::deserialize(d)?;
        Ok((v != 0.0).then_some(v))
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            optimizer: UpdateRule::Sgd,
            loss_weights: LossWeights::default(),
            triplet: TripletConfig::default(),
            early_stop_patience: 5,
            rng_seed: 0,
            unlabeled_ratio: 1.0,
            max_grad_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_weights.validate()?;
        if self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("batch_size and early_stop_patience must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.unlabeled_ratio >= 0.0 && self.unlabeled_ratio.is_finite()) {
            return Err(Error::Config(format!("unlabeled_ratio must be nonnegative, got {}", self.unlabeled_ratio)));
        }
        if self.max_grad_norm.is_some_and(|m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        if self.triplet.margin < 0.0 {
            return Err(Error::Config("triplet margin must be nonnegative".into()));
        }
        Ok(())
    }

    /// Restricts the configured weights to the preset's terms; `sup` also
    /// turns off unlabeled sampling.
    pub fn with_preset(mut self, preset: AblationPreset) -> Result<Self> {
        self.loss_weights = preset.apply(&self.loss_weights)?;
        if !preset.uses_unlabeled() {
            self.unlabeled_ratio = 0.0;
        }
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub seed: ItemIdx,
    pub positive: ItemIdx,
    pub negative: ItemIdx,
    pub target_category: CategoryId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainBatch {
    pub labeled: Vec<Triplet>,
    /// `(item, sampled target category)`.
    pub unlabeled: Vec<(ItemIdx, CategoryId)>,
}

/// A uniformly drawn item of the pair's target category other than the target.
pub fn sample_negative<R: Rng + ?Sized>(pair: &LabeledPair, catalog: &Catalog, rng: &mut R) -> Result<ItemIdx> {
    let pool = catalog.items_in(pair.target_category);
    if pool.len() < 2 {
        return Err(Error::Sampling(format!(
            "category `{}` has no item besides `{}` to use as a negative",
            catalog.category_name(pair.target_category),
            catalog.item(pair.target).item_id
        )));
    }
    // draw from the pool with the positive removed
    let pos = pool.iter().position(|&i| i == pair.target);
    let n = pool.len() - usize::from(pos.is_some());
    let mut k = rng.random_range(0..n);
    if let Some(p) = pos {
        if k >= p {
            k += 1;
        }
    }
    Ok(pool[k])
}

/// A complementary category of `item`'s own category, or any other category
/// when the map has none.
fn sample_category<R: Rng + ?Sized>(
    item: ItemIdx,
    catalog: &Catalog,
    cc_map: &ComplementaryCategoryMap,
    rng: &mut R,
) -> CategoryId {
    let own = catalog.category_of(item);
    let cats = cc_map.categories(own);
    match cats.choose(rng) {
        Some(&c) => c,
        None => {
            let k = rng.random_range(0..catalog.n_categories() - 1);
            if k >= own {
                k + 1
            } else {
                k
            }
        }
    }
}

/// One epoch of shuffled batches with negatives and unlabeled samples drawn.
pub fn assemble_batches<R: Rng + ?Sized>(
    catalog: &Catalog,
    train: &[LabeledPair],
    cc_map: &ComplementaryCategoryMap,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Vec<TrainBatch> {
    let mut order = train.to_vec();
    order.shuffle(rng);
    order
        .chunks(cfg.batch_size)
        .map(|chunk| {
            let labeled: Vec<Triplet> = chunk
                .iter()
                .filter_map(|pair| match sample_negative(pair, catalog, rng) {
                    Ok(negative) => Some(Triplet {
                        seed: pair.seed,
                        positive: pair.target,
                        negative,
                        target_category: pair.target_category,
                    }),
                    Err(e) => {
                        log::debug!("skipping pair: {e}");
                        None
                    }
                })
                .collect();
            let n_unlabeled = (cfg.unlabeled_ratio * labeled.len() as f64).ceil() as usize;
            let unlabeled = (0..n_unlabeled)
                .map(|_| {
                    let item = rng.random_range(0..catalog.len());
                    (item, sample_category(item, catalog, cc_map, rng))
                })
                .collect();
            TrainBatch { labeled, unlabeled }
        })
        .collect()
}

/// Term weights and routing switches for one objective evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub triplet: f64,
    pub cycle: f64,
    pub cls_genuine: f64,
    pub cls_translated: f64,
    pub triplet_cfg: TripletConfig,
    /// Gradient reversal between the translator and the classifier.
    pub reverse_gradients: bool,
    /// Stop-gradient between the encoder and the classifier.
    pub isolate_encoder: bool,
}

impl Objective {
    /// The classifier loss averages the classifier's three inputs per labeled
    /// triplet: `v_s` and `v_p` (genuine) and `v^c_s` (translated).
    pub fn new(weights: &LossWeights, triplet_cfg: TripletConfig) -> Self {
        Objective {
            triplet: weights.triplet,
            cycle: weights.cycle,
            cls_genuine: weights.classifier * 2.0 / 3.0,
            cls_translated: weights.classifier / 3.0,
            triplet_cfg,
            reverse_gradients: true,
            isolate_encoder: true,
        }
    }

    /// Only the given terms, each with unit weight.
    pub fn only(triplet: bool, cycle: bool, cls_genuine: bool, cls_translated: bool) -> Self {
        let w = |on: bool| if on { 1.0 } else { 0.0 };
        Objective {
            triplet: w(triplet),
            cycle: w(cycle),
            cls_genuine: w(cls_genuine),
            cls_translated: w(cls_translated),
            triplet_cfg: TripletConfig::default(),
            reverse_gradients: true,
            isolate_encoder: true,
        }
    }
}

/// Mean value of each loss term over a batch. `cls_translated` is `-ln p` of
/// the translated vectors; disabled terms read 0. `total` is the optimized
/// objective, in which the translated term enters negated.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub triplet: f64,
    pub cycle: f64,
    pub cls_genuine: f64,
    pub cls_translated: f64,
    pub total: f64,
}

struct Terms {
    triplet: Vec<Var>,
    cycle: Vec<Var>,
    genuine: Vec<Var>,
    translated: Vec<Var>,
}

/// Records the batch objective on `tape`. Returns `None` when no term is active.
pub fn batch_objective<'p, T: Scalar>(
    model: &'p Alcir<T>,
    tape: &mut Tape<'p, T>,
    catalog: &Catalog,
    batch: &TrainBatch,
    obj: &Objective,
) -> Result<(Option<Var>, LossBreakdown)> {
    let mut terms = Terms {
        triplet: Vec::new(),
        cycle: Vec::new(),
        genuine: Vec::new(),
        translated: Vec::new(),
    };

    for t in &batch.labeled {
        let seed_item = catalog.item(t.seed);
        let v_s = model.encode(tape, seed_item)?;
        let v_p = model.encode(tape, catalog.item(t.positive))?;
        let translated = model.translate(tape, v_s, t.target_category)?;
        if obj.triplet > 0.0 {
            let v_n = model.encode(tape, catalog.item(t.negative))?;
            terms
                .triplet
                .push(triplet_loss(tape, translated, v_p, v_n, &obj.triplet_cfg)?);
        }
        if obj.cls_genuine > 0.0 {
            for (v, c) in [(v_s, seed_item.category), (v_p, t.target_category)] {
                let input = if obj.isolate_encoder { tape.stop_gradient(v) } else { v };
                let p = model.classify(tape, input, c)?;
                terms.genuine.push(classifier_loss(tape, p)?);
            }
        }
        adversarial_and_cycle(model, tape, obj, &mut terms, v_s, translated, t.target_category, seed_item.category)?;
    }

    for &(item, category) in &batch.unlabeled {
        let record = catalog.item(item);
        let v = model.encode(tape, record)?;
        let translated = model.translate(tape, v, category)?;
        adversarial_and_cycle(model, tape, obj, &mut terms, v, translated, category, record.category)?;
    }

    let mut parts = Vec::new();
    let mut breakdown = LossBreakdown::default();
    let mut mean_of = |tape: &mut Tape<'p, T>, vars: &[Var], weight: f64, report: &mut f64| -> Result<()> {
        if vars.is_empty() || weight == 0.0 {
            return Ok(());
        }
        let total = tape.add(vars)?;
        let mean = tape.scale(total, T::lit(1.0 / vars.len() as f64));
        *report = tape.scalar(mean).as_f64();
        parts.push(tape.scale(mean, T::lit(weight)));
        Ok(())
    };
    mean_of(tape, &terms.triplet, obj.triplet, &mut breakdown.triplet)?;
    mean_of(tape, &terms.cycle, obj.cycle, &mut breakdown.cycle)?;
    mean_of(tape, &terms.genuine, obj.cls_genuine, &mut breakdown.cls_genuine)?;
    // the objective carries ln p for translated vectors
    mean_of(tape, &terms.translated, -obj.cls_translated, &mut breakdown.cls_translated)?;

    if parts.is_empty() {
        return Ok((None, breakdown));
    }
    let loss = tape.add(&parts)?;
    breakdown.total = tape.scalar(loss).as_f64();
    Ok((Some(loss), breakdown))
}

#[allow(clippy::too_many_arguments)]
fn adversarial_and_cycle<'p, T: Scalar>(
    model: &'p Alcir<T>,
    tape: &mut Tape<'p, T>,
    obj: &Objective,
    terms: &mut Terms,
    original: Var,
    translated: Var,
    target: CategoryId,
    origin: CategoryId,
) -> Result<()> {
    if obj.cls_translated > 0.0 {
        let input = if obj.reverse_gradients {
            tape.gradient_reversal(translated)
        } else {
            translated
        };
        let p = model.classify(tape, input, target)?;
        terms.translated.push(classifier_loss(tape, p)?);
    }
    if obj.cycle > 0.0 {
        let rebuilt = model.reconstruct(tape, translated, origin)?;
        terms.cycle.push(cycle_loss(tape, original, rebuilt)?);
    }
    Ok(())
}

/// One optimizer step on `batch`.
pub fn train_step<T: Scalar>(
    model: &mut Alcir<T>,
    optimizer: &mut Optimizer<T>,
    catalog: &Catalog,
    batch: &TrainBatch,
    obj: &Objective,
) -> Result<LossBreakdown> {
    let (grads, breakdown) = {
        let mut tape = Tape::new(model.params());
        let (loss, breakdown) = batch_objective(model, &mut tape, catalog, batch, obj)?;
        if !breakdown.total.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss {breakdown:?}")));
        }
        (loss.map(|l| tape.backward(l)).transpose()?, breakdown)
    };
    if let Some(grads) = grads {
        optimizer.step(model.params_mut(), &grads)?;
    }
    Ok(breakdown)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub triplet: f64,
    pub cycle: f64,
    pub cls_genuine: f64,
    pub cls_translated: f64,
    pub val_hr10: Option<f64>,
    pub val_ndcg: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainingLog {
    /// `epoch,triplet,cycle,cls_genuine,cls_translated,val_hr10,val_ndcg`;
    /// missing validation values are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "triplet", "cycle", "cls_genuine", "cls_translated", "val_hr10", "val_ndcg"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:.6}", e.triplet),
                format!("{:.6}", e.cycle),
                format!("{:.6}", e.cls_genuine),
                format!("{:.6}", e.cls_translated),
                opt(e.val_hr10),
                opt(e.val_ndcg),
            ])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<training log>".into(),
            source: e,
        })
    }
}

/// Trains `model` and returns the parameters of the epoch with the best
/// validation HR@10 (NDCG breaks ties). Without validation pairs, the last
/// epoch's parameters are returned.
pub fn fit<T: Scalar>(
    mut model: Alcir<T>,
    catalog: &Catalog,
    split: &DatasetSplit,
    cc_map: &ComplementaryCategoryMap,
    cfg: &TrainConfig,
) -> Result<(Alcir<T>, TrainingLog)> {
    cfg.validate()?;
    let mut log = TrainingLog::default();
    if cfg.epochs == 0 {
        return Ok((model, log));
    }
    if split.train.is_empty() {
        return Err(Error::Empty("no training pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate)?;
    if let Some(max) = cfg.max_grad_norm {
        optimizer = optimizer.with_clipping(max)?;
    }
    let obj = Objective::new(&cfg.loss_weights, cfg.triplet);
    let mut best: Option<((f64, f64), usize, crate::math::ParamStore<T>)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        let batches = assemble_batches(catalog, &split.train, cc_map, cfg, &mut rng);
        let mut sum = LossBreakdown::default();
        for (i, batch) in batches.iter().enumerate() {
            let b = train_step(&mut model, &mut optimizer, catalog, batch, &obj)
                .map_err(|e| match e {
                    Error::Divergence(m) => Error::Divergence(format!("epoch {epoch}, batch {i}: {m}")),
                    other => other,
                })?;
            sum.triplet += b.triplet;
            sum.cycle += b.cycle;
            sum.cls_genuine += b.cls_genuine;
            sum.cls_translated += b.cls_translated;
        }
        let n = batches.len().max(1) as f64;
        let mut entry = EpochLog {
            epoch,
            triplet: sum.triplet / n,
            cycle: sum.cycle / n,
            cls_genuine: sum.cls_genuine / n,
            cls_translated: sum.cls_translated / n,
            val_hr10: None,
            val_ndcg: None,
        };

        let mut stop = false;
        if !split.validation.is_empty() {
            let index = CategoryIndex::<T>::build(catalog, &model)?;
            let ranker = AlcirRanker::new(catalog, &model, &index);
            let m = evaluate(&ranker, catalog, cc_map, &split.validation, Protocol::CategoryAware, &[10])?;
            let score = (m.hr(10), m.ndcg);
            entry.val_hr10 = Some(score.0);
            entry.val_ndcg = Some(score.1);
            let improved = best.as_ref().is_none_or(|(b, ..)| score > *b);
            if improved {
                best = Some((score, epoch, model.params().clone()));
                since_best = 0;
            } else {
                since_best += 1;
                stop = since_best >= cfg.early_stop_patience;
            }
        }
        log::debug!("epoch {epoch}: {entry:?}");
        log.epochs.push(entry);
        if stop {
            log.stopped_early = true;
            break;
        }
    }
    if let Some((_, epoch, params)) = best {
        model.load_params(params)?;
        log.best_epoch = Some(epoch);
    }
    Ok((model, log))
}
