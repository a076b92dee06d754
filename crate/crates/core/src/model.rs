//! Item encoder, category translator, classifier and reconstructor.

use serde::{Deserialize, Serialize};

use crate::data::{CategoryId, ItemRecord};
use crate::error::{Error, Result};
use crate::math::{Mlp, MlpSpec, ParamId, ParamStore, Tape, Var};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub image_mlp: MlpSpec,
    pub category_embedding_dim: usize,
    pub price_bin_embedding_dim: usize,
    pub fusion_mlp: MlpSpec,
    pub latent_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatorConfig {
    pub target_category_embedding_dim: usize,
    pub mlp: MlpSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub mlp: MlpSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructorConfig {
    pub origin_category_embedding_dim: usize,
    pub mlp: MlpSpec,
}

/// Full architecture description, echoed into checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_categories: usize,
    pub n_price_bins: usize,
    pub encoder: EncoderConfig,
    pub translator: TranslatorConfig,
    pub classifier: ClassifierConfig,
    pub reconstructor: ReconstructorConfig,
}

/// Width knobs from which a [`ModelConfig`] is derived.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSizes {
    pub latent_dim: usize,
    pub category_embedding_dim: usize,
    pub price_embedding_dim: usize,
    pub image_hidden: Vec<usize>,
    pub image_out: usize,
    pub fusion_hidden: Vec<usize>,
    pub translator_hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    pub reconstructor_hidden: Vec<usize>,
}

impl Default for ModelSizes {
    fn default() -> Self {
        ModelSizes {
            latent_dim: 32,
            category_embedding_dim: 8,
            price_embedding_dim: 8,
            image_hidden: vec![64],
            image_out: 32,
            fusion_hidden: vec![64],
            translator_hidden: vec![64],
            classifier_hidden: vec![64],
            reconstructor_hidden: vec![64],
        }
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl ModelConfig {
    pub fn from_sizes(sizes: &ModelSizes, feature_dim: usize, n_categories: usize, n_price_bins: usize) -> Result<Self> {
        let d = sizes.latent_dim;
        let fusion_in = sizes.image_out + sizes.category_embedding_dim + sizes.price_embedding_dim;
        let cfg = ModelConfig {
            n_categories,
            n_price_bins,
            encoder: EncoderConfig {
                image_mlp: MlpSpec::relu(widths(feature_dim, &sizes.image_hidden, sizes.image_out)),
                category_embedding_dim: sizes.category_embedding_dim,
                price_bin_embedding_dim: sizes.price_embedding_dim,
                fusion_mlp: MlpSpec::relu(widths(fusion_in, &sizes.fusion_hidden, d)),
                latent_dim: d,
            },
            translator: TranslatorConfig {
                target_category_embedding_dim: sizes.category_embedding_dim,
                mlp: MlpSpec::relu(widths(d + sizes.category_embedding_dim, &sizes.translator_hidden, d)),
            },
            classifier: ClassifierConfig {
                mlp: MlpSpec::relu(widths(d, &sizes.classifier_hidden, n_categories)),
            },
            reconstructor: ReconstructorConfig {
                origin_category_embedding_dim: sizes.category_embedding_dim,
                mlp: MlpSpec::relu(widths(d + sizes.category_embedding_dim, &sizes.reconstructor_hidden, d)),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        for spec in [&e.image_mlp, &e.fusion_mlp, &self.translator.mlp, &self.classifier.mlp, &self.reconstructor.mlp] {
            spec.validate()?;
        }
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(what.to_string()))
            }
        };
        check(self.n_categories >= 2, "at least two categories are required")?;
        check(self.n_price_bins >= 1, "at least one price bin is required")?;
        check(
            e.category_embedding_dim > 0 && e.price_bin_embedding_dim > 0 && e.latent_dim > 0,
            "embedding and latent widths must be positive",
        )?;
        check(
            e.fusion_mlp.input_width()
                == e.image_mlp.output_width() + e.category_embedding_dim + e.price_bin_embedding_dim,
            "encoder fusion input must equal image output + category + price embedding widths",
        )?;
        check(e.fusion_mlp.output_width() == e.latent_dim, "encoder output must equal the latent width")?;
        let t = &self.translator;
        check(
            t.target_category_embedding_dim > 0
                && t.mlp.input_width() == e.latent_dim + t.target_category_embedding_dim
                && t.mlp.output_width() == e.latent_dim,
            "translator must map latent + category embedding to latent",
        )?;
        check(
            self.classifier.mlp.input_width() == e.latent_dim
                && self.classifier.mlp.output_width() == self.n_categories,
            "classifier must map latent to one score per category",
        )?;
        let r = &self.reconstructor;
        check(
            r.origin_category_embedding_dim > 0
                && r.mlp.input_width() == e.latent_dim + r.origin_category_embedding_dim
                && r.mlp.output_width() == e.latent_dim,
            "reconstructor must map latent + category embedding to latent",
        )
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.image_mlp.input_width()
    }
}

/// The four sub-networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Network {
    Encoder,
    Translator,
    Classifier,
    Reconstructor,
}

impl Network {
    pub const ALL: [Network; 4] = [
        Network::Encoder,
        Network::Translator,
        Network::Classifier,
        Network::Reconstructor,
    ];

    /// Parameter-path prefix owned by this network.
    pub fn prefix(self) -> &'static str {
        match self {
            Network::Encoder => "encoder.",
            Network::Translator => "translator.",
            Network::Classifier => "classifier.",
            Network::Reconstructor => "reconstructor.",
        }
    }
}

#[derive(Clone, Debug)]
struct Encoder {
    image: Mlp,
    category_table: ParamId,
    price_table: ParamId,
    fusion: Mlp,
}

#[derive(Clone, Debug)]
struct Conditioned {
    category_table: ParamId,
    mlp: Mlp,
}

/// Model parameters plus the handles that wire them into the four networks.
#[derive(Clone, Debug)]
pub struct Alcir<T: Scalar> {
    config: ModelConfig,
    params: ParamStore<T>,
    encoder: Encoder,
    translator: Conditioned,
    classifier: Mlp,
    reconstructor: Conditioned,
}

impl<T: Scalar> Alcir<T> {
    /// Freshly initialized model; identical `seed`s give identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new(seed);
        let e = &config.encoder;
        let encoder = Encoder {
            image: Mlp::register(&mut params, "encoder.image", &e.image_mlp)?,
            category_table: params.insert_glorot(
                "encoder.category_embedding",
                config.n_categories,
                e.category_embedding_dim,
            )?,
            price_table: params.insert_glorot(
                "encoder.price_embedding",
                config.n_price_bins,
                e.price_bin_embedding_dim,
            )?,
            fusion: Mlp::register(&mut params, "encoder.fusion", &e.fusion_mlp)?,
        };
        let translator = Conditioned {
            category_table: params.insert_glorot(
                "translator.category_embedding",
                config.n_categories,
                config.translator.target_category_embedding_dim,
            )?,
            mlp: Mlp::register(&mut params, "translator.mlp", &config.translator.mlp)?,
        };
        let classifier = Mlp::register(&mut params, "classifier.mlp", &config.classifier.mlp)?;
        let reconstructor = Conditioned {
            category_table: params.insert_glorot(
                "reconstructor.category_embedding",
                config.n_categories,
                config.reconstructor.origin_category_embedding_dim,
            )?,
            mlp: Mlp::register(&mut params, "reconstructor.mlp", &config.reconstructor.mlp)?,
        };
        Ok(Alcir {
            config,
            params,
            encoder,
            translator,
            classifier,
            reconstructor,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Replaces every parameter value, keeping the wiring. Shapes must match.
    pub fn load_params(&mut self, params: ParamStore<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters supplied, model has {}",
                params.len(),
                self.params.len()
            )));
        }
        for ((_, pa, a), (_, pb, b)) in self.params.iter().zip(params.iter()) {
            if pa != pb || a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{pb}` {:?} does not match `{pa}` {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn network_params(&self, net: Network) -> Vec<ParamId> {
        self.params.ids_with_prefix(net.prefix()).collect()
    }

    fn check_category(&self, c: CategoryId) -> Result<()> {
        if c >= self.config.n_categories {
            return Err(Error::UnknownCategory(format!(
                "category index {c} (model knows {})",
                self.config.n_categories
            )));
        }
        Ok(())
    }

    /// `v_i`: image MLP output, category and price-bin embeddings, concatenated
    /// and passed through the fusion MLP.
    pub fn encode(&self, tape: &mut Tape<'_, T>, item: &ItemRecord) -> Result<Var> {
        let bin = item.price_bin.ok_or_else(|| {
            Error::Config(format!("item `{}` has no price bin; discretize prices first", item.item_id))
        })?;
        if item.image_features.len() != self.config.feature_dim() {
            return Err(Error::Dimension(format!(
                "item `{}` has {} features, model expects {}",
                item.item_id,
                item.image_features.len(),
                self.config.feature_dim()
            )));
        }
        let x = tape.input(item.image_features.iter().map(|&f| T::lit(f as f64)).collect());
        let image = self.encoder.image.forward(tape, x)?;
        let category = tape.embedding(self.encoder.category_table, item.category)?;
        let price = tape.embedding(self.encoder.price_table, bin)?;
        let joined = tape.concat(&[image, category, price]);
        self.encoder.fusion.forward(tape, joined)
    }

    /// `v^c`: `v` translated into the latent space of `target`.
    pub fn translate(&self, tape: &mut Tape<'_, T>, v: Var, target: CategoryId) -> Result<Var> {
        self.check_category(target)?;
        self.check_latent(tape, v)?;
        let c = tape.embedding(self.translator.category_table, target)?;
        let joined = tape.concat(&[v, c]);
        self.translator.mlp.forward(tape, joined)
    }

    /// Softmax over category scores.
    pub fn class_probabilities(&self, tape: &mut Tape<'_, T>, v: Var) -> Result<Var> {
        self.check_latent(tape, v)?;
        let logits = self.classifier.forward(tape, v)?;
        Ok(tape.softmax(logits))
    }

    /// Probability that `v` represents an item of `category`.
    pub fn classify(&self, tape: &mut Tape<'_, T>, v: Var, category: CategoryId) -> Result<Var> {
        self.check_category(category)?;
        let probs = self.class_probabilities(tape, v)?;
        tape.pick(probs, category)
    }

    /// `v'`: a translated vector mapped back toward its origin category.
    pub fn reconstruct(&self, tape: &mut Tape<'_, T>, translated: Var, origin: CategoryId) -> Result<Var> {
        self.check_category(origin)?;
        self.check_latent(tape, translated)?;
        let c = tape.embedding(self.reconstructor.category_table, origin)?;
        let joined = tape.concat(&[translated, c]);
        self.reconstructor.mlp.forward(tape, joined)
    }

    fn check_latent(&self, tape: &Tape<'_, T>, v: Var) -> Result<()> {
        let w = tape.value(v).len();
        if w != self.config.latent_dim() {
            return Err(Error::Dimension(format!(
                "latent vector of width {w}, model uses {}",
                self.config.latent_dim()
            )));
        }
        Ok(())
    }

    /// Encoder output without keeping a tape around.
    pub fn encode_value(&self, item: &ItemRecord) -> Result<Vec<T>> {
        let mut tape = Tape::new(&self.params);
        let v = self.encode(&mut tape, item)?;
        Ok(tape.value(v).to_vec())
    }

    /// Translated encoding `v^c_s` of `item` into `target`.
    pub fn translate_value(&self, item: &ItemRecord, target: CategoryId) -> Result<Vec<T>> {
        let mut tape = Tape::new(&self.params);
        let v = self.encode(&mut tape, item)?;
        let t = self.translate(&mut tape, v, target)?;
        Ok(tape.value(t).to_vec())
    }
}
