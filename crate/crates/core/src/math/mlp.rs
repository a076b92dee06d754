use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// Layer widths (input first) and one activation per hidden layer.
/// The output layer is always linear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activations: Vec<Activation>,
}

impl MlpSpec {
    /// ReLU on every hidden layer.
    pub fn relu(layer_widths: Vec<usize>) -> Self {
        let hidden = layer_widths.len().saturating_sub(2);
        MlpSpec {
            layer_widths,
            hidden_activations: vec![Activation::Relu; hidden],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least two widths, got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config(format!("zero MLP width in {:?}", self.layer_widths)));
        }
        if self.hidden_activations.len() != self.layer_widths.len() - 2 {
            return Err(Error::Config(format!(
                "{} hidden layers but {} activations",
                self.layer_widths.len() - 2,
                self.hidden_activations.len()
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }
}

#[derive(Clone, Debug)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
    activation: Activation,
}

/// An MLP whose parameters live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Registers `{prefix}.layer{i}.weight` and `{prefix}.layer{i}.bias` for each layer.
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layer_widths.len() - 1);
        for (i, pair) in spec.layer_widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let weight = store.insert_glorot(&format!("{prefix}.layer{i}.weight"), fan_out, fan_in)?;
            let bias = store.insert_zeros(&format!("{prefix}.layer{i}.bias"), vec![fan_out])?;
            let activation = spec
                .hidden_activations
                .get(i)
                .copied()
                .unwrap_or(Activation::Identity);
            layers.push(Layer {
                weight,
                bias,
                activation,
            });
        }
        Ok(Mlp {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|l| [l.weight, l.bias])
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, input: Var) -> Result<Var> {
        let width = tape.value(input).len();
        if width != self.spec.input_width() {
            return Err(Error::Dimension(format!(
                "MLP expects input width {}, got {width}",
                self.spec.input_width()
            )));
        }
        let mut h = input;
        for layer in &self.layers {
            h = tape.linear(h, layer.weight, layer.bias)?;
            if layer.activation == Activation::Relu {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}
