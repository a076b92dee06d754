//! Gradient routing: reversal, stop-gradient, encoder isolation and the adversarial sign.

use alcir::losses::cycle_loss;
use alcir::math::{DenseArray, Gradients, Optimizer, ParamStore, Tape};
use alcir::model::{Alcir, Network};
use alcir::training::{batch_objective, train_step, Objective, TrainBatch};
use super::{first_batch, small_model, small_synthetic};

fn toy_store() -> (ParamStore<f64>, alcir::math::ParamId, alcir::math::ParamId) {
    let mut store = ParamStore::new(3);
    let w = store.insert_glorot("w", 3, 4).unwrap();
    let b = store
        .insert("b", DenseArray::vector(vec![0.1, -0.2, 0.3]).unwrap())
        .unwrap();
    (store, w, b)
}

const X: [f64; 4] = [0.5, -1.0, 2.0, 0.25];
const C: [f64; 3] = [1.5, -0.5, 0.75];

/// `c · f(Wx + b)` for a routing node `f`.
fn toy_grads(store: &ParamStore<f64>, route: impl Fn(&mut Tape<'_, f64>, alcir::math::Var) -> alcir::math::Var) -> (f64, Gradients<f64>) {
    let (w, b) = (store.id("w").unwrap(), store.id("b").unwrap());
    let mut tape = Tape::new(store);
    let x = tape.input(X.to_vec());
    let y = tape.linear(x, w, b).unwrap();
    let r = route(&mut tape, y);
    let c = tape.input(C.to_vec());
    let l = tape.dot(r, c).unwrap();
    (tape.scalar(l), tape.backward(l).unwrap())
}

pub fn reversal_backward_is_exact_negation() {
    let (store, w, b) = toy_store();
    let (plain_value, plain) = toy_grads(&store, |_, y| y);
    let (rev_value, rev) = toy_grads(&store, |t, y| t.gradient_reversal(y));
    assert_eq!(plain_value, rev_value);
    for id in [w, b] {
        let p = plain.get(id).unwrap();
        let r = rev.get(id).unwrap();
        assert!(p.iter().any(|&v| v != 0.0));
        for (a, b) in p.iter().zip(r) {
            assert_eq!(*b, -*a);
        }
    }
}

pub fn stop_gradient_backward_is_zero() {
    let (store, w, b) = toy_store();
    let (plain_value, _) = toy_grads(&store, |_, y| y);
    let (value, grads) = toy_grads(&store, |t, y| t.stop_gradient(y));
    assert_eq!(plain_value, value);
    for id in [w, b] {
        assert!(grads.dense(id, store.get(id).len()).iter().all(|&g| g == 0.0));
    }
}

pub fn cycle_loss_blocks_the_label_path() {
    let (store, w, b) = toy_store();
    let mut tape = Tape::new(&store);
    let x = tape.input(X.to_vec());
    let original = tape.linear(x, w, b).unwrap();
    let reconstructed = tape.input(C.to_vec());
    let l = cycle_loss(&mut tape, original, reconstructed).unwrap();
    assert!(tape.scalar(l) > 0.0);
    let (grads, nodes) = tape.backward_with_inputs(l).unwrap();
    for id in [w, b] {
        assert!(grads.dense(id, store.get(id).len()).iter().all(|&g| g == 0.0));
    }
    assert!(nodes.get(reconstructed).unwrap().iter().any(|&g| g != 0.0));
}

fn objective_grads(model: &Alcir<f64>, batch: &TrainBatch, obj: &Objective) -> Gradients<f64> {
    let data = small_synthetic(0);
    let mut tape = Tape::new(model.params());
    let (loss, _) = batch_objective(model, &mut tape, &data.catalog, batch, obj).unwrap();
    tape.backward(loss.expect("active objective")).unwrap()
}

fn network_grads(model: &Alcir<f64>, grads: &Gradients<f64>, net: Network) -> Vec<f64> {
    model
        .network_params(net)
        .into_iter()
        .flat_map(|id| grads.dense(id, model.params().get(id).len()))
        .collect()
}

pub fn genuine_classifier_loss_leaves_the_encoder_alone() {
    let data = small_synthetic(0);
    let model = small_model(&data, 0);
    let batch = first_batch(&data, 1.0);
    let grads = objective_grads(&model, &batch, &Objective::only(false, false, true, false));
    assert!(network_grads(&model, &grads, Network::Encoder).iter().all(|&g| g == 0.0));
    assert!(network_grads(&model, &grads, Network::Classifier).iter().any(|&g| g != 0.0));

    // and one optimizer step leaves encoder parameters bitwise unchanged
    let mut trained = model.clone();
    let mut opt = Optimizer::sgd(0.5).unwrap();
    train_step(&mut trained, &mut opt, &data.catalog, &batch, &Objective::only(false, false, true, false)).unwrap();
    for id in model.network_params(Network::Encoder) {
        assert_eq!(model.params().get(id), trained.params().get(id));
    }
    let moved = model
        .network_params(Network::Classifier)
        .into_iter()
        .any(|id| model.params().get(id) != trained.params().get(id));
    assert!(moved);
}

pub fn adversarial_sign_flips_exactly_without_reversal() {
    let data = small_synthetic(0);
    let model = small_model(&data, 0);
    let batch = first_batch(&data, 1.0);
    let with = Objective::only(false, false, false, true);
    let without = Objective {
        reverse_gradients: false,
        ..with
    };
    let g_with = objective_grads(&model, &batch, &with);
    let g_without = objective_grads(&model, &batch, &without);
    let a = network_grads(&model, &g_with, Network::Translator);
    let b = network_grads(&model, &g_without, Network::Translator);
    assert!(a.iter().any(|&g| g != 0.0));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(*x, -*y);
    }
    // the classifier sits after the reversal and sees the same gradient either way
    assert_eq!(
        network_grads(&model, &g_with, Network::Classifier),
        network_grads(&model, &g_without, Network::Classifier)
    );
}

pub fn supervised_step_touches_only_encoder_and_translator() {
    let data = small_synthetic(0);
    let model = small_model(&data, 0);
    let batch = first_batch(&data, 0.0);
    assert!(batch.unlabeled.is_empty());
    let weights = alcir::losses::LossWeights::new(1.0, 0.0, 0.0).unwrap();
    let obj = Objective::new(&weights, Default::default());
    let mut trained = model.clone();
    let mut opt = Optimizer::sgd(0.5).unwrap();
    train_step(&mut trained, &mut opt, &data.catalog, &batch, &obj).unwrap();
    for net in [Network::Classifier, Network::Reconstructor] {
        for id in model.network_params(net) {
            assert_eq!(model.params().get(id), trained.params().get(id), "{}", model.params().path(id));
        }
    }
    let moved = model
        .network_params(Network::Translator)
        .into_iter()
        .any(|id| model.params().get(id) != trained.params().get(id));
    assert!(moved);
}

pub fn cycle_loss_reaches_the_encoder_through_the_reconstruction() {
    let data = small_synthetic(0);
    let model = small_model(&data, 0);
    let batch = first_batch(&data, 0.0);
    let grads = objective_grads(&model, &batch, &Objective::only(false, true, false, false));
    for net in [Network::Encoder, Network::Translator, Network::Reconstructor] {
        assert!(network_grads(&model, &grads, net).iter().any(|&g| g != 0.0), "{net:?}");
    }
    assert!(network_grads(&model, &grads, Network::Classifier).iter().all(|&g| g == 0.0));
}
