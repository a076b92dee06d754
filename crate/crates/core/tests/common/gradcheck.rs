//! Analytic gradients against central finite differences.

use alcir::data::ItemRecord;
use alcir::losses::{classifier_loss, cycle_loss, triplet_loss, Distance, TripletConfig};
use alcir::math::{DenseArray, ParamStore, Tape};
use alcir::model::{Alcir, ModelConfig, ModelSizes, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
/// Denominator floor so that gradients that are zero on both sides compare as equal.
const FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
enum Loss {
    Triplet,
    Cycle,
    Classifier,
}

struct Case {
    model: Alcir<f64>,
    items: [ItemRecord; 3],
    target: usize,
    triplet: TripletConfig,
}

fn hidden(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let layers = rng.random_range(0..=2);
    (0..layers).map(|_| rng.random_range(1..=8)).collect()
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_categories = rng.random_range(2..=5);
    let n_bins = rng.random_range(1..=5);
    let feature_dim = rng.random_range(1..=8);
    let sizes = ModelSizes {
        latent_dim: rng.random_range(2..=8),
        category_embedding_dim: rng.random_range(1..=8),
        price_embedding_dim: rng.random_range(1..=8),
        image_hidden: hidden(&mut rng),
        image_out: rng.random_range(1..=8),
        fusion_hidden: hidden(&mut rng),
        translator_hidden: hidden(&mut rng),
        classifier_hidden: hidden(&mut rng),
        reconstructor_hidden: hidden(&mut rng),
    };
    let config = ModelConfig::from_sizes(&sizes, feature_dim, n_categories, n_bins).unwrap();
    let mut model = Alcir::new(config, seed).unwrap();
    // zero-initialized biases put dead units exactly on a ReLU kink; check at a generic point instead
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for v in model.params_mut().get_mut(id).as_mut_slice() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let mut item = |name: &str, category: usize| ItemRecord {
        item_id: name.to_string(),
        category,
        price: 1.0,
        price_bin: Some(rng.random_range(0..n_bins)),
        image_features: (0..feature_dim).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    };
    let origin = 0;
    let target = 1 + seed as usize % (n_categories - 1);
    let items = [item("s", origin), item("p", target), item("n", target)];
    let distance = if seed.is_multiple_of(2) { Distance::NegCosine } else { Distance::Euclidean };
    // a wide margin keeps the hinge active
    Case {
        model,
        items,
        target,
        triplet: TripletConfig { margin: 5.0, distance },
    }
}

/// Loss on `tape`. `frozen_origin` replaces the stop-gradient branch of the
/// cycle loss by a constant so the finite-difference side sees the same
/// function the analytic side differentiates.
fn record<'p>(
    case: &Case,
    model: &'p Alcir<f64>,
    tape: &mut Tape<'p, f64>,
    loss: Loss,
    frozen_origin: Option<&[f64]>,
) -> alcir::Result<alcir::math::Var> {
    let [s, p, n] = &case.items;
    let v_s = model.encode(tape, s)?;
    let translated = model.translate(tape, v_s, case.target)?;
    match loss {
        Loss::Triplet => {
            let v_p = model.encode(tape, p)?;
            let v_n = model.encode(tape, n)?;
            triplet_loss(tape, translated, v_p, v_n, &case.triplet)
        }
        Loss::Cycle => {
            let back = model.reconstruct(tape, translated, s.category)?;
            let origin = match frozen_origin {
                Some(v) => tape.input(v.to_vec()),
                None => v_s,
            };
            cycle_loss(tape, origin, back)
        }
        Loss::Classifier => {
            let prob = model.classify(tape, translated, case.target)?;
            classifier_loss(tape, prob)
        }
    }
}

/// A random configuration on which all three losses are active; narrow
/// networks with dead units can produce identically zero outputs.
fn active_case(config: u64) -> Case {
    (0..)
        .map(|attempt| random_case(config * 1000 + attempt))
        .find(|case| {
            [Loss::Triplet, Loss::Cycle, Loss::Classifier]
                .into_iter()
                .all(|loss| value(case, &case.model, loss, None).is_ok_and(|v| v > 1e-6))
        })
        .unwrap()
}

fn value(case: &Case, model: &Alcir<f64>, loss: Loss, frozen: Option<&[f64]>) -> alcir::Result<f64> {
    let mut tape = Tape::new(model.params());
    let l = record(case, model, &mut tape, loss, frozen)?;
    Ok(tape.scalar(l))
}

/// Max relative error per network.
fn check(case: &Case, loss: Loss) -> Vec<(Network, f64, usize)> {
    let model = &case.model;
    let grads = {
        let mut tape = Tape::new(model.params());
        let l = record(case, model, &mut tape, loss, None).unwrap();
        tape.backward(l).unwrap()
    };
    let frozen = model.encode_value(&case.items[0]).unwrap();
    let mut probe = model.clone();
    let mut out = Vec::new();
    for net in Network::ALL {
        let mut worst = 0.0f64;
        let mut nonzero = 0;
        for id in model.network_params(net) {
            let len = model.params().get(id).len();
            let analytic = grads.dense(id, len);
            for j in 0..len {
                let base = model.params().get(id).as_slice()[j];
                probe.params_mut().get_mut(id).as_mut_slice()[j] = base + H;
                let up = value(case, &probe, loss, Some(&frozen)).unwrap();
                probe.params_mut().get_mut(id).as_mut_slice()[j] = base - H;
                let down = value(case, &probe, loss, Some(&frozen)).unwrap();
                probe.params_mut().get_mut(id).as_mut_slice()[j] = base;
                let numeric = (up - down) / (2.0 * H);
                let a = analytic[j];
                if a != 0.0 {
                    nonzero += 1;
                }
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
                worst = worst.max(rel);
            }
        }
        out.push((net, worst, nonzero));
    }
    out
}

pub fn networks_and_losses_match_finite_differences() {
    let start = std::time::Instant::now();
    for seed in 0..20 {
        let case = active_case(seed);
        for loss in [Loss::Triplet, Loss::Cycle, Loss::Classifier] {
            for (net, worst, nonzero) in check(&case, loss) {
                assert!(worst < TOLERANCE, "config {seed}, {loss:?}, {net:?}: relative error {worst:e}");
                let reached = matches!(
                    (loss, net),
                    (_, Network::Encoder | Network::Translator)
                        | (Loss::Cycle, Network::Reconstructor)
                        | (Loss::Classifier, Network::Classifier)
                );
                if !reached {
                    assert_eq!(nonzero, 0, "config {seed}, {loss:?} leaked into {net:?}");
                }
            }
        }
    }
    assert!(start.elapsed().as_secs() < 30);
}

pub fn gradients_are_not_vacuous() {
    // every network reached by a loss should see some nonzero gradient
    let case = active_case(3);
    let by = |loss| check(&case, loss);
    let triplet = by(Loss::Triplet);
    assert!(triplet[0].2 > 0 && triplet[1].2 > 0);
    assert!(by(Loss::Cycle)[3].2 > 0);
    assert!(by(Loss::Classifier)[2].2 > 0);
}

pub fn stop_gradient_toy_graph() {
    // loss = stop(Wx + b) · (Wx + b): the gradient treats the first factor as a constant
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::<f64>::new(7);
    let w = store.insert_glorot("w", 3, 4).unwrap();
    let b = store
        .insert("b", DenseArray::vector((0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
        .unwrap();
    let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

    let forward = |store: &ParamStore<f64>, frozen: Option<&[f64]>| -> f64 {
        let mut tape = Tape::new(store);
        let input = tape.input(x.clone());
        let y = tape.linear(input, w, b).unwrap();
        let s = match frozen {
            Some(f) => tape.input(f.to_vec()),
            None => tape.stop_gradient(y),
        };
        let l = tape.dot(s, y).unwrap();
        tape.scalar(l)
    };
    let (grads, y0) = {
        let mut tape = Tape::new(&store);
        let input = tape.input(x.clone());
        let y = tape.linear(input, w, b).unwrap();
        let s = tape.stop_gradient(y);
        let l = tape.dot(s, y).unwrap();
        (tape.backward(l).unwrap(), tape.value(y).to_vec())
    };
    let mut probe = store.clone();
    for id in [w, b] {
        let analytic = grads.dense(id, store.get(id).len());
        for j in 0..analytic.len() {
            let base = store.get(id).as_slice()[j];
            probe.get_mut(id).as_mut_slice()[j] = base + H;
            let up = forward(&probe, Some(&y0));
            probe.get_mut(id).as_mut_slice()[j] = base - H;
            let down = forward(&probe, Some(&y0));
            probe.get_mut(id).as_mut_slice()[j] = base;
            let numeric = (up - down) / (2.0 * H);
            let rel = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(FLOOR);
            assert!(rel < TOLERANCE, "{}[{j}]: {} vs {numeric}", store.path(id), analytic[j]);
        }
    }
    // the stop leaves the forward value alone
    let full = forward(&store, None);
    assert!((full - y0.iter().map(|v| v * v).sum::<f64>()).abs() < 1e-12);
}
