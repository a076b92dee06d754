//! Triplet, cycle-consistency and classifier losses, and their convex combination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ops, Tape, Var};
use crate::scalar::Scalar;

/// Weights of the triplet, cycle and classifier terms; they must sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub triplet: f64,
    pub cycle: f64,
    pub classifier: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            triplet: 0.6,
            cycle: 0.2,
            classifier: 0.2,
        }
    }
}

impl LossWeights {
    pub fn new(triplet: f64, cycle: f64, classifier: f64) -> Result<Self> {
        let w = LossWeights {
            triplet,
            cycle,
            classifier,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.triplet, self.cycle, self.classifier];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("loss weights must be nonnegative, got {all:?}")));
        }
        let total: f64 = all.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("loss weights must sum to 1, got {total}")));
        }
        Ok(())
    }
}

/// Named loss configurations used for ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationPreset {
    Full,
    /// Supervised only: triplet loss, no unlabeled samples.
    Sup,
    TripletCycle,
    TripletClassifier,
    ClassifierCycle,
}

impl AblationPreset {
    pub const ALL: [AblationPreset; 5] = [
        AblationPreset::Full,
        AblationPreset::Sup,
        AblationPreset::TripletCycle,
        AblationPreset::TripletClassifier,
        AblationPreset::ClassifierCycle,
    ];

    /// Weights under the preset with the default full weights as the base.
    pub fn weights(self) -> LossWeights {
        self.apply(&LossWeights::default()).expect("default weights are positive")
    }

    /// `base` with the preset's dropped terms zeroed and the rest renormalized.
    pub fn apply(self, base: &LossWeights) -> Result<LossWeights> {
        base.validate()?;
        let (t, c, k) = match self {
            AblationPreset::Full => (true, true, true),
            AblationPreset::Sup => (true, false, false),
            AblationPreset::TripletCycle => (true, true, false),
            AblationPreset::TripletClassifier => (true, false, true),
            AblationPreset::ClassifierCycle => (false, true, true),
        };
        let keep = |on: bool, w: f64| if on { w } else { 0.0 };
        let (t, c, k) = (keep(t, base.triplet), keep(c, base.cycle), keep(k, base.classifier));
        let sum = t + c + k;
        if sum <= 0.0 {
            return Err(Error::Config(format!(
                "preset `{}` keeps only terms with zero weight",
                self.name()
            )));
        }
        if self == AblationPreset::Sup {
            // exactly (1, 0, 0)
            return LossWeights::new(1.0, 0.0, 0.0);
        }
        Ok(LossWeights {
            triplet: t / sum,
            cycle: c / sum,
            classifier: k / sum,
        })
    }

    pub fn uses_unlabeled(self) -> bool {
        self != AblationPreset::Sup
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationPreset::Full => "full",
            AblationPreset::Sup => "sup",
            AblationPreset::TripletCycle => "triplet_cycle",
            AblationPreset::TripletClassifier => "triplet_classifier",
            AblationPreset::ClassifierCycle => "classifier_cycle",
        }
    }
}

impl std::str::FromStr for AblationPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// `-cos(u, v)`
    #[default]
    NegCosine,
    /// `|u - v|^2`
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletConfig {
    pub margin: f64,
    pub distance: Distance,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            margin: 0.2,
            distance: Distance::NegCosine,
        }
    }
}

fn distance<T: Scalar>(tape: &mut Tape<'_, T>, a: Var, b: Var, d: Distance) -> Result<Var> {
    match d {
        Distance::NegCosine => {
            let c = tape.cosine(a, b)?;
            Ok(tape.scale(c, -T::one()))
        }
        Distance::Euclidean => tape.squared_distance(a, b),
    }
}

/// `max(d(anchor, pos) - d(anchor, neg) + margin, 0)`.
pub fn triplet_loss<T: Scalar>(
    tape: &mut Tape<'_, T>,
    anchor: Var,
    positive: Var,
    negative: Var,
    cfg: &TripletConfig,
) -> Result<Var> {
    if cfg.margin < 0.0 {
        return Err(Error::Config(format!("triplet margin must be nonnegative, got {}", cfg.margin)));
    }
    let dp = distance(tape, anchor, positive, cfg.distance)?;
    let dn = distance(tape, anchor, negative, cfg.distance)?;
    let gap = tape.sub(dp, dn)?;
    let margin = tape.input(vec![T::lit(cfg.margin)]);
    let shifted = tape.add(&[gap, margin])?;
    tape.hinge(shifted)
}

/// Tape-free triplet loss.
pub fn triplet_value<T: Scalar>(anchor: &[T], positive: &[T], negative: &[T], cfg: &TripletConfig) -> Result<T> {
    let d = |u: &[T], v: &[T]| -> Result<T> {
        match cfg.distance {
            Distance::NegCosine => ops::cosine_similarity(u, v).map(|c| -c),
            Distance::Euclidean => ops::squared_distance(u, v),
        }
    };
    Ok((d(anchor, positive)? - d(anchor, negative)? + T::lit(cfg.margin)).max(T::zero()))
}

/// `|stop(original) - reconstructed|^2`.
///
/// The original vector acts as a label: the stop-gradient is applied here, so
/// nothing flows back into whatever produced it through this loss.
pub fn cycle_loss<T: Scalar>(tape: &mut Tape<'_, T>, original: Var, reconstructed: Var) -> Result<Var> {
    let label = tape.stop_gradient(original);
    tape.squared_distance(label, reconstructed)
}

/// `-ln p`, with `p` clamped at [`LOG_FLOOR`](crate::math::LOG_FLOOR).
pub fn classifier_loss<T: Scalar>(tape: &mut Tape<'_, T>, p: Var) -> Result<Var> {
    tape.neg_log(p)
}

/// Tape-free `-ln p`; `p` must lie in (0, 1].
pub fn classifier_loss_value(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("classifier probability {p} outside (0, 1]")));
    }
    Ok(-p.ln())
}

/// `w · (triplet, cycle, classifier)`.
pub fn combined_loss(triplet: f64, cycle: f64, classifier: f64, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.triplet * triplet + w.cycle * cycle + w.classifier * classifier)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::math::ParamStore;

    fn cfg(margin: f64) -> TripletConfig {
        TripletConfig {
            margin,
            distance: Distance::NegCosine,
        }
    }

    #[test]
    fn triplet_cases() {
        let a = [1.0f64, 0.0];
        // cos(a, p) = 1, cos(a, n) = 0
        assert_eq!(triplet_value(&a, &[2.0, 0.0], &[0.0, 3.0], &cfg(0.2)).unwrap(), 0.0);
        // equal similarities leave the margin
        let l = triplet_value(&a, &[1.0, 1.0], &[1.0, -1.0], &cfg(0.2)).unwrap();
        assert!((l - 0.2).abs() < 1e-15);
        // cos(a, p) = 0, cos(a, n) = 1
        let l = triplet_value(&a, &[0.0, 1.0], &[5.0, 0.0], &cfg(0.2)).unwrap();
        assert!((l - 1.2).abs() < 1e-15);
        assert!(matches!(
            triplet_value(&a, &[0.0, 0.0], &[1.0, 0.0], &cfg(0.2)),
            Err(Error::DegenerateVector(_))
        ));
    }

    #[test]
    fn triplet_tape_matches_value() {
        let store = ParamStore::<f64>::new(0);
        for distance in [Distance::NegCosine, Distance::Euclidean] {
            let c = TripletConfig { margin: 0.3, distance };
            let (a, p, n) = ([0.3, -1.0, 2.0], [1.0, 0.5, 0.5], [-0.2, -1.0, 1.5]);
            let mut tape = Tape::new(&store);
            let va = tape.input(a.to_vec());
            let vp = tape.input(p.to_vec());
            let vn = tape.input(n.to_vec());
            let l = triplet_loss(&mut tape, va, vp, vn, &c).unwrap();
            assert!((tape.scalar(l) - triplet_value(&a, &p, &n, &c).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn cycle_cases() {
        let store = ParamStore::<f64>::new(0);
        let mut tape = Tape::new(&store);
        let v = tape.input(vec![1.0, 0.0]);
        let same = tape.input(vec![1.0, 0.0]);
        let other = tape.input(vec![0.0, 1.0]);
        let zero = cycle_loss(&mut tape, v, same).unwrap();
        assert_eq!(tape.scalar(zero), 0.0);
        let two = cycle_loss(&mut tape, v, other).unwrap();
        assert_eq!(tape.scalar(two), 2.0);
        let wide = tape.input(vec![1.0, 0.0, 0.0]);
        assert!(matches!(cycle_loss(&mut tape, v, wide), Err(Error::Dimension(_))));
    }

    #[test]
    fn cycle_gradient_only_reaches_reconstruction() {
        let store = ParamStore::<f64>::new(0);
        let mut tape = Tape::new(&store);
        let v = tape.input(vec![0.4, -1.2, 3.0]);
        let r = tape.input(vec![1.0, 0.0, 2.5]);
        let l = cycle_loss(&mut tape, v, r).unwrap();
        let (_, nodes) = tape.backward_with_inputs(l).unwrap();
        assert!(nodes.get(v).is_none());
        assert!(nodes.get(r).unwrap().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn classifier_cases() {
        assert_eq!(classifier_loss_value(1.0).unwrap(), 0.0);
        assert!((classifier_loss_value(0.25).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((classifier_loss_value((-1f64).exp()).unwrap() - 1.0).abs() < 1e-15);
        assert!(classifier_loss_value(0.0).is_err());
        assert!(classifier_loss_value(-0.5).is_err());
    }

    #[test]
    fn combined_cases() {
        let sup = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(combined_loss(0.37, 5.0, 9.0, &sup).unwrap(), 0.37);
        let w = LossWeights::new(0.5, 0.25, 0.25).unwrap();
        assert!((combined_loss(0.3, 0.6, 0.9, &w).unwrap() - 0.525).abs() < 1e-15);
        assert!(LossWeights::new(0.5, 0.5, 0.5).is_err());
        let bad = LossWeights {
            triplet: 0.5,
            cycle: 0.5,
            classifier: 0.5,
        };
        assert!(matches!(combined_loss(1.0, 1.0, 1.0, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn presets() {
        for p in AblationPreset::ALL {
            p.weights().validate().unwrap();
            assert_eq!(p.name().parse::<AblationPreset>().unwrap(), p);
        }
        assert_eq!(AblationPreset::TripletCycle.weights().classifier, 0.0);
        assert_eq!(AblationPreset::TripletClassifier.weights().cycle, 0.0);
        assert_eq!(AblationPreset::ClassifierCycle.weights().triplet, 0.0);
        assert!(!AblationPreset::Sup.uses_unlabeled());
    }

    #[test]
    fn presets_renormalize_custom_weights() {
        let base = LossWeights::new(0.5, 0.3, 0.2).unwrap();
        let w = AblationPreset::TripletCycle.apply(&base).unwrap();
        assert!((w.triplet - 0.625).abs() < 1e-12 && (w.cycle - 0.375).abs() < 1e-12);
        assert_eq!(AblationPreset::Full.apply(&base).unwrap(), base);
        let only_triplet = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        assert!(AblationPreset::ClassifierCycle.apply(&only_triplet).is_err());
    }

    proptest! {
        #[test]
        fn triplet_hinge_identity(
            a in proptest::collection::vec(-3.0f64..3.0, 4),
            p in proptest::collection::vec(-3.0f64..3.0, 4),
            n in proptest::collection::vec(-3.0f64..3.0, 4),
            margin in 0.0f64..2.0,
            euclid in any::<bool>(),
        ) {
            let c = TripletConfig { margin, distance: if euclid { Distance::Euclidean } else { Distance::NegCosine } };
            if let (Ok(x), Ok(y)) = (triplet_value(&a, &p, &n, &c), triplet_value(&a, &n, &p, &c)) {
                prop_assert!(x >= 0.0 && y >= 0.0);
                prop_assert!(x + y >= margin - 1e-12);
            }
        }

        #[test]
        fn cycle_value_is_symmetric(
            u in proptest::collection::vec(-3.0f64..3.0, 5),
            v in proptest::collection::vec(-3.0f64..3.0, 5),
        ) {
            let store = ParamStore::<f64>::new(0);
            let mut tape = Tape::new(&store);
            let (a, b) = (tape.input(u), tape.input(v));
            let x = cycle_loss(&mut tape, a, b).unwrap();
            let y = cycle_loss(&mut tape, b, a).unwrap();
            prop_assert_eq!(tape.scalar(x), tape.scalar(y));
            prop_assert!(tape.scalar(x) >= 0.0);
        }
    }
}
