//! Finite adversarial game between a step generator and a step detector.
//!
//! A game is a weighted set of contexts; each context carries a finite set
//! of candidate actions with a ground-truth correctness label. The
//! generator plays a mixed strategy over each context's actions, the
//! detector plays an independent Bernoulli "classify as correct"
//! probability per action. Payoffs reward the detector for accurate
//! classification and the generator for slipping incorrect steps past the
//! detector; the payoffs do not sum to a constant, so the game is
//! general-sum.
//!
//! All expected-utility computation here is exact closed-form
//! marginalization. Sampling lives in the `rl` module.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth correctness of a candidate step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    /// y = 0: the step is incorrect.
    Incorrect,
    /// y = 1: the step is correct.
    Correct,
}

impl Label {
    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Label::Incorrect),
            1 => Ok(Label::Correct),
            other => Err(Error::InvalidArgument(format!(
                "label bit must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Label::Incorrect => 0,
            Label::Correct => 1,
        }
    }
}

/// Detector payoff: +1 for an accurate classification, -1 otherwise.
pub fn reward_model_payoff(y: Label, y_pred: Label) -> i32 {
    if y == y_pred {
        1
    } else {
        -1
    }
}

/// Generator payoff: +1 for an incorrect step classified correct, 0 for an
/// incorrect step that is caught, -1 for producing a correct step.
pub fn generator_payoff(y: Label, y_pred: Label) -> i32 {
    match (y, y_pred) {
        (Label::Incorrect, Label::Correct) => 1,
        (Label::Incorrect, Label::Incorrect) => 0,
        (Label::Correct, _) => -1,
    }
}

/// One candidate action available to the generator in some context.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionLabel {
    pub id: String,
    pub ground_truth: Label,
    /// Optional text of the candidate step (used by curriculum games).
    pub payload: Option<String>,
}

impl ActionLabel {
    pub fn new(id: impl Into<String>, ground_truth: Label) -> Self {
        ActionLabel {
            id: id.into(),
            ground_truth,
            payload: None,
        }
    }

    pub fn with_payload(id: impl Into<String>, ground_truth: Label, text: impl Into<String>) -> Self {
        ActionLabel {
            id: id.into(),
            ground_truth,
            payload: Some(text.into()),
        }
    }
}

/// A context with its action set and (normalized) selection weight.
#[derive(Debug, Clone)]
pub struct Context {
    pub id: String,
    pub weight: f64,
    pub actions: Vec<ActionLabel>,
}

/// The full finite game.
#[derive(Debug, Clone)]
pub struct AdversarialGame {
    contexts: Vec<Context>,
}

impl AdversarialGame {
    /// Build a game, normalizing context weights and validating the
    /// structural invariants: at least two actions per context, both label
    /// classes present in every context, unique action ids.
    pub fn new(mut contexts: Vec<Context>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::InvalidArgument("game has no contexts".into()));
        }
        let mut total = 0.0;
        for ctx in &contexts {
            if ctx.weight < 0.0 || !ctx.weight.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "context {} has invalid weight {}",
                    ctx.id, ctx.weight
                )));
            }
            total += ctx.weight;
            if ctx.actions.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "context {} has fewer than 2 actions",
                    ctx.id
                )));
            }
            let mut seen = std::collections::HashSet::new();
            for a in &ctx.actions {
                if !seen.insert(a.id.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate action id {} in context {}",
                        a.id, ctx.id
                    )));
                }
            }
            let n_incorrect = ctx
                .actions
                .iter()
                .filter(|a| a.ground_truth == Label::Incorrect)
                .count();
            if n_incorrect == 0 || n_incorrect == ctx.actions.len() {
                return Err(Error::InvalidArgument(format!(
                    "context {} must contain both a correct and an incorrect action",
                    ctx.id
                )));
            }
        }
        if total <= 0.0 {
            return Err(Error::InvalidArgument(
                "context weights must have positive sum".into(),
            ));
        }
        for ctx in &mut contexts {
            ctx.weight /= total;
        }
        Ok(AdversarialGame { contexts })
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn context(&self, i: usize) -> &Context {
        &self.contexts[i]
    }

    /// Number of actions in context `i`.
    pub fn num_actions(&self, i: usize) -> usize {
        self.contexts[i].actions.len()
    }

    /// Total number of (context, action) pairs.
    pub fn total_actions(&self) -> usize {
        self.contexts.iter().map(|c| c.actions.len()).sum()
    }

    /// Parse the JSON game definition format. Weights are normalized on
    /// load; if the raw sum deviates from 1 by more than 1e-6 a warning
    /// string is returned alongside the game.
    pub fn from_json(text: &str) -> Result<(Self, Option<String>)> {
        let file: GameFile = serde_json::from_str(text)
            .map_err(|e| Error::Io(format!("game file parse error: {e}")))?;
        let raw_sum: f64 = file.contexts.iter().map(|c| c.weight).sum();
        let warning = if (raw_sum - 1.0).abs() > 1e-6 {
            Some(format!(
                "context weights sum to {raw_sum}; normalizing to 1"
            ))
        } else {
            None
        };
        let mut contexts = Vec::with_capacity(file.contexts.len());
        for c in file.contexts {
            let mut actions = Vec::with_capacity(c.actions.len());
            for a in c.actions {
                actions.push(ActionLabel {
                    id: a.id,
                    ground_truth: Label::from_bit(a.y)?,
                    payload: a.text,
                });
            }
            contexts.push(Context {
                id: c.id,
                weight: c.weight,
                actions,
            });
        }
        Ok((AdversarialGame::new(contexts)?, warning))
    }

    pub fn to_json(&self) -> String {
        let file = GameFile {
            contexts: self
                .contexts
                .iter()
                .map(|c| ContextFile {
                    id: c.id.clone(),
                    weight: c.weight,
                    actions: c
                        .actions
                        .iter()
                        .map(|a| ActionFile {
                            id: a.id.clone(),
                            y: a.ground_truth.bit(),
                            text: a.payload.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("game serialization cannot fail")
    }

    /// Seeded random game used by sweeps and tests.
    pub fn generate(spec: &GameSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut contexts = Vec::with_capacity(spec.contexts);
        for s in 0..spec.contexts {
            let n = spec.actions_per_context;
            let mut labels = vec![Label::Incorrect; n];
            match spec.label_pattern {
                LabelPattern::Alternating => {
                    for (i, l) in labels.iter_mut().enumerate() {
                        *l = if i % 2 == 0 { Label::Incorrect } else { Label::Correct };
                    }
                }
                LabelPattern::Half => {
                    for (i, l) in labels.iter_mut().enumerate() {
                        *l = if i < n / 2 { Label::Incorrect } else { Label::Correct };
                    }
                }
                LabelPattern::Random => {
                    loop {
                        for l in labels.iter_mut() {
                            *l = if rng.gen_bool(0.5) { Label::Correct } else { Label::Incorrect };
                        }
                        let k = labels.iter().filter(|l| **l == Label::Correct).count();
                        if k > 0 && k < n {
                            break;
                        }
                    }
                }
            }
            let weight = if spec.random_weights {
                0.2 + 0.8 * rng.gen::<f64>()
            } else {
                1.0
            };
            contexts.push(Context {
                id: format!("s{s}"),
                weight,
                actions: labels
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| ActionLabel::new(format!("a{i}"), l))
                    .collect(),
            });
        }
        AdversarialGame::new(contexts)
    }
}

/// Parameters for the built-in random game generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub contexts: usize,
    pub actions_per_context: usize,
    #[serde(default)]
    pub label_pattern: LabelPattern,
    pub seed: u64,
    #[serde(default)]
    pub random_weights: bool,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LabelPattern {
    #[default]
    Half,
    Alternating,
    Random,
}

impl GameSpec {
    fn validate(&self) -> Result<()> {
        if self.contexts == 0 {
            return Err(Error::InvalidArgument("generator needs >= 1 context".into()));
        }
        if self.actions_per_context < 2 {
            return Err(Error::InvalidArgument(
                "generator needs >= 2 actions per context".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct GameFile {
    contexts: Vec<ContextFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextFile {
    id: String,
    weight: f64,
    actions: Vec<ActionFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionFile {
    id: String,
    y: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

/// Mixed strategy of the generator: one simplex vector per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorStrategy {
    pub rows: Vec<Vec<f64>>,
}

const SIMPLEX_TOL: f64 = 1e-10;

impl GeneratorStrategy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for &p in row {
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "generator row {s} has entry {p} outside [0, 1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidArgument(format!(
                    "generator row {s} sums to {sum}, not 1"
                )));
            }
        }
        Ok(GeneratorStrategy { rows })
    }

    pub fn uniform(game: &AdversarialGame) -> Self {
        GeneratorStrategy {
            rows: game
                .contexts()
                .iter()
                .map(|c| vec![1.0 / c.actions.len() as f64; c.actions.len()])
                .collect(),
        }
    }

    pub fn prob(&self, context: usize, action: usize) -> f64 {
        self.rows[context][action]
    }
}

/// Detector strategy: per context and action, the probability of
/// classifying that action as correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorStrategy {
    pub rows: Vec<Vec<f64>>,
}

impl DetectorStrategy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in rows.iter().enumerate() {
            for &q in row {
                if !(0.0..=1.0).contains(&q) || !q.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "detector row {s} has entry {q} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(DetectorStrategy { rows })
    }

    pub fn constant(game: &AdversarialGame, q: f64) -> Result<Self> {
        DetectorStrategy::new(
            game.contexts()
                .iter()
                .map(|c| vec![q; c.actions.len()])
                .collect(),
        )
    }

    pub fn prob_correct(&self, context: usize, action: usize) -> f64 {
        self.rows[context][action]
    }
}

/// A strategy profile for both players.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStrategy {
    pub generator: GeneratorStrategy,
    pub detector: DetectorStrategy,
}

impl JointStrategy {
    pub fn new(generator: GeneratorStrategy, detector: DetectorStrategy) -> Self {
        JointStrategy { generator, detector }
    }

    pub fn uniform(game: &AdversarialGame) -> Self {
        JointStrategy {
            generator: GeneratorStrategy::uniform(game),
            detector: DetectorStrategy::constant(game, 0.5).expect("0.5 is in range"),
        }
    }

    /// Shape agreement with the game.
    pub fn validate_for(&self, game: &AdversarialGame) -> Result<()> {
        validate_rows("generator", &self.generator.rows, game)?;
        validate_rows("detector", &self.detector.rows, game)?;
        Ok(())
    }
}

pub(crate) fn validate_rows(kind: &str, rows: &[Vec<f64>], game: &AdversarialGame) -> Result<()> {
    if rows.len() != game.num_contexts() {
        return Err(Error::InvalidArgument(format!(
            "{kind} strategy has {} rows, game has {} contexts",
            rows.len(),
            game.num_contexts()
        )));
    }
    for (s, row) in rows.iter().enumerate() {
        if row.len() != game.num_actions(s) {
            return Err(Error::InvalidArgument(format!(
                "{kind} row {s} has {} entries, context has {} actions",
                row.len(),
                game.num_actions(s)
            )));
        }
    }
    Ok(())
}

/// Exact expected utilities (U_G, U_R) of a joint strategy.
///
/// The expectation over the detector's binary draw is marginalized in
/// closed form per action; no sampling is involved.
pub fn expected_utilities(game: &AdversarialGame, joint: &JointStrategy) -> Result<(f64, f64)> {
    joint.validate_for(game)?;
    let mut u_g = 0.0;
    let mut u_r = 0.0;
    for (s, ctx) in game.contexts().iter().enumerate() {
        let p_s = ctx.weight;
        for (a, act) in ctx.actions.iter().enumerate() {
            let pi = joint.generator.prob(s, a);
            let q = joint.detector.prob_correct(s, a);
            let w = p_s * pi;
            match act.ground_truth {
                Label::Incorrect => {
                    // r_G: +1 when classified correct, 0 when caught.
                    u_g += w * q;
                    // r_R: +1 when caught (y'=0), -1 when fooled.
                    u_r += w * ((1.0 - q) - q);
                }
                Label::Correct => {
                    u_g -= w;
                    u_r += w * (q - (1.0 - q));
                }
            }
        }
    }
    Ok((u_g, u_r))
}

/// Per-context vectors V with V(a) = E_{y'~q_a}[r_G(y(a), y')].
///
/// Satisfies U_G = sum_s p(s) sum_a pi(a|s) V(a) for every generator
/// strategy against the given detector.
pub fn generator_action_values(
    game: &AdversarialGame,
    detector: &DetectorStrategy,
) -> Result<Vec<Vec<f64>>> {
    validate_rows("detector", &detector.rows, game)?;
    Ok(game
        .contexts()
        .iter()
        .enumerate()
        .map(|(s, ctx)| {
            ctx.actions
                .iter()
                .enumerate()
                .map(|(a, act)| match act.ground_truth {
                    Label::Incorrect => detector.prob_correct(s, a),
                    Label::Correct => -1.0,
                })
                .collect()
        })
        .collect())
}

/// Detector-side value of classifying action `a` as correct/incorrect,
/// together with the visitation weight p(s) * pi(a|s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorActionValue {
    /// p(s) * pi(a|s) under the given generator.
    pub weight: f64,
    /// Payoff of emitting y' = 1 on this action.
    pub value_correct: f64,
    /// Payoff of emitting y' = 0 on this action.
    pub value_incorrect: f64,
}

/// Closed-form marginalization of the detector payoff over the generator.
pub fn detector_action_values(
    game: &AdversarialGame,
    generator: &GeneratorStrategy,
) -> Result<Vec<Vec<DetectorActionValue>>> {
    validate_rows("generator", &generator.rows, game)?;
    Ok(game
        .contexts()
        .iter()
        .enumerate()
        .map(|(s, ctx)| {
            ctx.actions
                .iter()
                .enumerate()
                .map(|(a, act)| {
                    let (v1, v0) = match act.ground_truth {
                        Label::Correct => (1.0, -1.0),
                        Label::Incorrect => (-1.0, 1.0),
                    };
                    DetectorActionValue {
                        weight: ctx.weight * generator.prob(s, a),
                        value_correct: v1,
                        value_incorrect: v0,
                    }
                })
                .collect()
        })
        .collect())
}
