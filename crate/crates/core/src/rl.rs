//! Sampled PPO-style training of both players at tabular scale.
//!
//! Episodes are single perturb-classify interactions, so GAE degenerates
//! to reward-minus-baseline (gamma and lambda are carried in the config
//! for parity but are provably inert). Players train in alternation,
//! freezing the opponent; the detector trains on a gold/negative replay
//! mixture so it does not forget old error modes.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    generator_payoff, reward_model_payoff, ActionLabel, AdversarialGame,
    Context, DetectorStrategy, GeneratorStrategy, JointStrategy, Label,
};
use crate::dynamics::project_to_simplex;
use crate::oracle::{Oracle, VerdictLabel};
use crate::regularization::{
    bernoulli_entropy, bernoulli_kl, exploitability, kl_divergence, regularized_utilities,
    shannon_entropy, RegularizationConfig,
};

/// PPO and regularization hyperparameters for training runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PPOConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda_gae: f64,
    pub batch_size: usize,
    pub mini_epochs: usize,
    pub learning_rate: f64,
    pub steps_per_player: usize,
    pub tau: f64,
    pub c_h: f64,
    pub seed: u64,
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig {
            clip: 0.2,
            gamma: 0.99,
            lambda_gae: 0.95,
            batch_size: 256,
            mini_epochs: 2,
            learning_rate: 0.05,
            steps_per_player: 5,
            tau: 0.01,
            c_h: 0.01,
            seed: 0,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::InvalidArgument("clip must be in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda_gae) {
            return Err(Error::InvalidArgument(
                "gamma and lambda_gae must be in [0, 1]".into(),
            ));
        }
        if self.steps_per_player < 1 {
            return Err(Error::InvalidArgument("steps_per_player must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be >= 0".into()));
        }
        if !(self.tau > 0.0) || !(self.c_h >= 0.0) {
            return Err(Error::InvalidArgument("tau must be > 0, c_h >= 0".into()));
        }
        Ok(())
    }
}

/// Which player a training call updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainedPlayer {
    Generator,
    Detector,
}

/// Per-update optimizer: plain gradient steps or the optimistic
/// past-gradient correction applied to the total-loss gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainOptimizer {
    Sgd,
    #[default]
    Ogda,
}

/// Training environment: the game plus the reference policies used by the
/// KL terms. Actions flagged here were proximity-rejected by the oracle at
/// labeling time.
#[derive(Debug, Clone)]
pub struct Env {
    pub game: AdversarialGame,
    pub generator_reference: GeneratorStrategy,
    pub detector_reference: DetectorStrategy,
    pub flagged: std::collections::HashSet<(usize, usize)>,
}

impl Env {
    pub fn with_uniform_references(game: AdversarialGame) -> Self {
        let generator_reference = GeneratorStrategy::uniform(&game);
        let detector_reference =
            DetectorStrategy::constant(&game, 0.5).expect("0.5 in range");
        Env {
            game,
            generator_reference,
            detector_reference,
            flagged: Default::default(),
        }
    }

    pub fn reg(&self, tau: f64, c_h: f64) -> Result<RegularizationConfig> {
        RegularizationConfig::new(
            tau,
            c_h,
            self.generator_reference.clone(),
            self.detector_reference.clone(),
        )
    }
}

/// One sampled perturb-classify interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub context: usize,
    pub action: usize,
    pub y: Label,
    pub y_pred: Label,
    pub r_g: f64,
    pub r_r: f64,
    /// pi(a|s) at sampling time.
    pub behavior_gen_prob: f64,
    /// Probability of the drawn y_pred at sampling time.
    pub behavior_det_prob: f64,
    pub oracle_flagged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeBatch {
    pub episodes: Vec<Episode>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// i.i.d. episodes from the joint strategy. Each draw derives its own
/// counter-based RNG from (seed, index), so results are independent of
/// evaluation order.
pub fn sample_episodes(
    env: &Env,
    joint: &JointStrategy,
    n: usize,
    seed: u64,
) -> Result<EpisodeBatch> {
    if n < 1 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    joint.validate_for(&env.game)?;
    let weights: Vec<f64> = env.game.contexts().iter().map(|c| c.weight).collect();
    let mut episodes = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(seed, i as u64));
        let s = categorical(&mut rng, &weights);
        let a = categorical(&mut rng, &joint.generator.rows[s]);
        let y = env.game.context(s).actions[a].ground_truth;
        let q = joint.detector.prob_correct(s, a);
        let y_pred = if rng.gen::<f64>() < q {
            Label::Correct
        } else {
            Label::Incorrect
        };
        episodes.push(Episode {
            context: s,
            action: a,
            y,
            y_pred,
            r_g: generator_payoff(y, y_pred) as f64,
            r_r: reward_model_payoff(y, y_pred) as f64,
            behavior_gen_prob: joint.generator.prob(s, a),
            behavior_det_prob: if y_pred == Label::Correct { q } else { 1.0 - q },
            oracle_flagged: env.flagged.contains(&(s, a)),
        });
    }
    Ok(EpisodeBatch { episodes })
}

/// Single-step GAE: advantages collapse to reward minus the per-context
/// baseline regardless of gamma and lambda.
pub fn compute_advantages(
    batch: &EpisodeBatch,
    player: TrainedPlayer,
    baseline: &[f64],
) -> Result<Vec<f64>> {
    if baseline.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidArgument("baseline must be finite".into()));
    }
    batch
        .episodes
        .iter()
        .map(|e| {
            let b = *baseline
                .get(e.context)
                .ok_or_else(|| Error::InvalidArgument("baseline missing a context".into()))?;
            let r = match player {
                TrainedPlayer::Generator => e.r_g,
                TrainedPlayer::Detector => e.r_r,
            };
            Ok(r - b)
        })
        .collect()
}

/// Mean over the batch of -min(ratio * A, clip(ratio) * A).
pub fn ppo_clipped_loss(
    new_probs: &[f64],
    old_probs: &[f64],
    advantages: &[f64],
    clip: f64,
) -> Result<f64> {
    if new_probs.len() != old_probs.len() || new_probs.len() != advantages.len() {
        return Err(Error::InvalidArgument("ppo loss length mismatch".into()));
    }
    if old_probs.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidArgument("old probabilities must be > 0".into()));
    }
    let n = new_probs.len() as f64;
    let mut acc = 0.0;
    for i in 0..new_probs.len() {
        let ratio = new_probs[i] / old_probs[i];
        let a = advantages[i];
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        acc += -unclipped.min(clipped);
    }
    Ok(acc / n)
}

/// tau * mean over the batch of KL(pi(.|s) || pi0(.|s)) for the player's
/// visited distributions.
pub fn kl_penalty_term(
    batch: &EpisodeBatch,
    player: TrainedPlayer,
    env: &Env,
    joint: &JointStrategy,
    tau: f64,
) -> Result<f64> {
    if batch.episodes.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for e in &batch.episodes {
        acc += match player {
            TrainedPlayer::Generator => kl_divergence(
                &joint.generator.rows[e.context],
                &env.generator_reference.rows[e.context],
            )?,
            TrainedPlayer::Detector => bernoulli_kl(
                joint.detector.prob_correct(e.context, e.action),
                env.detector_reference.prob_correct(e.context, e.action),
            ),
        };
    }
    Ok(tau * acc / batch.episodes.len() as f64)
}

/// -c_h * mean entropy of the player's visited distributions (the loss
/// form of the entropy bonus).
pub fn entropy_bonus_term(
    batch: &EpisodeBatch,
    player: TrainedPlayer,
    joint: &JointStrategy,
    c_h: f64,
) -> Result<f64> {
    if batch.episodes.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for e in &batch.episodes {
        acc += match player {
            TrainedPlayer::Generator => shannon_entropy(&joint.generator.rows[e.context]),
            TrainedPlayer::Detector => {
                bernoulli_entropy(joint.detector.prob_correct(e.context, e.action))
            }
        };
    }
    Ok(-c_h * acc / batch.episodes.len() as f64)
}

/// Replay store: gold steps plus negatives partitioned into the current
/// generator's samples and snapshots from past versions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    pub gold: Vec<(usize, usize)>,
    pub current: Vec<(usize, usize)>,
    pub history: VecDeque<Vec<(usize, usize)>>,
    /// Maximum retained snapshots of past generator versions.
    pub snapshot_capacity: usize,
    pub mixing_ratio: f64,
    /// Per-pool entry cap; oldest entries evicted first.
    pub max_pool: usize,
}

impl ReplayBuffer {
    /// Seeds the gold pool with every correct action of the game.
    pub fn from_game(game: &AdversarialGame) -> Self {
        let mut gold = Vec::new();
        for (s, ctx) in game.contexts().iter().enumerate() {
            for (a, act) in ctx.actions.iter().enumerate() {
                if act.ground_truth == Label::Correct {
                    gold.push((s, a));
                }
            }
        }
        ReplayBuffer {
            gold,
            current: Vec::new(),
            history: VecDeque::new(),
            snapshot_capacity: 10,
            mixing_ratio: 0.5,
            max_pool: 8192,
        }
    }

    pub fn push_negative(&mut self, context: usize, action: usize) {
        if self.current.len() >= self.max_pool {
            self.current.remove(0);
        }
        self.current.push((context, action));
    }

    /// Moves the current partition into history (one snapshot per
    /// alternation round, oldest evicted past capacity).
    pub fn rotate_snapshot(&mut self) {
        if self.current.is_empty() {
            return;
        }
        let snap = std::mem::take(&mut self.current);
        self.history.push_back(snap);
        while self.history.len() > self.snapshot_capacity {
            self.history.pop_front();
        }
    }

    pub fn negatives_empty(&self) -> bool {
        self.current.is_empty() && self.history.iter().all(|s| s.is_empty())
    }
}

/// Mixture batch: ceil(n * ratio) gold items and the rest negatives drawn
/// uniformly over the union of current and historical partitions.
pub fn replay_mixture(
    buffer: &ReplayBuffer,
    n: usize,
    seed: u64,
) -> Result<Vec<(usize, usize, Label)>> {
    if buffer.gold.is_empty() {
        return Err(Error::EmptyPool("gold pool is empty".into()));
    }
    if buffer.negatives_empty() {
        return Err(Error::EmptyPool("negative pool is empty".into()));
    }
    let n_gold = (n as f64 * buffer.mixing_ratio).ceil() as usize;
    let n_neg = n - n_gold.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n_gold.min(n) {
        let (s, a) = buffer.gold[rng.gen_range(0..buffer.gold.len())];
        out.push((s, a, Label::Correct));
    }
    let mut union: Vec<(usize, usize)> = Vec::new();
    union.extend_from_slice(&buffer.current);
    for snap in &buffer.history {
        union.extend_from_slice(snap);
    }
    for _ in 0..n_neg {
        let (s, a) = union[rng.gen_range(0..union.len())];
        out.push((s, a, Label::Incorrect));
    }
    Ok(out)
}

/// Per-player, per-context running-mean reward baselines (exponential
/// decay 0.99).
#[derive(Debug, Clone)]
struct Baselines {
    gen: Vec<f64>,
    det: Vec<f64>,
    decay: f64,
}

impl Baselines {
    fn new(num_contexts: usize) -> Self {
        Baselines {
            gen: vec![0.0; num_contexts],
            det: vec![0.0; num_contexts],
            decay: 0.99,
        }
    }

    fn values(&self, player: TrainedPlayer) -> &[f64] {
        match player {
            TrainedPlayer::Generator => &self.gen,
            TrainedPlayer::Detector => &self.det,
        }
    }

    fn update(&mut self, player: TrainedPlayer, batch: &EpisodeBatch) {
        let d = self.decay;
        for e in &batch.episodes {
            let (store, r) = match player {
                TrainedPlayer::Generator => (&mut self.gen, e.r_g),
                TrainedPlayer::Detector => (&mut self.det, e.r_r),
            };
            store[e.context] = d * store[e.context] + (1.0 - d) * r;
        }
    }
}

/// Result of a train_player call.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub joint: JointStrategy,
    pub losses: Vec<f64>,
    pub diverged: bool,
}

/// Per-round metrics of the alternation loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub ug_reg: f64,
    pub ur_reg: f64,
    pub exploitability: f64,
    pub detector_accuracy: f64,
    pub deception_rate: f64,
}

/// Expected detector accuracy under the current visitation.
pub fn detector_accuracy(game: &AdversarialGame, joint: &JointStrategy) -> f64 {
    let mut acc = 0.0;
    for (s, ctx) in game.contexts().iter().enumerate() {
        for (a, act) in ctx.actions.iter().enumerate() {
            let w = ctx.weight * joint.generator.prob(s, a);
            let q = joint.detector.prob_correct(s, a);
            acc += w * match act.ground_truth {
                Label::Correct => q,
                Label::Incorrect => 1.0 - q,
            };
        }
    }
    acc
}

/// Fraction of incorrect-step visitation classified as correct.
pub fn deception_rate(game: &AdversarialGame, joint: &JointStrategy) -> f64 {
    let mut mass = 0.0;
    let mut fooled = 0.0;
    for (s, ctx) in game.contexts().iter().enumerate() {
        for (a, act) in ctx.actions.iter().enumerate() {
            if act.ground_truth == Label::Incorrect {
                let w = ctx.weight * joint.generator.prob(s, a);
                mass += w;
                fooled += w * joint.detector.prob_correct(s, a);
            }
        }
    }
    if mass > 0.0 {
        fooled / mass
    } else {
        0.0
    }
}

/// Stateful trainer owning baselines, the optimistic-gradient memory, and
/// the replay buffer.
pub struct Trainer<'a> {
    pub env: &'a Env,
    pub config: PPOConfig,
    pub optimizer: TrainOptimizer,
    /// Keep the optimistic memory across player swaps instead of
    /// resetting it (comparison flag; default false).
    pub preserve_memory: bool,
    baselines: Baselines,
    ogda_memory: Option<(TrainedPlayer, Vec<f64>)>,
    replay: Option<ReplayBuffer>,
    update_counter: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(env: &'a Env, config: PPOConfig, optimizer: TrainOptimizer) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            env,
            config,
            optimizer,
            preserve_memory: false,
            baselines: Baselines::new(env.game.num_contexts()),
            ogda_memory: None,
            replay: None,
            update_counter: 0,
        })
    }

    /// Enables the gold/negative replay mixture for detector updates.
    pub fn with_replay(mut self) -> Self {
        self.replay = Some(ReplayBuffer::from_game(&self.env.game));
        self
    }

    pub fn replay_buffer(&self) -> Option<&ReplayBuffer> {
        self.replay.as_ref()
    }

    fn next_seed(&mut self) -> u64 {
        let s = draw_seed(self.config.seed, self.update_counter);
        self.update_counter += 1;
        s
    }

    /// Assembles a detector batch from the replay mixture, drawing fresh
    /// classifications under the current detector.
    fn replay_batch(&self, joint: &JointStrategy, seed: u64) -> Result<EpisodeBatch> {
        let buffer = self.replay.as_ref().expect("caller checked");
        let items = replay_mixture(buffer, self.config.batch_size, seed)?;
        let mut episodes = Vec::with_capacity(items.len());
        for (i, (s, a, y)) in items.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(seed ^ 0x5ee1, i as u64));
            let q = joint.detector.prob_correct(s, a);
            let y_pred = if rng.gen::<f64>() < q {
                Label::Correct
            } else {
                Label::Incorrect
            };
            episodes.push(Episode {
                context: s,
                action: a,
                y,
                y_pred,
                r_g: generator_payoff(y, y_pred) as f64,
                r_r: reward_model_payoff(y, y_pred) as f64,
                behavior_gen_prob: joint.generator.prob(s, a),
                behavior_det_prob: if y_pred == Label::Correct { q } else { 1.0 - q },
                oracle_flagged: self.env.flagged.contains(&(s, a)),
            });
        }
        Ok(EpisodeBatch { episodes })
    }

    /// Total-loss gradient over the training player's coordinates.
    fn gradient(
        &self,
        player: TrainedPlayer,
        joint: &JointStrategy,
        batch: &EpisodeBatch,
        advantages: &[f64],
    ) -> Vec<Vec<f64>> {
        let cfg = &self.config;
        let b = batch.episodes.len() as f64;
        let mut grad: Vec<Vec<f64>> = self
            .env
            .game
            .contexts()
            .iter()
            .map(|c| vec![0.0; c.actions.len()])
            .collect();
        let floor = 1e-12;
        for (i, e) in batch.episodes.iter().enumerate() {
            let a_i = advantages[i];
            match player {
                TrainedPlayer::Generator => {
                    let old = e.behavior_gen_prob.max(floor);
                    let new = joint.generator.prob(e.context, e.action);
                    let ratio = new / old;
                    let active = if a_i >= 0.0 {
                        ratio <= 1.0 + cfg.clip
                    } else {
                        ratio >= 1.0 - cfg.clip
                    };
                    if active {
                        grad[e.context][e.action] += -a_i / old / b;
                    }
                    // KL and entropy terms touch the whole visited row.
                    let row = &joint.generator.rows[e.context];
                    let ref_row = &self.env.generator_reference.rows[e.context];
                    for (a, g) in grad[e.context].iter_mut().enumerate() {
                        let p = row[a].max(floor);
                        *g += cfg.tau * ((p / ref_row[a]).ln() + 1.0) / b;
                        *g += cfg.c_h * (p.ln() + 1.0) / b;
                    }
                }
                TrainedPlayer::Detector => {
                    let old = e.behavior_det_prob.max(floor);
                    let q = joint
                        .detector
                        .prob_correct(e.context, e.action)
                        .clamp(floor, 1.0 - floor);
                    let new = if e.y_pred == Label::Correct { q } else { 1.0 - q };
                    let ratio = new / old;
                    let active = if a_i >= 0.0 {
                        ratio <= 1.0 + cfg.clip
                    } else {
                        ratio >= 1.0 - cfg.clip
                    };
                    let sign = if e.y_pred == Label::Correct { 1.0 } else { -1.0 };
                    let g = &mut grad[e.context][e.action];
                    if active {
                        *g += -a_i * sign / old / b;
                    }
                    let q0 = self.env.detector_reference.prob_correct(e.context, e.action);
                    *g += cfg.tau * ((q / q0).ln() - ((1.0 - q) / (1.0 - q0)).ln()) / b;
                    *g += cfg.c_h * (q.ln() - (1.0 - q).ln()) / b;
                }
            }
        }
        grad
    }

    fn flatten_grad(grad: &[Vec<f64>]) -> Vec<f64> {
        grad.iter().flatten().copied().collect()
    }

    /// Runs `steps_per_player` gradient updates on one player with the
    /// other frozen. NaN aborts with the last good strategy.
    pub fn train_player(
        &mut self,
        player: TrainedPlayer,
        joint: &JointStrategy,
    ) -> Result<TrainReport> {
        let cfg = self.config.clone();
        let mut joint = joint.clone();
        let mut losses = Vec::with_capacity(cfg.steps_per_player);
        // Per-player optimistic memory; reset when the trained player
        // changes (unless explicitly preserved).
        if !self.preserve_memory {
            if let Some((owner, _)) = &self.ogda_memory {
                if *owner != player {
                    self.ogda_memory = None;
                }
            }
        }
        for _ in 0..cfg.steps_per_player {
            let seed = self.next_seed();
            let use_replay = player == TrainedPlayer::Detector
                && self.replay.as_ref().map_or(false, |b| !b.negatives_empty() && !b.gold.is_empty());
            let batch = if use_replay {
                self.replay_batch(&joint, seed)?
            } else {
                sample_episodes(self.env, &joint, cfg.batch_size, seed)?
            };
            if player == TrainedPlayer::Generator {
                if let Some(buffer) = self.replay.as_mut() {
                    for e in &batch.episodes {
                        if e.y == Label::Incorrect {
                            buffer.push_negative(e.context, e.action);
                        }
                    }
                }
            }
            let advantages =
                compute_advantages(&batch, player, self.baselines.values(player))?;
            self.baselines.update(player, &batch);

            let mut step_loss = f64::NAN;
            let mut diverged = false;
            for epoch in 0..cfg.mini_epochs.max(1) {
                let (new_probs, old_probs): (Vec<f64>, Vec<f64>) = batch
                    .episodes
                    .iter()
                    .map(|e| match player {
                        TrainedPlayer::Generator => (
                            joint.generator.prob(e.context, e.action),
                            e.behavior_gen_prob,
                        ),
                        TrainedPlayer::Detector => {
                            let q = joint.detector.prob_correct(e.context, e.action);
                            let p = if e.y_pred == Label::Correct { q } else { 1.0 - q };
                            (p, e.behavior_det_prob)
                        }
                    })
                    .unzip();
                let ppo = ppo_clipped_loss(&new_probs, &old_probs, &advantages, cfg.clip)?;
                let kl = kl_penalty_term(&batch, player, self.env, &joint, cfg.tau)?;
                let ent = entropy_bonus_term(&batch, player, &joint, cfg.c_h)?;
                let total = ppo + kl + ent;
                if epoch == 0 {
                    step_loss = total;
                }
                if !total.is_finite() {
                    diverged = true;
                    break;
                }
                if cfg.learning_rate == 0.0 {
                    continue;
                }
                let grad = self.gradient(player, &joint, &batch, &advantages);
                let flat = Self::flatten_grad(&grad);
                let effective = match self.optimizer {
                    TrainOptimizer::Sgd => flat.clone(),
                    TrainOptimizer::Ogda => {
                        // Both players' coordinate blocks have one entry
                        // per (context, action), so a preserved memory
                        // from the other player is dimension-compatible.
                        let prev = match &self.ogda_memory {
                            Some((owner, g)) if *owner == player || self.preserve_memory => {
                                g.clone()
                            }
                            _ => flat.clone(),
                        };
                        flat.iter()
                            .zip(&prev)
                            .map(|(g, p)| 2.0 * g - p)
                            .collect()
                    }
                };
                self.ogda_memory = Some((player, flat));
                let before = joint.clone();
                apply_update(&mut joint, player, &effective, cfg.learning_rate);
                if strategy_has_nan(&joint, player) {
                    diverged = true;
                    joint = before;
                    break;
                }
            }
            losses.push(step_loss);
            if diverged {
                return Ok(TrainReport {
                    joint,
                    losses,
                    diverged: true,
                });
            }
        }
        Ok(TrainReport {
            joint,
            losses,
            diverged: false,
        })
    }

    /// One alternation round: generator then detector, steps_per_player
    /// updates each.
    pub fn train_round(&mut self, joint: &JointStrategy) -> Result<(JointStrategy, bool)> {
        let g = self.train_player(TrainedPlayer::Generator, joint)?;
        let d = self.train_player(TrainedPlayer::Detector, &g.joint)?;
        if let Some(buffer) = self.replay.as_mut() {
            buffer.rotate_snapshot();
        }
        Ok((d.joint, g.diverged || d.diverged))
    }
}

fn strategy_has_nan(joint: &JointStrategy, player: TrainedPlayer) -> bool {
    match player {
        TrainedPlayer::Generator => joint
            .generator
            .rows
            .iter()
            .any(|r| r.iter().any(|p| !p.is_finite())),
        TrainedPlayer::Detector => joint
            .detector
            .rows
            .iter()
            .any(|r| r.iter().any(|q| !q.is_finite())),
    }
}

fn apply_update(joint: &mut JointStrategy, player: TrainedPlayer, grad: &[f64], lr: f64) {
    let mut idx = 0;
    match player {
        TrainedPlayer::Generator => {
            for row in joint.generator.rows.iter_mut() {
                for p in row.iter_mut() {
                    *p -= lr * grad[idx];
                    idx += 1;
                }
                let projected = project_to_simplex(row);
                row.copy_from_slice(&projected);
            }
        }
        TrainedPlayer::Detector => {
            for row in joint.detector.rows.iter_mut() {
                for q in row.iter_mut() {
                    *q = (*q - lr * grad[idx]).clamp(0.0, 1.0);
                    idx += 1;
                }
            }
        }
    }
}

/// Free-function form of a single training call.
pub fn train_player(
    player: TrainedPlayer,
    env: &Env,
    joint: &JointStrategy,
    config: &PPOConfig,
    optimizer: TrainOptimizer,
) -> Result<TrainReport> {
    let mut t = Trainer::new(env, config.clone(), optimizer)?;
    t.train_player(player, joint)
}

/// Alternating training: generator then detector per round, with the
/// replay mixture feeding detector updates. Returns the final joint
/// strategy and per-round metrics.
pub fn alternate_train(
    env: &Env,
    joint0: &JointStrategy,
    config: &PPOConfig,
    rounds: usize,
    optimizer: TrainOptimizer,
) -> Result<(JointStrategy, Vec<RoundMetrics>)> {
    if rounds < 1 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    joint0.validate_for(&env.game)?;
    let reg = env.reg(config.tau, config.c_h)?;
    let mut trainer = Trainer::new(env, config.clone(), optimizer)?.with_replay();
    let mut joint = joint0.clone();
    let mut metrics = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let (next, _diverged) = trainer.train_round(&joint)?;
        joint = next;
        let (ug, ur) = regularized_utilities(&env.game, &reg, &joint)?;
        metrics.push(RoundMetrics {
            round,
            ug_reg: ug,
            ur_reg: ur,
            exploitability: exploitability(&env.game, &reg, &joint)?,
            detector_accuracy: detector_accuracy(&env.game, &joint),
            deception_rate: deception_rate(&env.game, &joint),
        });
    }
    Ok((joint, metrics))
}

/// A gold step with its candidate perturbations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldStep {
    pub id: String,
    pub gold_text: String,
    pub candidates: Vec<String>,
}

/// Per-round curriculum metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurriculumRound {
    pub round: usize,
    pub acc_holdout: f64,
    pub deception_rate: f64,
    pub exploitability: f64,
    pub ug_reg: f64,
    pub ur_reg: f64,
    /// Visitation-weighted mean detector confidence on incorrect actions
    /// at round start (difficulty proxy).
    pub difficulty_mean: f64,
}

/// Result of an oracle-driven adversarial curriculum.
pub struct CurriculumReport {
    pub rounds: Vec<CurriculumRound>,
    /// Gold steps dropped because every candidate was proximity-rejected
    /// or no candidate labeled incorrect.
    pub excluded_steps: usize,
    /// Total candidates rejected by the proximity filters.
    pub rejected_candidates: usize,
    pub final_joint: JointStrategy,
    pub env: Env,
}

/// Builds the oracle-labeled game from a corpus: one context per usable
/// gold step, action set = gold (y=1) plus oracle-labeled candidates.
pub fn build_curriculum_env(
    corpus: &[GoldStep],
    oracle: &Oracle,
) -> Result<(Env, usize, usize)> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    let mut contexts = Vec::new();
    let mut flagged = std::collections::HashSet::new();
    let mut excluded = 0usize;
    let mut rejected = 0usize;
    for step in corpus {
        if step.candidates.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "gold step {} has fewer than 2 candidate perturbations",
                step.id
            )));
        }
        let mut actions = vec![ActionLabel::with_payload(
            "gold",
            Label::Correct,
            step.gold_text.clone(),
        )];
        let mut step_flags = Vec::new();
        let mut any_rejected_only = true;
        for (i, cand) in step.candidates.iter().enumerate() {
            let verdict = oracle.label(&step.gold_text, cand)?;
            if verdict.label == VerdictLabel::Rejected {
                rejected += 1;
                step_flags.push(actions.len());
            } else {
                any_rejected_only = false;
            }
            actions.push(ActionLabel::with_payload(
                format!("cand{i}"),
                verdict.y_label(),
                cand.clone(),
            ));
        }
        let has_incorrect = actions
            .iter()
            .any(|a| a.ground_truth == Label::Incorrect);
        if any_rejected_only || !has_incorrect {
            excluded += 1;
            continue;
        }
        let ctx_index = contexts.len();
        for a in step_flags {
            flagged.insert((ctx_index, a));
        }
        contexts.push(Context {
            id: step.id.clone(),
            weight: 1.0,
            actions,
        });
    }
    if contexts.is_empty() {
        return Err(Error::InvalidArgument(
            "no usable gold steps after oracle labeling".into(),
        ));
    }
    let game = AdversarialGame::new(contexts)?;
    let mut env = Env::with_uniform_references(game);
    env.flagged = flagged;
    Ok((env, excluded, rejected))
}

/// A fixed labeled evaluation set, drawn once and never used for
/// training updates.
pub fn holdout_set(env: &Env, size: usize, seed: u64) -> Vec<(usize, usize, Label)> {
    let weights: Vec<f64> = env.game.contexts().iter().map(|c| c.weight).collect();
    let mut out = Vec::with_capacity(size);
    for i in 0..size {
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(seed ^ 0x0a11, i as u64));
        let s = categorical(&mut rng, &weights);
        let n = env.game.num_actions(s);
        let a = rng.gen_range(0..n);
        out.push((s, a, env.game.context(s).actions[a].ground_truth));
    }
    out
}

/// Expected classification accuracy on a fixed labeled set.
pub fn holdout_accuracy(joint: &JointStrategy, set: &[(usize, usize, Label)]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for &(s, a, y) in set {
        let q = joint.detector.prob_correct(s, a);
        acc += match y {
            Label::Correct => q,
            Label::Incorrect => 1.0 - q,
        };
    }
    acc / set.len() as f64
}

fn difficulty_mean(env: &Env, joint: &JointStrategy) -> f64 {
    let mut mass = 0.0;
    let mut acc = 0.0;
    for (s, ctx) in env.game.contexts().iter().enumerate() {
        for (a, act) in ctx.actions.iter().enumerate() {
            if act.ground_truth == Label::Incorrect {
                let w = ctx.weight * joint.generator.prob(s, a);
                mass += w;
                acc += w * joint.detector.prob_correct(s, a);
            }
        }
    }
    if mass > 0.0 {
        acc / mass
    } else {
        f64::NAN
    }
}

/// End-to-end adversarial curriculum on an oracle-labeled corpus.
pub fn run_adversarial_curriculum(
    corpus: &[GoldStep],
    oracle: &Oracle,
    config: &PPOConfig,
    rounds: usize,
    optimizer: TrainOptimizer,
) -> Result<CurriculumReport> {
    if rounds < 1 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    let (env, excluded_steps, rejected_candidates) = build_curriculum_env(corpus, oracle)?;
    let reg = env.reg(config.tau, config.c_h)?;
    let holdout = holdout_set(&env, 200, config.seed ^ 0x6041);
    let joint0 = JointStrategy::new(
        env.generator_reference.clone(),
        env.detector_reference.clone(),
    );
    let mut trainer = Trainer::new(&env, config.clone(), optimizer)?.with_replay();
    let mut joint = joint0;
    let mut round_rows = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let difficulty = difficulty_mean(&env, &joint);
        let (next, _diverged) = trainer.train_round(&joint)?;
        joint = next;
        let (ug, ur) = regularized_utilities(&env.game, &reg, &joint)?;
        round_rows.push(CurriculumRound {
            round,
            acc_holdout: holdout_accuracy(&joint, &holdout),
            deception_rate: deception_rate(&env.game, &joint),
            exploitability: exploitability(&env.game, &reg, &joint)?,
            ug_reg: ug,
            ur_reg: ur,
            difficulty_mean: difficulty,
        });
    }
    Ok(CurriculumReport {
        rounds: round_rows,
        excluded_steps,
        rejected_candidates,
        final_joint: joint,
        env,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{expected_utilities, GameSpec, LabelPattern};

    fn desk_game() -> AdversarialGame {
        AdversarialGame::generate(&GameSpec {
            contexts: 2,
            actions_per_context: 4,
            label_pattern: LabelPattern::Half,
            seed: 1,
            random_weights: true,
        })
        .unwrap()
    }

    fn desk_cfg() -> PPOConfig {
        PPOConfig {
            tau: 0.5,
            c_h: 0.1,
            batch_size: 128,
            seed: 11,
            ..PPOConfig::default()
        }
    }

    #[test]
    fn sampled_rewards_match_closed_form() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        let n = 200_000;
        let batch = sample_episodes(&env, &joint, n, 42).unwrap();
        let mean_g: f64 = batch.episodes.iter().map(|e| e.r_g).sum::<f64>() / n as f64;
        let mean_r: f64 = batch.episodes.iter().map(|e| e.r_r).sum::<f64>() / n as f64;
        let var_g: f64 = batch
            .episodes
            .iter()
            .map(|e| (e.r_g - mean_g).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        let var_r: f64 = batch
            .episodes
            .iter()
            .map(|e| (e.r_r - mean_r).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        let (u_g, u_r) = expected_utilities(&env.game, &joint).unwrap();
        let se_g = (var_g / n as f64).sqrt();
        let se_r = (var_r / n as f64).sqrt();
        assert!(
            (mean_g - u_g).abs() < 3.0 * se_g,
            "U_G {u_g} vs sampled {mean_g} (se {se_g})"
        );
        assert!(
            (mean_r - u_r).abs() < 3.0 * se_r,
            "U_R {u_r} vs sampled {mean_r} (se {se_r})"
        );
    }

    #[test]
    fn degenerate_detector_rewards() {
        // q = 0 everywhere and generator supported on incorrect actions:
        // every r_G = 0, every r_R = +1.
        let game = desk_game();
        let gen_rows: Vec<Vec<f64>> = game
            .contexts()
            .iter()
            .map(|c| {
                let n_bad = c
                    .actions
                    .iter()
                    .filter(|a| a.ground_truth == Label::Incorrect)
                    .count();
                c.actions
                    .iter()
                    .map(|a| {
                        if a.ground_truth == Label::Incorrect {
                            1.0 / n_bad as f64
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let joint = JointStrategy::new(
            GeneratorStrategy::new(gen_rows).unwrap(),
            DetectorStrategy::constant(&game, 0.0).unwrap(),
        );
        let env = Env::with_uniform_references(game);
        let batch = sample_episodes(&env, &joint, 500, 3).unwrap();
        assert!(batch.episodes.iter().all(|e| e.r_g == 0.0 && e.r_r == 1.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        let a = sample_episodes(&env, &joint, 1000, 7).unwrap();
        let b = sample_episodes(&env, &joint, 1000, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_episodes(&env, &joint, 1000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn advantages_single_step() {
        let batch = EpisodeBatch {
            episodes: vec![Episode {
                context: 0,
                action: 0,
                y: Label::Incorrect,
                y_pred: Label::Correct,
                r_g: 1.0,
                r_r: -1.0,
                behavior_gen_prob: 0.5,
                behavior_det_prob: 0.5,
                oracle_flagged: false,
            }],
        };
        let a = compute_advantages(&batch, TrainedPlayer::Generator, &[0.0]).unwrap();
        assert_eq!(a, vec![1.0]);
        // gamma/lambda do not appear anywhere in the computation: the
        // single-step advantage is exactly r - baseline.
        let a2 = compute_advantages(&batch, TrainedPlayer::Detector, &[0.25]).unwrap();
        assert_eq!(a2, vec![-1.25]);
    }

    #[test]
    fn running_baseline_centers_advantages() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        let mut baselines = Baselines::new(env.game.num_contexts());
        let mut last_mean = f64::NAN;
        for step in 0..20 {
            let batch = sample_episodes(&env, &joint, 500, 100 + step).unwrap();
            let adv =
                compute_advantages(&batch, TrainedPlayer::Generator, baselines.values(TrainedPlayer::Generator))
                    .unwrap();
            last_mean = adv.iter().sum::<f64>() / adv.len() as f64;
            baselines.update(TrainedPlayer::Generator, &batch);
        }
        assert!(last_mean.abs() < 0.05, "mean advantage {last_mean}");
    }

    #[test]
    fn ppo_loss_values() {
        // ratio = 1 everywhere: loss = -mean(A).
        let l = ppo_clipped_loss(&[0.5, 0.5], &[0.5, 0.5], &[1.0, -0.5], 0.2).unwrap();
        assert!((l - -(1.0 - 0.5) / 2.0).abs() < 1e-15);
        // ratio = 2 with A = +1 clips at 1.2.
        let l = ppo_clipped_loss(&[0.8], &[0.4], &[1.0], 0.2).unwrap();
        assert!((l - -1.2).abs() < 1e-15);
        assert!(ppo_clipped_loss(&[0.5], &[0.0], &[1.0], 0.2).is_err());
    }

    #[test]
    fn ppo_gradient_matches_reinforce_at_ratio_one() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        let cfg = PPOConfig {
            tau: 1e-300,
            c_h: 0.0,
            ..desk_cfg()
        };
        let trainer = Trainer::new(&env, cfg, TrainOptimizer::Sgd).unwrap();
        let batch = sample_episodes(&env, &joint, 256, 9).unwrap();
        let adv = compute_advantages(&batch, TrainedPlayer::Generator, &[0.0; 2]).unwrap();
        let grad = trainer.gradient(TrainedPlayer::Generator, &joint, &batch, &adv);
        // Vanilla policy-gradient estimator of -U_G per coordinate:
        // -(1/B) sum A_i / pi(a_i|s_i) over episodes hitting (s, a).
        let b = batch.episodes.len() as f64;
        let mut oracle: Vec<Vec<f64>> = env
            .game
            .contexts()
            .iter()
            .map(|c| vec![0.0; c.actions.len()])
            .collect();
        for (e, a) in batch.episodes.iter().zip(&adv) {
            oracle[e.context][e.action] += -a / e.behavior_gen_prob / b;
        }
        for (g_row, o_row) in grad.iter().zip(&oracle) {
            for (g, o) in g_row.iter().zip(o_row) {
                assert!((g - o).abs() < 1e-10, "{g} vs {o}");
            }
        }
    }

    #[test]
    fn loss_terms_and_decomposition() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        let batch = sample_episodes(&env, &joint, 64, 5).unwrap();
        // Policy equals the reference: KL term vanishes.
        let kl = kl_penalty_term(&batch, TrainedPlayer::Generator, &env, &joint, 0.7).unwrap();
        assert!(kl.abs() < 1e-15);
        // Uniform policy over n: entropy term is -c_h log n.
        let ent = entropy_bonus_term(&batch, TrainedPlayer::Generator, &joint, 0.3).unwrap();
        assert!((ent - -0.3 * (4.0f64).ln()).abs() < 1e-12);
        // The three terms add up to a from-scratch evaluation of the
        // total loss, summed term by term in one pass.
        let adv = compute_advantages(&batch, TrainedPlayer::Generator, &[0.0; 2]).unwrap();
        let (new_probs, old_probs): (Vec<f64>, Vec<f64>) = batch
            .episodes
            .iter()
            .map(|e| (joint.generator.prob(e.context, e.action), e.behavior_gen_prob))
            .unzip();
        let clip = 0.2;
        let tau = 0.7;
        let c_h = 0.3;
        let ppo = ppo_clipped_loss(&new_probs, &old_probs, &adv, clip).unwrap();
        let kl_term = kl_penalty_term(&batch, TrainedPlayer::Generator, &env, &joint, tau).unwrap();
        let total = ppo + kl_term + ent;

        let b = batch.episodes.len() as f64;
        let mut scratch = 0.0;
        for (i, e) in batch.episodes.iter().enumerate() {
            let ratio = new_probs[i] / old_probs[i];
            let unclipped = ratio * adv[i];
            let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv[i];
            scratch += -unclipped.min(clipped) / b;
            let row = &joint.generator.rows[e.context];
            let ref_row = &env.generator_reference.rows[e.context];
            let mut kl_i = 0.0;
            let mut h_i = 0.0;
            for (p, r) in row.iter().zip(ref_row) {
                if *p > 0.0 {
                    kl_i += p * (p.ln() - r.ln());
                    h_i -= p * p.ln();
                }
            }
            scratch += (tau * kl_i - c_h * h_i) / b;
        }
        assert!((total - scratch).abs() < 1e-12, "{total} vs {scratch}");
    }

    #[test]
    fn ogda_memory_preserved_across_swaps_changes_updates() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        let cfg = PPOConfig {
            steps_per_player: 3,
            ..desk_cfg()
        };
        let run = |preserve: bool| {
            let mut t = Trainer::new(&env, cfg.clone(), TrainOptimizer::Ogda).unwrap();
            t.preserve_memory = preserve;
            let g = t.train_player(TrainedPlayer::Generator, &joint).unwrap();
            let d = t.train_player(TrainedPlayer::Detector, &g.joint).unwrap();
            let g2 = t.train_player(TrainedPlayer::Generator, &d.joint).unwrap();
            g2.joint
        };
        let reset = run(false);
        let kept = run(true);
        // Preserving the optimistic memory across the swap changes the
        // correction term of the first post-swap update.
        assert_ne!(reset.generator, kept.generator);
        reset.validate_for(&env.game).unwrap();
        kept.validate_for(&env.game).unwrap();
    }

    #[test]
    fn ppo_config_validation() {
        let bad_clip = PPOConfig {
            clip: 1.5,
            ..PPOConfig::default()
        };
        assert!(bad_clip.validate().is_err());
        let bad_steps = PPOConfig {
            steps_per_player: 0,
            ..PPOConfig::default()
        };
        assert!(bad_steps.validate().is_err());
        let bad_gamma = PPOConfig {
            gamma: 1.5,
            ..PPOConfig::default()
        };
        assert!(bad_gamma.validate().is_err());
        assert!(PPOConfig::default().validate().is_ok());
    }

    #[test]
    fn shared_types_are_send_sync() {
        fn check<T: Send + Sync>() {}
        check::<AdversarialGame>();
        check::<JointStrategy>();
        check::<RegularizationConfig>();
        check::<Env>();
        check::<Oracle>();
        check::<EpisodeBatch>();
    }

    #[test]
    fn generator_training_improves_against_frozen_detector() {
        let game = desk_game();
        let env = Env::with_uniform_references(game);
        // A fixed random-ish detector.
        let det_rows: Vec<Vec<f64>> = env
            .game
            .contexts()
            .iter()
            .enumerate()
            .map(|(s, c)| {
                (0..c.actions.len())
                    .map(|a| 0.15 + 0.7 * (((s * 7 + a * 3) % 10) as f64) / 10.0)
                    .collect()
            })
            .collect();
        let joint = JointStrategy::new(
            GeneratorStrategy::uniform(&env.game),
            DetectorStrategy::new(det_rows).unwrap(),
        );
        let cfg = PPOConfig {
            steps_per_player: 60,
            ..desk_cfg()
        };
        let report = train_player(TrainedPlayer::Generator, &env, &joint, &cfg, TrainOptimizer::Sgd).unwrap();
        assert!(!report.diverged);
        let (u0, _) = expected_utilities(&env.game, &joint).unwrap();
        let (u1, _) = expected_utilities(&env.game, &report.joint).unwrap();
        assert!(u1 >= u0, "U_G {u0} -> {u1}");
        // The frozen detector is bit-identical.
        assert_eq!(report.joint.detector, joint.detector);
    }

    #[test]
    fn detector_training_improves_accuracy() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        let cfg = PPOConfig {
            steps_per_player: 60,
            ..desk_cfg()
        };
        let report = train_player(TrainedPlayer::Detector, &env, &joint, &cfg, TrainOptimizer::Ogda).unwrap();
        let acc0 = detector_accuracy(&env.game, &joint);
        let acc1 = detector_accuracy(
            &env.game,
            &JointStrategy::new(joint.generator.clone(), report.joint.detector.clone()),
        );
        assert!(acc1 > acc0, "accuracy {acc0} -> {acc1}");
        assert_eq!(report.joint.generator, joint.generator);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        let cfg = PPOConfig {
            learning_rate: 0.0,
            ..desk_cfg()
        };
        for player in [TrainedPlayer::Generator, TrainedPlayer::Detector] {
            let report = train_player(player, &env, &joint, &cfg, TrainOptimizer::Ogda).unwrap();
            assert_eq!(report.joint, joint);
        }
    }

    #[test]
    fn alternate_train_contracts() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        assert!(alternate_train(&env, &joint, &desk_cfg(), 0, TrainOptimizer::Ogda).is_err());
        let (final_joint, metrics) =
            alternate_train(&env, &joint, &desk_cfg(), 8, TrainOptimizer::Ogda).unwrap();
        assert_eq!(metrics.len(), 8);
        final_joint.validate_for(&env.game).unwrap();
        // Feasibility of every row.
        for row in &final_joint.generator.rows {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!(row.iter().all(|p| *p >= 0.0));
        }
        for row in &final_joint.detector.rows {
            assert!(row.iter().all(|q| (0.0..=1.0).contains(q)));
        }
    }

    #[test]
    fn alternate_train_reduces_exploitability() {
        let env = Env::with_uniform_references(desk_game());
        let joint = JointStrategy::uniform(&env.game);
        let cfg = desk_cfg();
        let reg = env.reg(cfg.tau, cfg.c_h).unwrap();
        let initial = exploitability(&env.game, &reg, &joint).unwrap();
        let (_, metrics) = alternate_train(&env, &joint, &cfg, 40, TrainOptimizer::Ogda).unwrap();
        let final_expl = metrics.last().unwrap().exploitability;
        assert!(
            final_expl <= 0.5 * initial,
            "exploitability {initial} -> {final_expl}"
        );
    }

    #[test]
    fn replay_mixture_ratios() {
        let game = desk_game();
        let mut buffer = ReplayBuffer::from_game(&game);
        assert!(replay_mixture(&buffer, 10, 0).is_err()); // negatives empty
        buffer.push_negative(0, 0);
        buffer.push_negative(1, 0);
        let batch = replay_mixture(&buffer, 10, 0).unwrap();
        assert_eq!(batch.len(), 10);
        let gold = batch.iter().filter(|(_, _, y)| *y == Label::Correct).count();
        assert_eq!(gold, 5);
        // History empty: all negatives from the current partition.
        assert!(batch
            .iter()
            .filter(|(_, _, y)| *y == Label::Incorrect)
            .all(|(s, a, _)| buffer.current.contains(&(*s, *a))));
    }

    #[test]
    fn replay_mixture_historical_share() {
        let game = desk_game();
        let mut buffer = ReplayBuffer::from_game(&game);
        // Equal-size current and historical partitions with disjoint
        // markers (different actions).
        for _ in 0..100 {
            buffer.push_negative(0, 0);
        }
        buffer.rotate_snapshot();
        for _ in 0..100 {
            buffer.push_negative(0, 1);
        }
        let mut hist = 0usize;
        let mut total = 0usize;
        for seed in 0..100 {
            let batch = replay_mixture(&buffer, 200, seed).unwrap();
            for (s, a, y) in batch {
                if y == Label::Incorrect {
                    total += 1;
                    if (s, a) == (0, 0) {
                        hist += 1;
                    }
                }
            }
        }
        let share = hist as f64 / total as f64;
        assert!((share - 0.5).abs() <= 0.02, "historical share {share}");
    }

    #[test]
    fn snapshot_retention_capacity() {
        let game = desk_game();
        let mut buffer = ReplayBuffer::from_game(&game);
        for round in 0..15 {
            buffer.push_negative(0, round % 2);
            buffer.rotate_snapshot();
        }
        assert!(buffer.history.len() <= 10);
    }

    fn toy_corpus() -> Vec<GoldStep> {
        vec![
            GoldStep {
                id: "g0".into(),
                gold_text: "There are two odd faces so the probability of odd is 2/6 = 1/3".into(),
                candidates: vec![
                    "There are three odd sides hence the probability of odd is 3/6 = 1/2".into(),
                    "There are two odd faces so the probability of odd is 2/6 = 1/3".into(),
                ],
            },
            GoldStep {
                id: "g1".into(),
                gold_text: "thus x + x = y here and the sum total is y now".into(),
                candidates: vec![
                    "thus x + x = w here and the sum total is w instead now".into(),
                    "so x + x = 3 * x here and the total sum is 3 * x now".into(),
                ],
            },
        ]
    }

    #[test]
    fn curriculum_matches_static_game_with_stored_labels() {
        let oracle = Oracle::default();
        let cfg = PPOConfig {
            batch_size: 64,
            seed: 21,
            tau: 0.5,
            c_h: 0.1,
            ..PPOConfig::default()
        };
        let report =
            run_adversarial_curriculum(&toy_corpus(), &oracle, &cfg, 5, TrainOptimizer::Ogda)
                .unwrap();
        // Re-run alternate_train on the equivalent static game (labels
        // stored up front): identical trajectory under the same seed.
        let (env, _, _) = build_curriculum_env(&toy_corpus(), &oracle).unwrap();
        let joint0 = JointStrategy::new(
            env.generator_reference.clone(),
            env.detector_reference.clone(),
        );
        let (final_joint, metrics) =
            alternate_train(&env, &joint0, &cfg, 5, TrainOptimizer::Ogda).unwrap();
        assert_eq!(report.final_joint, final_joint);
        for (a, b) in report.rounds.iter().zip(&metrics) {
            assert_eq!(a.exploitability, b.exploitability);
            assert_eq!(a.deception_rate, b.deception_rate);
        }
        assert!(run_adversarial_curriculum(&toy_corpus(), &oracle, &cfg, 0, TrainOptimizer::Ogda).is_err());
    }

    #[test]
    fn curriculum_counts_rejections() {
        let oracle = Oracle::default();
        let (env, excluded, rejected) = build_curriculum_env(&toy_corpus(), &oracle).unwrap();
        // The identical candidate in g0 is proximity-rejected and flagged.
        assert!(rejected >= 1);
        assert_eq!(excluded, 0);
        assert!(!env.flagged.is_empty());
        let batch = sample_episodes(
            &env,
            &JointStrategy::uniform(&env.game),
            2000,
            3,
        )
        .unwrap();
        assert!(batch.episodes.iter().any(|e| e.oracle_flagged));
    }
}
