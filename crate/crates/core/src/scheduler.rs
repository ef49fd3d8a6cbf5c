//! Adaptive multi-curricula scheduling.
//!
//! A linear-softmax policy picks one of the five curricula per training step.
//! Every `validate_every` steps the learner is validated, the metric deviation
//! and its ratio to the previous deviation give a terminal reward, and the
//! policy takes one REINFORCE step over the steps of that interval.

use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::Attribute;
use crate::curriculum::{prefix_len, progressing_function, Curriculum, Direction, ProgressConfig};
use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::metrics::{deviation, MetricVector, NormalizationState, METRIC_COUNT};

/// Number of curricula, i.e. policy actions.
pub const NUM_ACTIONS: usize = 5;
/// Feature dimension: batch count, two losses, margin, metrics and per-curriculum progress.
pub const FEATURE_DIM: usize = 4 + METRIC_COUNT + NUM_ACTIONS;

/// Learning status observed by the policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchedulerState {
    pub batch_count: u64,
    pub avg_hist_loss: f64,
    pub current_loss: f64,
    pub margin: f64,
    /// Normalized metrics of the last validation turn.
    pub last_metrics: [f64; METRIC_COUNT],
    pub rho: [u64; NUM_ACTIONS],
}

impl Default for SchedulerState {
    fn default() -> Self {
        Self {
            batch_count: 0,
            avg_hist_loss: 0.0,
            current_loss: 0.0,
            margin: 0.0,
            last_metrics: [0.5; METRIC_COUNT],
            rho: [0; NUM_ACTIONS],
        }
    }
}

impl SchedulerState {
    fn record_batch(&mut self, loss: f64, margin: f64) {
        self.batch_count += 1;
        let n = self.batch_count as f64;
        self.avg_hist_loss += (loss - self.avg_hist_loss) / n;
        self.current_loss = loss;
        self.margin = margin;
    }
}

fn squash(v: f64) -> f64 {
    let v = v.max(0.0);
    v / (1.0 + v)
}

/// Map the state into `[0, 1]^22` given the curriculum duration.
pub fn featurize(state: &SchedulerState, duration: u64) -> Vec<f64> {
    let t = duration.max(1) as f64;
    let mut x = Vec::with_capacity(FEATURE_DIM);
    x.push(((1.0 + state.batch_count as f64).ln() / (1.0 + t).ln()).min(1.0));
    x.push(squash(state.avg_hist_loss));
    x.push(squash(state.current_loss));
    x.push(state.margin.clamp(0.0, 1.0));
    x.extend(state.last_metrics.iter().map(|m| m.clamp(0.0, 1.0)));
    x.extend(state.rho.iter().map(|&r| (r as f64 / t).min(1.0)));
    x
}

/// Linear-softmax policy parameters: `actions × features` weights plus a bias per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub actions: usize,
    pub features: usize,
    /// Row-major `actions × features`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(actions: usize, features: usize) -> Self {
        Self {
            actions,
            features,
            weights: vec![0.0; actions * features],
            bias: vec![0.0; actions],
        }
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.features {
            return Err(Error::DimensionMismatch {
                expected: self.features,
                got: x.len(),
            });
        }
        Ok((0..self.actions)
            .map(|a| {
                let row = &self.weights[a * self.features..(a + 1) * self.features];
                self.bias[a] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect())
    }

    /// `self + scale · other`.
    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        self.weights
            .iter_mut()
            .zip(&other.weights)
            .for_each(|(w, g)| *w += scale * g);
        self.bias.iter_mut().zip(&other.bias).for_each(|(b, g)| *b += scale * g);
    }
}

fn log_softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..logits.len())
        .filter(|&i| allowed(i))
        .map(|i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = (0..logits.len())
        .filter(|&i| allowed(i))
        .map(|i| (logits[i] - max).exp())
        .sum();
    let lse = max + sum.ln();
    (0..logits.len())
        .map(|i| if allowed(i) { logits[i] - lse } else { f64::NEG_INFINITY })
        .collect()
}

/// `softmax(W x + b)`.
pub fn policy_forward(params: &PolicyParams, features: &[f64]) -> Result<Vec<f64>> {
    policy_forward_masked(params, features, None)
}

/// Softmax restricted to the actions enabled in `mask`; disabled actions get probability 0.
pub fn policy_forward_masked(params: &PolicyParams, features: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    let logits = params.logits(features)?;
    Ok(log_softmax(&logits, mask).into_iter().map(f64::exp).collect())
}

/// Categorical draw from `probabilities`.
pub fn sample_action<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in probabilities.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    // rounding left u above the cumulative sum
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub features: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    /// Enabled actions at this step; `None` means all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
}

/// The steps of one validation interval and its terminal reward.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    terminal_reward: Option<f64>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: TrajectoryStep) {
        self.steps.push(step);
    }

    pub fn terminal_reward(&self) -> Option<f64> {
        self.terminal_reward
    }

    pub fn set_terminal_reward(&mut self, reward: f64) -> Result<()> {
        if self.terminal_reward.is_some() {
            return Err(Error::invalid("terminal reward already set"));
        }
        self.terminal_reward = Some(reward);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `Σ_t log π(a_t | s_t) · v` with `v` the terminal reward.
pub fn reinforce_objective(params: &PolicyParams, trajectory: &Trajectory) -> Result<f64> {
    let v = trajectory
        .terminal_reward
        .ok_or_else(|| Error::invalid("trajectory has no terminal reward"))?;
    let mut total = 0.0;
    for step in &trajectory.steps {
        let logits = params.logits(&step.features)?;
        total += log_softmax(&logits, step.mask.as_deref())[step.action] * v;
    }
    Ok(total)
}

/// Analytic gradient of [`reinforce_objective`].
///
/// For a linear-softmax policy `∂ log π(a|x) / ∂W_j = (1[j = a] − π_j) x` and
/// likewise for the bias without the `x` factor.
pub fn reinforce_gradient(params: &PolicyParams, trajectory: &Trajectory) -> Result<PolicyParams> {
    if trajectory.steps.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    let v = trajectory
        .terminal_reward
        .ok_or_else(|| Error::invalid("trajectory has no terminal reward"))?;
    let mut grad = PolicyParams::zeros(params.actions, params.features);
    for step in &trajectory.steps {
        let probs = policy_forward_masked(params, &step.features, step.mask.as_deref())?;
        for (j, &p) in probs.iter().enumerate() {
            let coeff = (if j == step.action { 1.0 } else { 0.0 } - p) * v;
            if coeff == 0.0 {
                continue;
            }
            grad.bias[j] += coeff;
            let row = &mut grad.weights[j * params.features..(j + 1) * params.features];
            row.iter_mut().zip(&step.features).for_each(|(g, x)| *g += coeff * x);
        }
    }
    Ok(grad)
}

/// One gradient-ascent step on the REINFORCE objective.
pub fn reinforce_update(params: &PolicyParams, trajectory: &Trajectory, learning_rate: f64) -> Result<PolicyParams> {
    let grad = reinforce_gradient(params, trajectory)?;
    let mut next = params.clone();
    next.add_scaled(&grad, learning_rate);
    Ok(next)
}

/// Guards for the deviation-ratio reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub epsilon: f64,
    pub clip: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            clip: 5.0,
        }
    }
}

/// `δ / δ_prev − 1`, with `|δ_prev|` floored at epsilon (sign kept, zero counts as
/// positive) and the result clipped to `[−clip, clip]`.
pub fn reward(delta_curr: f64, delta_prev: f64, cfg: &RewardConfig) -> f64 {
    let sign = if delta_prev < 0.0 { -1.0 } else { 1.0 };
    let ratio = delta_curr / delta_prev.abs().max(cfg.epsilon) * sign;
    (ratio - 1.0).clamp(-cfg.clip, cfg.clip)
}

/// Training protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Learned policy over easy-first curricula.
    Adaptive,
    /// Uniform curriculum choice, no policy updates.
    RandomPolicy,
    /// Learned policy over reversed (hard-first) curricula.
    Anti,
    /// Always the given curriculum.
    Single(Attribute),
    /// No curriculum: uniform batches from the whole training set.
    None,
}

impl Mode {
    fn learns(self) -> bool {
        matches!(self, Mode::Adaptive | Mode::Anti)
    }

    pub fn label(self) -> String {
        match self {
            Mode::Adaptive => "adaptive".into(),
            Mode::RandomPolicy => "random_policy".into(),
            Mode::Anti => "anti".into(),
            Mode::Single(a) => format!("single:{a}"),
            Mode::None => "none".into(),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Mode::Adaptive),
            "random_policy" | "random" => Ok(Mode::RandomPolicy),
            "anti" => Ok(Mode::Anti),
            "none" | "vanilla" => Ok(Mode::None),
            _ => match s.strip_prefix("single:") {
                Some(attr) => Ok(Mode::Single(attr.parse()?)),
                None => Err(Error::Config(format!("unknown mode `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Total training steps (batches).
    pub steps: usize,
    /// Validation and policy-update interval Γ.
    pub validate_every: usize,
    pub progress: ProgressConfig,
    pub batch_size: usize,
    pub policy_lr: f64,
    /// Halt after this many consecutive validations with negative deviation.
    pub patience: Option<usize>,
    /// Moving-average reward baseline decay; `None` disables the baseline.
    pub baseline_decay: Option<f64>,
    pub reward: RewardConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.validate_every == 0 {
            return Err(Error::Config("validation interval must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        ProgressConfig::new(self.progress.c0, self.progress.duration)?;
        if let Some(d) = self.baseline_decay {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::Config(format!("baseline decay must lie in [0, 1), got {d}")));
            }
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Adaptive,
            steps: 2000,
            validate_every: 50,
            progress: ProgressConfig {
                c0: crate::curriculum::DEFAULT_C0,
                duration: 1000,
            },
            batch_size: 32,
            policy_lr: 0.01,
            patience: Some(5),
            baseline_decay: None,
            reward: RewardConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: Option<Attribute>,
    /// Competence of the drawn curriculum when the batch was sampled.
    pub competence: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRecord {
    pub turn: usize,
    pub step: usize,
    pub metrics: MetricVector,
    pub delta: Option<f64>,
    pub reward: f64,
    /// Mean action distribution over the steps of the interval.
    pub action_distribution: [f64; NUM_ACTIONS],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: String,
    pub steps: Vec<StepRecord>,
    pub validations: Vec<ValidationRecord>,
    pub rho: [u64; NUM_ACTIONS],
    pub policy: PolicyParams,
    pub stopped_early: bool,
    /// Noise-free quality of a synthetic learner at the end of the run.
    pub final_score: Option<f64>,
}

impl RunReport {
    /// Line-delimited records: one per step, one per validation, then a summary.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        let mut emit = |kind: &str, value: serde_json::Value| -> Result<()> {
            let mut obj = serde_json::Map::new();
            obj.insert("record".into(), kind.into());
            if let serde_json::Value::Object(map) = value {
                obj.extend(map);
            }
            let line = serde_json::to_string(&obj).map_err(|e| Error::invalid(e.to_string()))?;
            writeln!(writer, "{line}").map_err(|e| Error::io("<report>", e))
        };
        for s in &self.steps {
            emit("step", to_value(s))?;
        }
        for v in &self.validations {
            emit("validation", to_value(v))?;
        }
        emit(
            "summary",
            serde_json::json!({
                "mode": self.mode,
                "rho": self.rho,
                "stopped_early": self.stopped_early,
                "final_score": self.final_score,
                "policy": self.policy,
            }),
        )
    }

    pub fn write_steps_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "action", "competence", "loss"])
            .map_err(|e| Error::invalid(e.to_string()))?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                s.action.map(|a| a.name().to_string()).unwrap_or_default(),
                s.competence.to_string(),
                s.loss.to_string(),
            ])
            .map_err(|e| Error::invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<steps>", e))
    }

    pub fn write_validations_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = vec!["turn".into(), "step".into()];
        header.extend(MetricVector::NAMES.iter().map(|s| s.to_string()));
        header.extend(["delta".into(), "reward".into()]);
        header.extend(Attribute::ALL.iter().map(|a| format!("pi_{a}")));
        w.write_record(&header).map_err(|e| Error::invalid(e.to_string()))?;
        for v in &self.validations {
            let mut row = vec![v.turn.to_string(), v.step.to_string()];
            row.extend(v.metrics.to_array().iter().map(f64::to_string));
            row.push(v.delta.map(|d| d.to_string()).unwrap_or_default());
            row.push(v.reward.to_string());
            row.extend(v.action_distribution.iter().map(f64::to_string));
            w.write_record(&row).map_err(|e| Error::invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<validations>", e))
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Drive `learner` through the curricula according to `cfg.mode`.
///
/// `curricula` holds easy-first curricula, at most one per attribute; a missing
/// attribute disables that action. In `Anti` mode every ordering is reversed.
/// `n_samples` is the training-set size used by `Mode::None`.
pub fn train_loop(
    learner: &mut dyn Learner,
    curricula: Vec<Curriculum>,
    n_samples: usize,
    cfg: &TrainConfig,
) -> Result<RunReport> {
    cfg.validate()?;
    let mut slots: Vec<Option<Curriculum>> = vec![None; NUM_ACTIONS];
    for mut c in curricula {
        if c.is_empty() {
            continue;
        }
        let want = if cfg.mode == Mode::Anti {
            Direction::Anti
        } else {
            Direction::EasyFirst
        };
        if c.direction != want {
            c.order.reverse();
            c.direction = want;
        }
        c.rho = 0;
        let idx = c.attribute.index();
        slots[idx] = Some(c);
    }
    let mask: Vec<bool> = slots.iter().map(Option::is_some).collect();
    match cfg.mode {
        Mode::None if n_samples == 0 => return Err(Error::invalid("empty training set")),
        Mode::None => {}
        Mode::Single(a) if !mask[a.index()] => return Err(Error::invalid(format!("no {a} curriculum available"))),
        _ if !mask.iter().any(|&m| m) => return Err(Error::invalid("no curricula")),
        _ => {}
    }
    let full_mask = mask.iter().all(|&m| m);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = PolicyParams::zeros(NUM_ACTIONS, FEATURE_DIM);
    let mut state = SchedulerState::default();
    let mut norm = NormalizationState::default();
    let mut trajectory = Trajectory::new();
    let mut prev_metrics: Option<MetricVector> = None;
    let mut prev_delta: Option<f64> = None;
    let mut baseline = 0.0;
    let mut negative_streak = 0usize;
    let mut dist_sum = [0.0; NUM_ACTIONS];
    let mut dist_count = 0usize;

    let mut report = RunReport {
        mode: cfg.mode.label(),
        steps: Vec::with_capacity(cfg.steps),
        validations: Vec::new(),
        rho: [0; NUM_ACTIONS],
        policy: policy.clone(),
        stopped_early: false,
        final_score: None,
    };

    let enabled = mask.iter().filter(|&&m| m).count() as f64;
    for step in 0..cfg.steps {
        let features = featurize(&state, cfg.progress.duration);
        let probs: Vec<f64> = match cfg.mode {
            Mode::Adaptive | Mode::Anti => {
                policy_forward_masked(&policy, &features, (!full_mask).then_some(mask.as_slice()))?
            }
            Mode::RandomPolicy => mask.iter().map(|&m| if m { 1.0 / enabled } else { 0.0 }).collect(),
            Mode::Single(a) => (0..NUM_ACTIONS)
                .map(|i| if i == a.index() { 1.0 } else { 0.0 })
                .collect(),
            Mode::None => vec![0.0; NUM_ACTIONS],
        };

        let (action, competence, batch) = if cfg.mode == Mode::None {
            let batch = (0..cfg.batch_size).map(|_| rng.random_range(0..n_samples)).collect();
            (None, 1.0, batch)
        } else {
            let a = sample_action(&probs, &mut rng);
            let cur = slots[a].as_mut().expect("sampled action is enabled");
            let competence = progressing_function(&cfg.progress, cur.rho);
            debug_assert_eq!(prefix_len(competence, cur.len()), cur.available(&cfg.progress));
            let batch = cur.sample_batch(&cfg.progress, cfg.batch_size, &mut rng);
            state.rho[a] = cur.rho;
            (Some(a), competence, batch)
        };

        let stats = learner.train_batch(&batch).map_err(|e| Error::AtStep {
            step,
            source: Box::new(e),
        })?;
        state.record_batch(stats.loss, stats.margin);

        if let Some(a) = action {
            for (s, p) in dist_sum.iter_mut().zip(&probs) {
                *s += p;
            }
            dist_count += 1;
            if cfg.mode.learns() {
                trajectory.push(TrajectoryStep {
                    features,
                    action: a,
                    log_prob: probs[a].ln(),
                    mask: (!full_mask).then(|| mask.clone()),
                });
            }
        }
        report.steps.push(StepRecord {
            step,
            action: action.and_then(Attribute::from_index),
            competence,
            loss: stats.loss,
        });

        if (step + 1) % cfg.validate_every != 0 {
            continue;
        }
        let metrics = learner.validate().map_err(|e| Error::AtStep {
            step,
            source: Box::new(e),
        })?;
        norm.observe(&metrics);
        let delta = prev_metrics.map(|prev| deviation(&metrics, &prev, &norm));
        let m = match (delta, prev_delta) {
            (Some(d), Some(p)) => reward(d, p, &cfg.reward),
            _ => 0.0,
        };
        if cfg.mode.learns() && !trajectory.is_empty() {
            let v = match cfg.baseline_decay {
                Some(decay) => {
                    let v = m - baseline;
                    baseline = decay * baseline + (1.0 - decay) * m;
                    v
                }
                None => m,
            };
            trajectory.set_terminal_reward(v)?;
            policy = reinforce_update(&policy, &trajectory, cfg.policy_lr)?;
        }
        trajectory = Trajectory::new();

        let mut action_distribution = [0.0; NUM_ACTIONS];
        if dist_count > 0 {
            for (d, s) in action_distribution.iter_mut().zip(&dist_sum) {
                *d = s / dist_count as f64;
            }
        }
        dist_sum = [0.0; NUM_ACTIONS];
        dist_count = 0;

        state.last_metrics = norm.normalize(&metrics);
        report.validations.push(ValidationRecord {
            turn: report.validations.len() + 1,
            step: step + 1,
            metrics,
            delta,
            reward: m,
            action_distribution,
        });
        prev_metrics = Some(metrics);
        prev_delta = delta;

        negative_streak = match delta {
            Some(d) if d < 0.0 => negative_streak + 1,
            _ => 0,
        };
        if cfg.patience.is_some_and(|p| negative_streak >= p) {
            report.stopped_early = true;
            break;
        }
    }

    report.rho = state.rho;
    report.policy = policy;
    report.final_score = learner.score();
    Ok(report)
}
