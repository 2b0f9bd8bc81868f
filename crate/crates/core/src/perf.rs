//! Acceptance arithmetic and a roofline cost model.
//!
//! A forward pass costs `max(bytes / bandwidth, flops / peak)` plus a fixed
//! overhead per kernel launch. Bytes are the parameters once per pass plus the
//! KV history of every sequence; activation traffic and softmax work are
//! ignored. Times are simulated seconds, independent of the host.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{launch_count, pad_cost, AttentionStrategy, RaggedShape};
use crate::draft::{DraftError, DraftLengthParams, DraftPolicy};
use crate::engine::GenerationResult;
use crate::model::ModelConfig;

/// Non-attention kernels per layer: two layer norms and four GEMMs.
const DENSE_LAUNCHES_PER_LAYER: usize = 6;
/// Embedding gather and output head.
const EDGE_LAUNCHES: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum PerfError {
    #[error("acceptance probability must lie in [0, 1), got {0}")]
    CertainAcceptance(f64),
    #[error("invalid acceptance model: {0}")]
    AcceptanceModel(String),
    #[error("invalid hardware profile: {0}")]
    Profile(String),
    #[error("trace does not match the prompt lengths: {0}")]
    Trace(String),
    #[error(transparent)]
    Draft(#[from] DraftError),
}

/// Accelerator constants. The default is an A100 40GB class device at 16-bit
/// weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub memory_bandwidth: f64,
    pub peak_flops: f64,
    pub launch_overhead_s: f64,
    pub bytes_per_param: f64,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        Self {
            memory_bandwidth: 1.555e12,
            peak_flops: 3.12e14,
            launch_overhead_s: 5e-6,
            bytes_per_param: 2.0,
        }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<(), PerfError> {
        let fields = [
            ("memory_bandwidth", self.memory_bandwidth),
            ("peak_flops", self.peak_flops),
            ("launch_overhead_s", self.launch_overhead_s),
            ("bytes_per_param", self.bytes_per_param),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(PerfError::Profile(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Shape of a transformer for costing; biases and norms are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub n_layer: usize,
    pub d_model: usize,
    pub n_head: usize,
    pub vocab_size: usize,
    /// Input embedding shared with the output head.
    pub tied_embeddings: bool,
}

impl ModelGeometry {
    /// 7.8B-parameter class main model.
    pub fn main_7_8b() -> Self {
        Self {
            n_layer: 38,
            d_model: 4096,
            n_head: 32,
            vocab_size: 51200,
            tied_embeddings: true,
        }
    }

    /// 310M-parameter class draft model.
    pub fn draft_310m() -> Self {
        Self {
            n_layer: 4,
            d_model: 2048,
            n_head: 16,
            vocab_size: 51200,
            tied_embeddings: true,
        }
    }

    pub fn from_config(c: &ModelConfig) -> Self {
        Self {
            n_layer: c.n_layer,
            d_model: c.d_model,
            n_head: c.n_head,
            vocab_size: c.vocab_size,
            tied_embeddings: false,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_head
    }

    pub fn param_count(&self) -> f64 {
        let d = self.d_model as f64;
        let embed = self.vocab_size as f64 * d;
        12.0 * self.n_layer as f64 * d * d + if self.tied_embeddings { embed } else { 2.0 * embed }
    }

    fn kv_bytes_per_position(&self, profile: &HardwareProfile) -> f64 {
        2.0 * (self.n_layer * self.d_model) as f64 * profile.bytes_per_param
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepCost {
    pub time_s: f64,
    /// Useful work only; padded slots are excluded.
    pub flops: f64,
    pub bytes: f64,
    pub launches: usize,
    pub utilization: f64,
}

impl StepCost {
    fn finish(mut self, profile: &HardwareProfile) -> Self {
        self.utilization = if self.time_s > 0.0 {
            (self.flops / (self.time_s * profile.peak_flops)).min(1.0)
        } else {
            0.0
        };
        self
    }

    fn combine(self, other: StepCost, profile: &HardwareProfile) -> Self {
        StepCost {
            time_s: self.time_s + other.time_s,
            flops: self.flops + other.flops,
            bytes: self.bytes + other.bytes,
            launches: self.launches + other.launches,
            utilization: 0.0,
        }
        .finish(profile)
    }
}

/// One forward pass over `(new positions, cached positions)` per sequence.
pub fn cost_forward(
    profile: &HardwareProfile,
    geom: &ModelGeometry,
    seqs: &[(usize, usize)],
    strategy: AttentionStrategy,
) -> StepCost {
    if seqs.is_empty() {
        return StepCost::default();
    }
    let params = geom.param_count();
    let per_layer_d = (geom.n_layer * geom.d_model) as f64;
    let mut flops = 0.0;
    let mut bytes = params * profile.bytes_per_param;
    let mut shape = Vec::with_capacity(seqs.len());
    for &(q, cached) in seqs {
        let kv = cached + q;
        flops += q as f64 * 2.0 * params;
        // QK^T and AV over the causal window, two flops per multiply-add.
        let pairs: f64 = (0..q).map(|i| (cached + i + 1) as f64).sum();
        flops += 4.0 * per_layer_d * pairs;
        bytes += cached as f64 * geom.kv_bytes_per_position(profile);
        shape.push((q, kv));
    }
    let waste = match strategy {
        AttentionStrategy::Pad => {
            let ragged = RaggedShape {
                n_head: geom.n_head,
                d_head: geom.d_head(),
                seqs: shape,
            };
            2.0 * pad_cost(&ragged) as f64 * geom.n_layer as f64
        }
        AttentionStrategy::Split => 0.0,
    };
    let launches = geom.n_layer * (DENSE_LAUNCHES_PER_LAYER + launch_count(strategy, seqs.len())) + EDGE_LAUNCHES;
    let time = (bytes / profile.memory_bandwidth).max((flops + waste) / profile.peak_flops)
        + launches as f64 * profile.launch_overhead_s;
    StepCost {
        time_s: time,
        flops,
        bytes,
        launches,
        utilization: 0.0,
    }
    .finish(profile)
}

/// One regular decoding step: a single new position per sequence.
pub fn cost_regular_step(
    profile: &HardwareProfile,
    geom: &ModelGeometry,
    context_lens: &[usize],
    strategy: AttentionStrategy,
) -> StepCost {
    let seqs: Vec<(usize, usize)> = context_lens.iter().map(|&c| (1, c)).collect();
    cost_forward(profile, geom, &seqs, strategy)
}

/// `k` sequential draft passes followed by one main pass over `k + 1`
/// positions per sequence. With `draft = None` only the main pass is costed.
pub fn cost_speculative_step(
    profile: &HardwareProfile,
    main: &ModelGeometry,
    draft: Option<&ModelGeometry>,
    context_lens: &[usize],
    k: usize,
    strategy: AttentionStrategy,
) -> StepCost {
    let mut total = StepCost::default();
    if let Some(d) = draft {
        for j in 0..k {
            let seqs: Vec<(usize, usize)> = context_lens.iter().map(|&c| (1, c + j)).collect();
            total = total.combine(cost_forward(profile, d, &seqs, strategy), profile);
        }
    }
    let seqs: Vec<(usize, usize)> = context_lens.iter().map(|&c| (k + 1, c)).collect();
    total.combine(cost_forward(profile, main, &seqs, strategy), profile)
}

/// Expected tokens per draft when every batch member must accept a position
/// for it to count, with an unbounded draft: `1 / (1 - p^b)`.
pub fn expected_tokens_naive_batch(p: f64, b: usize) -> Result<f64, PerfError> {
    if !(0.0..1.0).contains(&p) {
        return Err(PerfError::CertainAcceptance(p));
    }
    if b == 0 {
        return Err(PerfError::AcceptanceModel("batch size must be >= 1".into()));
    }
    Ok(1.0 / (1.0 - p.powi(b as i32)))
}

/// Expected tokens committed per step for one sequence with draft length `k`,
/// counting the corrected or bonus token: `(1 - p^(k+1)) / (1 - p)`.
pub fn expected_tokens_per_seq(p: f64, k: usize) -> Result<f64, PerfError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PerfError::AcceptanceModel(format!("p must lie in [0, 1], got {p}")));
    }
    if k == 0 {
        return Err(PerfError::AcceptanceModel("draft length must be >= 1".into()));
    }
    Ok((0..=k).map(|j| p.powi(j as i32)).sum())
}

/// Independent per-position acceptance `p` for a batch of `b` sequences
/// drafting `k` tokens per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceModel {
    pub p: f64,
    pub b: usize,
    pub k: usize,
}

impl AcceptanceModel {
    pub fn validate(&self) -> Result<(), PerfError> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(PerfError::AcceptanceModel(format!(
                "p must lie in [0, 1], got {}",
                self.p
            )));
        }
        if self.b == 0 || self.k == 0 {
            return Err(PerfError::AcceptanceModel("b and k must be >= 1".into()));
        }
        Ok(())
    }

    /// Accepted drafts for one sequence at one step, truncated at `k`.
    fn sample_accepted(&self, k: usize, rng: &mut impl Rng) -> usize {
        (0..k).take_while(|_| rng.random::<f64>() < self.p).count()
    }
}

/// Per-token latency of the first-finishing sequence, the last-finishing
/// sequence and the mean over all sequences.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub first_s: f64,
    pub last_s: f64,
    pub all_s: f64,
}

impl LatencyStats {
    /// From `(finish time, token count)` per sequence. Ties in finish time
    /// resolve to the lower index.
    pub fn from_finishes(finishes: &[(f64, usize)]) -> Self {
        if finishes.is_empty() {
            return Self::default();
        }
        let per_token = |&(t, n): &(f64, usize)| t / n.max(1) as f64;
        let first = finishes
            .iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(per_token)
            .unwrap_or(0.0);
        let last = finishes
            .iter()
            .rev()
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(per_token)
            .unwrap_or(0.0);
        let all = finishes.iter().map(per_token).sum::<f64>() / finishes.len() as f64;
        Self {
            first_s: first,
            last_s: last,
            all_s: all,
        }
    }

    pub fn divergence_s(&self) -> f64 {
        self.last_s - self.first_s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationReport {
    pub latency: LatencyStats,
    pub total_time_s: f64,
    pub steps: usize,
    pub flops: f64,
    /// Useful flops over `total time * peak`.
    pub utilization: f64,
    /// Simulated finish time of every sequence.
    pub finish_times_s: Vec<f64>,
}

/// Geometries and workload shared by every simulation mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSetup {
    pub profile: HardwareProfile,
    pub main: ModelGeometry,
    pub draft: ModelGeometry,
    pub strategy: AttentionStrategy,
    pub prompt_len: usize,
    pub new_tokens: usize,
}

impl Default for SimSetup {
    fn default() -> Self {
        Self {
            profile: HardwareProfile::default(),
            main: ModelGeometry::main_7_8b(),
            draft: ModelGeometry::draft_310m(),
            strategy: AttentionStrategy::Split,
            prompt_len: 128,
            new_tokens: 128,
        }
    }
}

/// What drives the simulated clock.
#[derive(Debug, Clone, Copy)]
pub enum SimSource<'a> {
    /// Replays a recorded engine run; `prompt_lens` are its prompt lengths.
    Trace {
        result: &'a GenerationResult,
        prompt_lens: &'a [usize],
    },
    /// Regular decoding of `b` sequences to `new_tokens` each.
    Regular { b: usize },
    /// Speculative decoding with independent per-position acceptance,
    /// averaged over `trials` seeded runs. `adaptive = None` fixes the draft
    /// length at `model.k`.
    Analytic {
        model: AcceptanceModel,
        adaptive: Option<DraftLengthParams>,
        trials: usize,
        seed: u64,
    },
}

struct Clock<'s> {
    setup: &'s SimSetup,
    time: f64,
    flops: f64,
    steps: usize,
}

impl<'s> Clock<'s> {
    fn advance(&mut self, cost: StepCost) {
        self.time += cost.time_s;
        self.flops += cost.flops;
        self.steps += 1;
    }

    fn report(&self, finishes: &[(f64, usize)]) -> SimulationReport {
        SimulationReport {
            latency: LatencyStats::from_finishes(finishes),
            total_time_s: self.time,
            steps: self.steps,
            flops: self.flops,
            utilization: if self.time > 0.0 {
                self.flops / (self.time * self.setup.profile.peak_flops)
            } else {
                0.0
            },
            finish_times_s: finishes.iter().map(|f| f.0).collect(),
        }
    }
}

pub fn simulate_run(setup: &SimSetup, source: SimSource<'_>) -> Result<SimulationReport, PerfError> {
    setup.profile.validate()?;
    match source {
        SimSource::Trace { result, prompt_lens } => simulate_trace(setup, result, prompt_lens),
        SimSource::Regular { b } => {
            if b == 0 {
                return Err(PerfError::AcceptanceModel("batch size must be >= 1".into()));
            }
            let mut clock = Clock {
                setup,
                time: 0.0,
                flops: 0.0,
                steps: 0,
            };
            for t in 0..setup.new_tokens {
                let ctx = vec![setup.prompt_len + t; b];
                clock.advance(cost_regular_step(&setup.profile, &setup.main, &ctx, setup.strategy));
            }
            let finishes = vec![(clock.time, setup.new_tokens); b];
            Ok(clock.report(&finishes))
        }
        SimSource::Analytic {
            model,
            adaptive,
            trials,
            seed,
        } => {
            model.validate()?;
            let trials = trials.max(1);
            let mut sum = SimulationReport::default();
            let mut finish_sum = vec![0.0; model.b];
            for trial in 0..trials {
                let policy = match adaptive {
                    Some(params) => DraftPolicy::adaptive(params)?,
                    None => DraftPolicy::fixed(model.k)?,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
                let r = simulate_analytic_once(setup, &model, policy, &mut rng)?;
                sum.latency.first_s += r.latency.first_s;
                sum.latency.last_s += r.latency.last_s;
                sum.latency.all_s += r.latency.all_s;
                sum.total_time_s += r.total_time_s;
                sum.steps += r.steps;
                sum.flops += r.flops;
                for (acc, t) in finish_sum.iter_mut().zip(&r.finish_times_s) {
                    *acc += t;
                }
            }
            let n = trials as f64;
            Ok(SimulationReport {
                latency: LatencyStats {
                    first_s: sum.latency.first_s / n,
                    last_s: sum.latency.last_s / n,
                    all_s: sum.latency.all_s / n,
                },
                total_time_s: sum.total_time_s / n,
                steps: sum.steps / trials,
                flops: sum.flops / n,
                utilization: sum.flops / (sum.total_time_s * setup.profile.peak_flops),
                finish_times_s: finish_sum.iter().map(|t| t / n).collect(),
            })
        }
    }
}

fn simulate_analytic_once(
    setup: &SimSetup,
    model: &AcceptanceModel,
    mut policy: DraftPolicy,
    rng: &mut impl Rng,
) -> Result<SimulationReport, PerfError> {
    let n = setup.new_tokens;
    let mut generated = vec![0usize; model.b];
    let mut finish = vec![0.0f64; model.b];
    let mut clock = Clock {
        setup,
        time: 0.0,
        flops: 0.0,
        steps: 0,
    };
    loop {
        let active: Vec<usize> = (0..model.b).filter(|&i| generated[i] < n).collect();
        if active.is_empty() {
            break;
        }
        let l = policy.current();
        let k = active.iter().map(|&i| n - generated[i]).min().unwrap_or(1).min(l);
        let ctx: Vec<usize> = active.iter().map(|&i| setup.prompt_len + generated[i]).collect();
        clock.advance(cost_speculative_step(
            &setup.profile,
            &setup.main,
            Some(&setup.draft),
            &ctx,
            k,
            setup.strategy,
        ));
        let accepted: Vec<usize> = active.iter().map(|_| model.sample_accepted(k, rng)).collect();
        for (&i, &x) in active.iter().zip(&accepted) {
            generated[i] = (generated[i] + x + 1).min(n);
            if generated[i] == n {
                finish[i] = clock.time;
            }
        }
        if k == l {
            policy.observe(&accepted)?;
        }
    }
    let finishes: Vec<(f64, usize)> = finish.iter().map(|&t| (t, n)).collect();
    Ok(clock.report(&finishes))
}

fn simulate_trace(
    setup: &SimSetup,
    result: &GenerationResult,
    prompt_lens: &[usize],
) -> Result<SimulationReport, PerfError> {
    let b = result.sequences.len();
    if prompt_lens.len() != b {
        return Err(PerfError::Trace(format!(
            "{} prompt lengths for {b} sequences",
            prompt_lens.len()
        )));
    }
    let mut ctx = prompt_lens.to_vec();
    let mut finish = vec![0.0f64; b];
    let mut clock = Clock {
        setup,
        time: 0.0,
        flops: 0.0,
        steps: 0,
    };
    for step in &result.trace {
        if step.sequences.len() != b {
            return Err(PerfError::Trace(format!(
                "step {} has {} sequences",
                step.step,
                step.sequences.len()
            )));
        }
        let active: Vec<usize> = step.sequences.iter().filter(|s| s.active).map(|s| s.seq).collect();
        let lens: Vec<usize> = active.iter().map(|&s| ctx[s]).collect();
        let cost = if step.draft_len == 0 {
            cost_regular_step(&setup.profile, &setup.main, &lens, setup.strategy)
        } else {
            cost_speculative_step(
                &setup.profile,
                &setup.main,
                Some(&setup.draft),
                &lens,
                step.effective_draft_len,
                setup.strategy,
            )
        };
        clock.advance(cost);
        for s in step.sequences.iter().filter(|s| s.active) {
            ctx[s.seq] += s.emitted.len();
            if s.finished {
                finish[s.seq] = clock.time;
            }
        }
    }
    let finishes: Vec<(f64, usize)> = finish
        .iter()
        .zip(&result.sequences)
        .map(|(&t, s)| (t, s.tokens.len()))
        .collect();
    Ok(clock.report(&finishes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a100() -> HardwareProfile {
        HardwareProfile::default()
    }

    #[test]
    fn naive_batch_expectation_worked_values() {
        // 0.8 is not representable; the correctly rounded result is 1 ulp above 5.
        let one = expected_tokens_naive_batch(0.8, 1).unwrap();
        assert!((one - 5.0).abs() <= 4.0 * f64::EPSILON * 5.0, "{one}");
        let five = expected_tokens_naive_batch(0.8, 5).unwrap();
        assert!((five - 1.488).abs() < 1e-3, "{five}");
        assert_eq!(expected_tokens_naive_batch(0.0, 3).unwrap(), 1.0);
        assert!(expected_tokens_naive_batch(1.0, 1).is_err());
    }

    #[test]
    fn per_sequence_expectation_matches_brute_force() {
        assert_eq!(expected_tokens_per_seq(0.0, 5).unwrap(), 1.0);
        assert_eq!(expected_tokens_per_seq(1.0, 7).unwrap(), 8.0);
        // Enumerate outcomes: j accepted then a rejection, or all k accepted.
        let (p, k) = (0.8f64, 7usize);
        let mut brute = 0.0;
        for j in 0..k {
            brute += (j + 1) as f64 * p.powi(j as i32) * (1.0 - p);
        }
        brute += (k + 1) as f64 * p.powi(k as i32);
        let v = expected_tokens_per_seq(p, k).unwrap();
        assert!((v - brute).abs() < 1e-12);
        assert!((v - 4.16114).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn naive_batch_penalty_decreases_in_b(p in 0.1f64..0.99, b in 1usize..12) {
            prop_assert!(expected_tokens_naive_batch(p, b + 1).unwrap() < expected_tokens_naive_batch(p, b).unwrap());
        }

        #[test]
        fn utilization_is_a_fraction(b in 1usize..64, ctx in 1usize..4096, k in 1usize..16) {
            let lens = vec![ctx; b];
            for strategy in [AttentionStrategy::Pad, AttentionStrategy::Split] {
                let c = cost_speculative_step(&a100(), &ModelGeometry::main_7_8b(), Some(&ModelGeometry::draft_310m()), &lens, k, strategy);
                prop_assert!(c.utilization > 0.0 && c.utilization <= 1.0);
            }
        }
    }

    #[test]
    fn geometry_presets_have_the_advertised_size() {
        let main = ModelGeometry::main_7_8b().param_count();
        assert!((7.7e9..7.95e9).contains(&main), "{main}");
        let draft = ModelGeometry::draft_310m().param_count();
        assert!((2.9e8..3.2e8).contains(&draft), "{draft}");
    }

    #[test]
    fn regular_decoding_is_memory_bound_and_nearly_idle() {
        let g = ModelGeometry::main_7_8b();
        let one = cost_regular_step(&a100(), &g, &[128], AttentionStrategy::Split);
        assert!(one.utilization < 0.01, "{}", one.utilization);
        let two = cost_regular_step(&a100(), &g, &[128, 128], AttentionStrategy::Split);
        assert!(two.utilization > one.utilization);
        let memory = one.bytes / a100().memory_bandwidth;
        let launch = one.launches as f64 * a100().launch_overhead_s;
        assert!((one.time_s - memory - launch).abs() < 1e-12);
    }

    #[test]
    fn one_draft_token_without_draft_cost_is_a_double_regular_step() {
        let g = ModelGeometry::main_7_8b();
        let spec = cost_speculative_step(&a100(), &g, None, &[64, 64], 1, AttentionStrategy::Split);
        let seqs = [(2, 64), (2, 64)];
        assert_eq!(spec, cost_forward(&a100(), &g, &seqs, AttentionStrategy::Split));
        let reg = cost_regular_step(&a100(), &g, &[64, 64], AttentionStrategy::Split);
        assert!(spec.flops > 1.99 * reg.flops);
        assert_eq!(spec.bytes, reg.bytes);
    }

    #[test]
    fn equal_lengths_differ_only_in_launches() {
        let (m, d) = (ModelGeometry::main_7_8b(), ModelGeometry::draft_310m());
        let lens = [200; 8];
        let pad = cost_speculative_step(&a100(), &m, Some(&d), &lens, 5, AttentionStrategy::Pad);
        let split = cost_speculative_step(&a100(), &m, Some(&d), &lens, 5, AttentionStrategy::Split);
        assert_eq!(pad.flops, split.flops);
        assert_eq!(pad.bytes, split.bytes);
        let launch_gap = (split.launches - pad.launches) as f64 * a100().launch_overhead_s;
        assert!((split.time_s - pad.time_s - launch_gap).abs() < 1e-12);
        let ragged = [10, 400, 30, 200, 5, 60, 90, 300];
        let pad = cost_speculative_step(&a100(), &m, Some(&d), &ragged, 5, AttentionStrategy::Pad);
        let split = cost_speculative_step(&a100(), &m, Some(&d), &ragged, 5, AttentionStrategy::Split);
        assert_eq!(pad.flops, split.flops);
    }

    #[test]
    fn latency_order_statistics() {
        let s = LatencyStats::from_finishes(&[(2.0, 10), (1.0, 10), (4.0, 10)]);
        assert_eq!(s.first_s, 0.1);
        assert_eq!(s.last_s, 0.4);
        assert!((s.all_s - 7.0 / 30.0).abs() < 1e-12);
        let single = LatencyStats::from_finishes(&[(3.0, 6)]);
        assert_eq!(single.first_s, single.last_s);
        assert_eq!(single.all_s, single.first_s);
    }

    #[test]
    fn analytic_divergence_grows_with_batch() {
        let setup = SimSetup::default();
        let mut prev = -1.0;
        for b in [1, 2, 4, 8] {
            let r = simulate_run(
                &setup,
                SimSource::Analytic {
                    model: AcceptanceModel { p: 0.8, b, k: 7 },
                    adaptive: Some(DraftLengthParams::default()),
                    trials: 32,
                    seed: 1,
                },
            )
            .unwrap();
            let l = r.latency;
            assert!(l.first_s <= l.all_s && l.all_s <= l.last_s);
            if b == 1 {
                assert_eq!(l.first_s, l.last_s);
            }
            assert!(l.divergence_s() > prev, "b={b}");
            prev = l.divergence_s();
        }
    }

    #[test]
    fn regular_simulation_has_no_divergence() {
        let r = simulate_run(&SimSetup::default(), SimSource::Regular { b: 4 }).unwrap();
        assert_eq!(r.latency.first_s, r.latency.last_s);
        assert_eq!(r.steps, 128);
    }

    #[test]
    fn invalid_profile_rejected() {
        let setup = SimSetup {
            profile: HardwareProfile {
                peak_flops: 0.0,
                ..a100()
            },
            ..SimSetup::default()
        };
        assert!(simulate_run(&setup, SimSource::Regular { b: 1 }).is_err());
    }
}
