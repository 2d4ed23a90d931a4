//! Five-signal composite scoring.
//!
//! `S = w_sem·φ_sem + w_bm25·φ_bm25 + w_decay·φ_decay + w_cw·φ_cw + w_tier·(μ − 1)`
//!
//! φ_sem is a reserved slot and is always 0. The tier term sits outside the
//! dot product as an additive bonus.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Sem,
    Bm25,
    Decay,
    Cw,
    Tier,
}

impl Signal {
    pub const ALL: [Signal; 5] = [
        Signal::Sem,
        Signal::Bm25,
        Signal::Decay,
        Signal::Cw,
        Signal::Tier,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Signal::Sem => "sem",
            Signal::Bm25 => "bm25",
            Signal::Decay => "decay",
            Signal::Cw => "cw",
            Signal::Tier => "tier",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sem" => Ok(Signal::Sem),
            "bm25" => Ok(Signal::Bm25),
            "decay" => Ok(Signal::Decay),
            "cw" => Ok(Signal::Cw),
            "tier" => Ok(Signal::Tier),
            other => Err(Error::validation(format!("unknown signal {other:?}"))),
        }
    }
}

/// Retrieval weights on the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightFields", into = "WeightFields")]
pub struct WeightVector([f64; 5]);

#[derive(Serialize, Deserialize)]
struct WeightFields {
    w_sem: f64,
    w_bm25: f64,
    w_decay: f64,
    w_cw: f64,
    w_tier: f64,
}

impl TryFrom<WeightFields> for WeightVector {
    type Error = Error;

    fn try_from(w: WeightFields) -> Result<Self> {
        WeightVector::new([w.w_sem, w.w_bm25, w.w_decay, w.w_cw, w.w_tier])
    }
}

impl From<WeightVector> for WeightFields {
    fn from(w: WeightVector) -> Self {
        let [w_sem, w_bm25, w_decay, w_cw, w_tier] = w.0;
        WeightFields {
            w_sem,
            w_bm25,
            w_decay,
            w_cw,
            w_tier,
        }
    }
}

impl Default for WeightVector {
    fn default() -> Self {
        WeightVector([0.0, 0.35, 0.25, 0.25, 0.15])
    }
}

impl WeightVector {
    /// Components in `[sem, bm25, decay, cw, tier]` order.
    pub fn new(components: [f64; 5]) -> Result<Self> {
        if components.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation(format!(
                "weights must be finite and nonnegative: {components:?}"
            )));
        }
        let sum: f64 = components.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::validation(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        Ok(WeightVector(components))
    }

    /// Weights used by the equal-weight fusion probe.
    pub fn equal_fusion() -> Self {
        WeightVector([0.0, 0.25, 0.25, 0.25, 0.25])
    }

    pub fn bm25_only() -> Self {
        WeightVector([0.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn as_array(&self) -> [f64; 5] {
        self.0
    }

    pub fn get(&self, signal: Signal) -> f64 {
        self.0[signal.index()]
    }

    pub fn sem(&self) -> f64 {
        self.0[0]
    }
    pub fn bm25(&self) -> f64 {
        self.0[1]
    }
    pub fn decay(&self) -> f64 {
        self.0[2]
    }
    pub fn cw(&self) -> f64 {
        self.0[3]
    }
    pub fn tier(&self) -> f64 {
        self.0[4]
    }

    /// Zeroes one signal and rescales the rest to sum to 1.
    pub fn without(&self, signal: Signal) -> Result<Self> {
        let mut w = self.0;
        w[signal.index()] = 0.0;
        let rest: f64 = w.iter().sum();
        if rest <= 0.0 {
            return Err(Error::validation(format!(
                "removing {signal} leaves no weight to renormalise"
            )));
        }
        for x in &mut w {
            *x /= rest;
        }
        Ok(WeightVector(w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayConfig {
    /// Per-day decay rate.
    pub lambda: f64,
    /// Raw BM25 score strictly above which the decay penalty is bypassed.
    pub bypass_threshold: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            bypass_threshold: 2.0,
        }
    }
}

impl DecayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::validation(format!(
                "decay lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn half_life_days(&self) -> f64 {
        std::f64::consts::LN_2 / self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    #[default]
    Episodic,
    Semantic,
    Procedural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TierConfig {
    pub episodic: f64,
    pub semantic: f64,
    pub procedural: f64,
}

impl Default for TierConfig {
    fn default() -> Self {
        Self {
            episodic: 1.0,
            semantic: 1.2,
            procedural: 1.4,
        }
    }
}

impl TierConfig {
    pub fn multiplier(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Episodic => self.episodic,
            Tier::Semantic => self.semantic,
            Tier::Procedural => self.procedural,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.episodic, self.semantic, self.procedural]
            .iter()
            .any(|m| !(*m >= 1.0))
        {
            return Err(Error::validation("tier multipliers must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BypassReason {
    #[default]
    None,
    Bm25Threshold,
    SemanticScope,
}

/// How the BM25 signal is rescaled over a candidate pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormVariant {
    #[default]
    Raw,
    Log1p,
    #[serde(rename = "minmax")]
    MinMax,
    Zscore,
    /// z-scored BM25 with equal weights over the four active signals.
    ZscoreEqualFusion,
}

impl NormVariant {
    pub const ALL: [NormVariant; 5] = [
        NormVariant::Raw,
        NormVariant::Log1p,
        NormVariant::MinMax,
        NormVariant::Zscore,
        NormVariant::ZscoreEqualFusion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NormVariant::Raw => "raw",
            NormVariant::Log1p => "log1p",
            NormVariant::MinMax => "minmax",
            NormVariant::Zscore => "zscore",
            NormVariant::ZscoreEqualFusion => "zscore_equal_fusion",
        }
    }

    /// The weights actually applied when scoring under this variant.
    pub fn effective_weights(self, weights: WeightVector) -> WeightVector {
        match self {
            NormVariant::ZscoreEqualFusion => WeightVector::equal_fusion(),
            _ => weights,
        }
    }
}

impl fmt::Display for NormVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NormVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown normalisation variant {s:?}")))
    }
}

/// Per-candidate signal values and the resulting composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub phi_sem: f64,
    pub phi_bm25_raw: f64,
    /// BM25 signal after the pool normalisation.
    pub phi_bm25: f64,
    pub phi_decay: f64,
    pub phi_cw: f64,
    pub tier: Tier,
    pub tier_bonus: f64,
    pub composite: f64,
    pub bypass_applied: bool,
    pub bypass_reason: BypassReason,
}

pub fn decay_signal(age_days: f64, bypass: bool, cfg: &DecayConfig) -> Result<f64> {
    if !(age_days >= 0.0) {
        return Err(Error::validation(format!(
            "age must be nonnegative, got {age_days}"
        )));
    }
    if bypass {
        return Ok(1.0);
    }
    Ok((-cfg.lambda * age_days).exp())
}

pub fn evaluate_bypass(
    raw_bm25: f64,
    session_id: &str,
    semantic_scope: &HashSet<String>,
    cfg: &DecayConfig,
) -> (bool, BypassReason) {
    if raw_bm25 > cfg.bypass_threshold {
        (true, BypassReason::Bm25Threshold)
    } else if semantic_scope.contains(session_id) {
        (true, BypassReason::SemanticScope)
    } else {
        (false, BypassReason::None)
    }
}

/// Maps a cognitive weight in `[-1, 1]` onto `[0, 1]`.
pub fn cw_signal(cw: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&cw) {
        return Err(Error::validation(format!(
            "cognitive weight {cw} outside [-1, 1]"
        )));
    }
    Ok((cw + 1.0) / 2.0)
}

/// Element-wise rescaling of a candidate pool's BM25 scores.
///
/// Degenerate pools: a constant pool maps to 0.5 under min-max and to 0
/// under z-score. z-score uses the population standard deviation.
pub fn normalise_scores(raw: &[f64], variant: NormVariant) -> Result<Vec<f64>> {
    match variant {
        NormVariant::Raw => Ok(raw.to_vec()),
        NormVariant::Log1p => Ok(raw.iter().map(|x| x.ln_1p()).collect()),
        NormVariant::MinMax => {
            if raw.is_empty() {
                return Err(Error::validation("min-max over an empty pool"));
            }
            let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = max - min;
            if span == 0.0 {
                return Ok(vec![0.5; raw.len()]);
            }
            Ok(raw.iter().map(|x| (x - min) / span).collect())
        }
        NormVariant::Zscore | NormVariant::ZscoreEqualFusion => {
            if raw.is_empty() {
                return Err(Error::validation("z-score over an empty pool"));
            }
            let n = raw.len() as f64;
            let mean = raw.iter().sum::<f64>() / n;
            let var = raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd == 0.0 {
                return Ok(vec![0.0; raw.len()]);
            }
            Ok(raw.iter().map(|x| (x - mean) / sd).collect())
        }
    }
}

/// What the scorer needs to know about one candidate.
#[derive(Debug, Clone, Copy)]
pub struct SignalInputs<'a> {
    pub raw_bm25: f64,
    pub age_days: f64,
    pub cognitive_weight: f64,
    pub tier: Tier,
    pub session_id: &'a str,
}

/// Parameters shared by every candidate in one scoring call.
#[derive(Debug, Clone, Copy)]
pub struct ScoringContext<'a> {
    pub weights: WeightVector,
    pub tiers: &'a TierConfig,
    pub decay: &'a DecayConfig,
    pub semantic_scope: &'a HashSet<String>,
}

/// Scores one candidate given its (already normalised) BM25 signal.
pub fn composite_score(
    phi_bm25: f64,
    candidate: &SignalInputs<'_>,
    ctx: &ScoringContext<'_>,
) -> Result<ScoreBreakdown> {
    let (bypass, reason) = evaluate_bypass(
        candidate.raw_bm25,
        candidate.session_id,
        ctx.semantic_scope,
        ctx.decay,
    );
    let phi_decay = decay_signal(candidate.age_days, bypass, ctx.decay)?;
    let phi_cw = cw_signal(candidate.cognitive_weight)?;
    let phi_sem = 0.0;
    let w = ctx.weights;
    let tier_bonus = w.tier() * (ctx.tiers.multiplier(candidate.tier) - 1.0);
    let composite = w.sem() * phi_sem
        + w.bm25() * phi_bm25
        + w.decay() * phi_decay
        + w.cw() * phi_cw
        + tier_bonus;
    Ok(ScoreBreakdown {
        phi_sem,
        phi_bm25_raw: candidate.raw_bm25,
        phi_bm25,
        phi_decay,
        phi_cw,
        tier: candidate.tier,
        tier_bonus,
        composite,
        bypass_applied: bypass,
        bypass_reason: reason,
    })
}

/// Normalises BM25 over the pool under `variant`, then scores every candidate.
pub fn score_pool(
    candidates: &[SignalInputs<'_>],
    ctx: &ScoringContext<'_>,
    variant: NormVariant,
) -> Result<Vec<ScoreBreakdown>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let raw: Vec<f64> = candidates.iter().map(|c| c.raw_bm25).collect();
    let phi = normalise_scores(&raw, variant)?;
    let ctx = ScoringContext {
        weights: variant.effective_weights(ctx.weights),
        ..*ctx
    };
    candidates
        .iter()
        .zip(phi)
        .map(|(c, p)| composite_score(p, c, &ctx))
        .collect()
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;

    fn ctx_with<'a>(
        weights: WeightVector,
        tiers: &'a TierConfig,
        decay: &'a DecayConfig,
        scope: &'a HashSet<String>,
    ) -> ScoringContext<'a> {
        ScoringContext {
            weights,
            tiers,
            decay,
            semantic_scope: scope,
        }
    }

    #[test]
    fn default_weights() {
        assert_eq!(
            WeightVector::default().as_array(),
            [0.0, 0.35, 0.25, 0.25, 0.15]
        );
        assert!(WeightVector::new([0.0, 0.5, 0.5, 0.1, 0.0]).is_err());
        assert!(WeightVector::new([0.0, 1.1, -0.1, 0.0, 0.0]).is_err());
    }

    #[test]
    fn weight_removal_renormalises() {
        let w = WeightVector::default().without(Signal::Decay).unwrap();
        let expect = [0.0, 0.4667, 0.0, 0.3333, 0.2];
        for (a, b) in w.as_array().iter().zip(expect) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        assert!(WeightVector::bm25_only().without(Signal::Bm25).is_err());
    }

    #[test]
    fn weight_serde_uses_named_fields() {
        let json = serde_json::to_value(WeightVector::default()).unwrap();
        assert_eq!(json["w_bm25"], 0.35);
        let back: WeightVector = serde_json::from_value(json).unwrap();
        assert_eq!(back, WeightVector::default());
        let bad = serde_json::json!({"w_sem":0.0,"w_bm25":0.9,"w_decay":0.0,"w_cw":0.0,"w_tier":0.0});
        assert!(serde_json::from_value::<WeightVector>(bad).is_err());
    }

    #[test]
    fn decay_examples() {
        let cfg = DecayConfig::default();
        assert_eq!(decay_signal(0.0, false, &cfg).unwrap(), 1.0);
        assert!((decay_signal(14.0, false, &cfg).unwrap() - 0.4966).abs() < 1e-4);
        assert_eq!(decay_signal(90.0, true, &cfg).unwrap(), 1.0);
        assert!(decay_signal(-1.0, false, &cfg).is_err());
    }

    #[test]
    fn bypass_examples() {
        let cfg = DecayConfig::default();
        let scope: HashSet<String> = ["s1".to_string()].into();
        assert_eq!(
            evaluate_bypass(2.5, "s9", &scope, &cfg),
            (true, BypassReason::Bm25Threshold)
        );
        assert_eq!(
            evaluate_bypass(0.1, "s1", &scope, &cfg),
            (true, BypassReason::SemanticScope)
        );
        assert_eq!(
            evaluate_bypass(2.0, "s9", &scope, &cfg),
            (false, BypassReason::None)
        );
    }

    #[test]
    fn cw_signal_examples() {
        assert_eq!(cw_signal(-1.0).unwrap(), 0.0);
        assert_eq!(cw_signal(0.0).unwrap(), 0.5);
        assert_eq!(cw_signal(1.0).unwrap(), 1.0);
        assert!(cw_signal(1.01).is_err());
    }

    #[test]
    fn composite_examples() {
        let tiers = TierConfig::default();
        let decay = DecayConfig::default();
        let scope = HashSet::new();
        let ctx = ctx_with(WeightVector::default(), &tiers, &decay, &scope);
        let mut cand = SignalInputs {
            raw_bm25: 0.6931,
            age_days: 0.0,
            cognitive_weight: 0.0,
            tier: Tier::Episodic,
            session_id: "s",
        };
        let b = composite_score(cand.raw_bm25, &cand, &ctx).unwrap();
        assert!((b.composite - 0.6176).abs() < 1e-4);
        assert_eq!(b.phi_sem, 0.0);
        assert!(!b.bypass_applied);

        cand.tier = Tier::Semantic;
        let b = composite_score(cand.raw_bm25, &cand, &ctx).unwrap();
        assert!((b.composite - 0.6476).abs() < 1e-4);
        assert!((b.tier_bonus - 0.03).abs() < 1e-12);

        let ctx = ctx_with(WeightVector::bm25_only(), &tiers, &decay, &scope);
        let b = composite_score(cand.raw_bm25, &cand, &ctx).unwrap();
        assert_eq!(b.composite, 0.6931);
    }

    #[test]
    fn normalise_examples() {
        let mm = normalise_scores(&[0.0, 1.0, 3.0], NormVariant::MinMax).unwrap();
        assert_eq!(mm, vec![0.0, 1.0 / 3.0, 1.0]);
        assert_eq!(
            normalise_scores(&[2.0, 2.0, 2.0], NormVariant::Zscore).unwrap(),
            vec![0.0; 3]
        );
        assert_eq!(
            normalise_scores(&[2.0, 2.0], NormVariant::MinMax).unwrap(),
            vec![0.5; 2]
        );
        let l = normalise_scores(&[0.0, std::f64::consts::E - 1.0], NormVariant::Log1p).unwrap();
        assert_eq!(l[0], 0.0);
        assert!((l[1] - 1.0).abs() < 1e-12);
        assert!(normalise_scores(&[], NormVariant::MinMax).is_err());
        assert!(normalise_scores(&[], NormVariant::Zscore).is_err());
        // population sd: [1, 3] has sd 1
        assert_eq!(
            normalise_scores(&[1.0, 3.0], NormVariant::Zscore).unwrap(),
            vec![-1.0, 1.0]
        );
    }

    #[test]
    fn equal_fusion_overrides_weights() {
        let tiers = TierConfig::default();
        let decay = DecayConfig::default();
        let scope = HashSet::new();
        let ctx = ctx_with(WeightVector::default(), &tiers, &decay, &scope);
        let pool = [
            SignalInputs {
                raw_bm25: 1.0,
                age_days: 0.0,
                cognitive_weight: 0.0,
                tier: Tier::Episodic,
                session_id: "a",
            },
            SignalInputs {
                raw_bm25: 3.0,
                age_days: 0.0,
                cognitive_weight: 0.0,
                tier: Tier::Episodic,
                session_id: "b",
            },
        ];
        let out = score_pool(&pool, &ctx, NormVariant::ZscoreEqualFusion).unwrap();
        // z = [-1, 1]; 0.25*z + 0.25*1 + 0.25*0.5
        assert!((out[0].composite - 0.125).abs() < 1e-12);
        assert!((out[1].composite - 0.625).abs() < 1e-12);
    }

    #[test]
    fn variant_parse_round_trip() {
        for v in NormVariant::ALL {
            assert_eq!(v.as_str().parse::<NormVariant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
    }
}
