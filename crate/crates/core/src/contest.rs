//! Tullock contest with high types, low types and neutral outsiders.
//!
//! Every contestant's submission is rated by every outsider and every
//! contestant on the unit interval. A sincere rating equals the submission's
//! quality; sabotage rates a rival at 0; self-promotion rates one's own
//! submission at 1. A submission's value is the sum of the ratings it
//! receives and the win probability is its share of the total value of all
//! submissions.

use std::fmt;

use crate::error::ModelError;
use crate::scalar::Scalar;

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentType {
    High,
    Low,
}

impl AgentType {
    pub const BOTH: [AgentType; 2] = [AgentType::High, AgentType::Low];

    pub fn other(self) -> AgentType {
        match self {
            AgentType::High => AgentType::Low,
            AgentType::Low => AgentType::High,
        }
    }
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentType::High => f.write_str("high"),
            AgentType::Low => f.write_str("low"),
        }
    }
}

/// Model primitives. The rating interval is fixed to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContestConfig<T> {
    outsiders: usize,
    lows: usize,
    highs: usize,
    quality_low: T,
    quality_high: T,
    prize: T,
    sabotage_cost: T,
    promotion_cost: T,
}

impl<T: Scalar> ContestConfig<T> {
    /// Validates `0 < quality_low < quality_high < 1`, `1 <= highs < lows <
    /// outsiders` and non-negative prize and costs.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        outsiders: usize,
        lows: usize,
        highs: usize,
        quality_low: T,
        quality_high: T,
        prize: T,
        sabotage_cost: T,
        promotion_cost: T,
    ) -> Result<Self> {
        if highs == 0 {
            return Err(ModelError::InvalidConfig("at least one high type is required".into()));
        }
        if !(highs < lows && lows < outsiders) {
            return Err(ModelError::InvalidConfig(format!(
                "counts must satisfy highs < lows < outsiders, got h={highs}, l={lows}, n={outsiders}"
            )));
        }
        let zero = T::zero();
        let one = T::one();
        if !(zero < quality_low && quality_low < quality_high && quality_high < one) {
            return Err(ModelError::InvalidConfig(format!(
                "qualities must satisfy 0 < b_l < b_h < 1, got b_l={quality_low}, b_h={quality_high}"
            )));
        }
        if prize < zero || sabotage_cost < zero || promotion_cost < zero {
            return Err(ModelError::InvalidConfig("prize and costs must be non-negative".into()));
        }
        Ok(Self {
            outsiders,
            lows,
            highs,
            quality_low,
            quality_high,
            prize,
            sabotage_cost,
            promotion_cost,
        })
    }

    pub fn outsiders(&self) -> usize {
        self.outsiders
    }

    pub fn lows(&self) -> usize {
        self.lows
    }

    pub fn highs(&self) -> usize {
        self.highs
    }

    pub fn count(&self, who: AgentType) -> usize {
        match who {
            AgentType::High => self.highs,
            AgentType::Low => self.lows,
        }
    }

    /// Raters of every submission: outsiders plus all contestants.
    pub fn raters(&self) -> usize {
        self.outsiders + self.lows + self.highs
    }

    pub fn quality(&self, who: AgentType) -> T {
        match who {
            AgentType::High => self.quality_high,
            AgentType::Low => self.quality_low,
        }
    }

    pub fn prize(&self) -> T {
        self.prize
    }

    pub fn sabotage_cost(&self) -> T {
        self.sabotage_cost
    }

    pub fn promotion_cost(&self) -> T {
        self.promotion_cost
    }

    pub fn with_costs(mut self, sabotage_cost: T, promotion_cost: T) -> Result<Self> {
        if sabotage_cost < T::zero() || promotion_cost < T::zero() {
            return Err(ModelError::InvalidConfig("costs must be non-negative".into()));
        }
        self.sabotage_cost = sabotage_cost;
        self.promotion_cost = promotion_cost;
        Ok(self)
    }

    pub fn with_prize(mut self, prize: T) -> Result<Self> {
        if prize < T::zero() {
            return Err(ModelError::InvalidConfig("prize must be non-negative".into()));
        }
        self.prize = prize;
        Ok(self)
    }

    /// Number of submissions of type `target` an agent of type `attacker`
    /// can sabotage (everyone of that type except itself).
    pub fn max_targets(&self, attacker: AgentType, target: AgentType) -> usize {
        let n = self.count(target);
        if attacker == target {
            n - 1
        } else {
            n
        }
    }

    /// Rating lost by a submission of type `who` when it is sabotaged.
    pub fn sabotage_damage(&self, who: AgentType) -> T {
        self.quality(who)
    }

    /// Rating gained by a submission of type `who` when its author promotes it.
    pub fn promotion_lift(&self, who: AgentType) -> T {
        T::one() - self.quality(who)
    }
}

/// Strategy equivalence class of one type: how many high-type and low-type
/// rivals it sabotages and whether it promotes its own submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TypeStrategy {
    pub sabotage_high: usize,
    pub sabotage_low: usize,
    pub promote: bool,
}

impl TypeStrategy {
    pub const SINCERE: TypeStrategy = TypeStrategy { sabotage_high: 0, sabotage_low: 0, promote: false };

    /// All-or-none strategy for an agent of type `who`.
    pub fn class<T: Scalar>(
        config: &ContestConfig<T>,
        who: AgentType,
        sabotage_high: bool,
        sabotage_low: bool,
        promote: bool,
    ) -> Self {
        let pick = |on: bool, target| if on { config.max_targets(who, target) } else { 0 };
        TypeStrategy {
            sabotage_high: pick(sabotage_high, AgentType::High),
            sabotage_low: pick(sabotage_low, AgentType::Low),
            promote,
        }
    }

    pub fn sabotage_count(&self, target: AgentType) -> usize {
        match target {
            AgentType::High => self.sabotage_high,
            AgentType::Low => self.sabotage_low,
        }
    }

    pub fn acts(&self) -> usize {
        self.sabotage_high + self.sabotage_low
    }

    /// Rejects counts other than none or all feasible targets.
    pub fn validate<T: Scalar>(&self, config: &ContestConfig<T>, who: AgentType) -> Result<()> {
        for target in AgentType::BOTH {
            let k = self.sabotage_count(target);
            let max = config.max_targets(who, target);
            if k != 0 && k != max {
                return Err(ModelError::InvalidProfile(format!(
                    "{who} type sabotages {k} {target} types; only 0 or {max} allowed"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for TypeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.sabotage_high, self.sabotage_low, u8::from(self.promote))
    }
}

/// Symmetric profile: every agent of a type plays the same class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StrategyProfile {
    pub high: TypeStrategy,
    pub low: TypeStrategy,
}

impl StrategyProfile {
    pub fn new<T: Scalar>(config: &ContestConfig<T>, high: TypeStrategy, low: TypeStrategy) -> Result<Self> {
        high.validate(config, AgentType::High)?;
        low.validate(config, AgentType::Low)?;
        Ok(Self { high, low })
    }

    pub fn sincere() -> Self {
        Self { high: TypeStrategy::SINCERE, low: TypeStrategy::SINCERE }
    }

    /// Builds a profile from `(sabotage highs, sabotage lows, promote)` flags.
    pub fn from_classes<T: Scalar>(
        config: &ContestConfig<T>,
        high: (bool, bool, bool),
        low: (bool, bool, bool),
    ) -> Self {
        Self {
            high: TypeStrategy::class(config, AgentType::High, high.0, high.1, high.2),
            low: TypeStrategy::class(config, AgentType::Low, low.0, low.1, low.2),
        }
    }

    pub fn strategy(&self, who: AgentType) -> TypeStrategy {
        match who {
            AgentType::High => self.high,
            AgentType::Low => self.low,
        }
    }

    pub fn with_strategy(mut self, who: AgentType, strategy: TypeStrategy) -> Self {
        match who {
            AgentType::High => self.high = strategy,
            AgentType::Low => self.low = strategy,
        }
        self
    }
}

/// Aggregate ratings of a representative high and low type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentValues<T> {
    high: T,
    low: T,
    total: T,
}

impl<T: Scalar> AgentValues<T> {
    /// `total` is derived as `h·high + l·low`. Requires `0 < low < high`.
    pub fn new<U: Scalar>(config: &ContestConfig<U>, high: T, low: T) -> Result<Self> {
        if !(high > T::zero() && low > T::zero()) {
            return Err(ModelError::InvalidConfig(format!("values must be positive, got v_h={high}, v_l={low}")));
        }
        if !(low < high) {
            return Err(ModelError::InvalidConfig(format!(
                "strategic behaviour reverses the type order (v_l={low} >= v_h={high})"
            )));
        }
        let total = T::from_count(config.highs()) * high + T::from_count(config.lows()) * low;
        Ok(Self { high, low, total })
    }

    pub fn high(&self) -> T {
        self.high
    }

    pub fn low(&self) -> T {
        self.low
    }

    pub fn value(&self, who: AgentType) -> T {
        match who {
            AgentType::High => self.high,
            AgentType::Low => self.low,
        }
    }

    /// Total contest output `S`.
    pub fn total(&self) -> T {
        self.total
    }
}

/// Number of saboteurs hitting each submission of type `target`.
fn saboteurs_of<T: Scalar>(config: &ContestConfig<T>, profile: &StrategyProfile, target: AgentType) -> usize {
    AgentType::BOTH
        .iter()
        .filter(|&&attacker| profile.strategy(attacker).sabotage_count(target) > 0)
        .map(|&attacker| config.max_targets(target, attacker))
        .sum()
}

fn value_of<T: Scalar>(config: &ContestConfig<T>, profile: &StrategyProfile, who: AgentType) -> T {
    let sincere = config.quality(who) * T::from_count(config.raters());
    let damage = config.sabotage_damage(who) * T::from_count(saboteurs_of(config, profile, who));
    let lift = if profile.strategy(who).promote { config.promotion_lift(who) } else { T::zero() };
    sincere - damage + lift
}

/// Values of both types under a symmetric all-or-none profile.
pub fn agent_values<T: Scalar>(config: &ContestConfig<T>, profile: &StrategyProfile) -> Result<AgentValues<T>> {
    profile.high.validate(config, AgentType::High)?;
    profile.low.validate(config, AgentType::Low)?;
    AgentValues::new(
        config,
        value_of(config, profile, AgentType::High),
        value_of(config, profile, AgentType::Low),
    )
}

/// Tullock success probability `v / S`.
pub fn tullock_probability<T: Scalar>(values: &AgentValues<T>, who: AgentType) -> Result<T> {
    if values.total() == T::zero() {
        return Err(ModelError::DegenerateContest);
    }
    Ok(values.value(who) / values.total())
}

/// `M·p − c_s·(sabotage acts) − c_p·[promotes]` for a representative agent.
pub fn expected_utility<T: Scalar>(config: &ContestConfig<T>, profile: &StrategyProfile, who: AgentType) -> Result<T> {
    let values = agent_values(config, profile)?;
    let p = tullock_probability(&values, who)?;
    Ok(utility_from(config, p, &profile.strategy(who), config.sabotage_cost(), config.promotion_cost()))
}

pub(crate) fn utility_from<T: Scalar>(config: &ContestConfig<T>, p: T, strategy: &TypeStrategy, c_s: T, c_p: T) -> T {
    let promo = if strategy.promote { c_p } else { T::zero() };
    config.prize() * p - c_s * T::from_count(strategy.acts()) - promo
}

/// Performance gap `g = (b_h / b_l)·(n + 1) / (n + l + h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport<T> {
    pub gap: T,
    pub satisfied: bool,
    quality_low: T,
    quality_high: T,
}

impl<T: Scalar> GapReport<T> {
    pub fn sabotage_damage(&self, who: AgentType) -> T {
        match who {
            AgentType::High => self.quality_high,
            AgentType::Low => self.quality_low,
        }
    }

    pub fn promotion_lift(&self, who: AgentType) -> T {
        T::one() - self.sabotage_damage(who)
    }
}

pub fn performance_gap<T: Scalar>(config: &ContestConfig<T>) -> GapReport<T> {
    let ratio = config.quality(AgentType::High) / config.quality(AgentType::Low);
    let gap = ratio * T::from_count(config.outsiders() + 1) / T::from_count(config.raters());
    GapReport {
        gap,
        satisfied: gap >= T::one(),
        quality_low: config.quality(AgentType::Low),
        quality_high: config.quality(AgentType::High),
    }
}

/// Win-probability gain of a non-promoting agent that starts promoting:
/// `Δ(S − v) / (S(S + Δ))`.
pub fn self_promotion_gain<T: Scalar>(config: &ContestConfig<T>, values: &AgentValues<T>, who: AgentType) -> T {
    let lift = config.promotion_lift(who);
    let s = values.total();
    lift * (s - values.value(who)) / (s * (s + lift))
}

/// Win-probability loss of a promoting agent that stops promoting:
/// `Δ(S − v) / (S(S − Δ))`.
///
/// This is the promotion gain seen from a baseline where only this one agent
/// has stopped promoting; [`self_promotion_gain`] is the same quantity seen
/// from a baseline where the whole type does not promote.
pub fn self_promotion_retention<T: Scalar>(config: &ContestConfig<T>, values: &AgentValues<T>, who: AgentType) -> T {
    let lift = config.promotion_lift(who);
    let s = values.total();
    lift * (s - values.value(who)) / (s * (s - lift))
}

/// Gain from sabotaging `count` targets of type `target` starting from a
/// baseline in which the attacker sabotages none of them:
/// `v/(S − count·b) − v/S`.
pub fn cumulative_sabotage_gain<T: Scalar>(
    config: &ContestConfig<T>,
    values: &AgentValues<T>,
    attacker: AgentType,
    target: AgentType,
    count: usize,
) -> Result<T> {
    let max = config.max_targets(attacker, target);
    if count > max {
        return Err(ModelError::InvalidCount { requested: count, max });
    }
    let v = values.value(attacker);
    let s = values.total();
    let reduced = s - T::from_count(count) * config.sabotage_damage(target);
    Ok(v / reduced - v / s)
}

/// Gain from sabotaging one more target of type `target` when
/// `already_sabotaged` of them are already hit by this attacker.
///
/// `values` is the baseline in which the attacker sabotages none of that type.
pub fn marginal_sabotage_gain<T: Scalar>(
    config: &ContestConfig<T>,
    values: &AgentValues<T>,
    attacker: AgentType,
    target: AgentType,
    already_sabotaged: usize,
) -> Result<T> {
    let max = config.max_targets(attacker, target);
    if already_sabotaged >= max {
        return Err(ModelError::InvalidCount { requested: already_sabotaged + 1, max });
    }
    let v = values.value(attacker);
    let s = values.total();
    let b = config.sabotage_damage(target);
    let before = s - T::from_count(already_sabotaged) * b;
    let after = before - b;
    Ok(v * b / (before * after))
}

/// Marginal gain of the last feasible act of sabotage against `target`.
pub fn last_unit_sabotage_gain<T: Scalar>(
    config: &ContestConfig<T>,
    values: &AgentValues<T>,
    attacker: AgentType,
    target: AgentType,
) -> Option<T> {
    let max = config.max_targets(attacker, target);
    if max == 0 {
        return None;
    }
    marginal_sabotage_gain(config, values, attacker, target, max - 1).ok()
}

/// Per-act transition thresholds in units of win probability (multiply by
/// the prize for currency).
///
/// Each threshold is the marginal gain of the last act of sabotage,
/// evaluated on the values of the profile from which the transition starts.
/// Every baseline has all agents promoting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSet<T> {
    /// High types start sabotaging all other high types. Baseline: everyone
    /// promotes, nobody sabotages. `None` with a single high type.
    pub high_sab_high: Option<T>,
    /// Low types start sabotaging high types. Baseline: high types sabotage
    /// each other.
    pub low_sab_high: T,
    /// High types start sabotaging low types. Baseline: high and low types
    /// both sabotage all high types.
    pub high_sab_low: T,
    /// Low types start sabotaging each other. Baseline: high types sabotage
    /// everyone, low types sabotage high types.
    pub low_sab_low: Option<T>,
    /// Alternate high-sab-low threshold with low types not sabotaging.
    pub alt_high_sab_low: T,
    /// Alternate low-sab-high threshold with high types already sabotaging
    /// low types.
    pub alt_low_sab_high: T,
}

impl<T: Scalar> BoundSet<T> {
    pub fn in_currency(&self, prize: T) -> BoundSet<T> {
        BoundSet {
            high_sab_high: self.high_sab_high.map(|b| b * prize),
            low_sab_high: self.low_sab_high * prize,
            high_sab_low: self.high_sab_low * prize,
            low_sab_low: self.low_sab_low.map(|b| b * prize),
            alt_high_sab_low: self.alt_high_sab_low * prize,
            alt_low_sab_high: self.alt_low_sab_high * prize,
        }
    }
}

pub fn sabotage_bounds<T: Scalar>(config: &ContestConfig<T>) -> Result<BoundSet<T>> {
    let gap = performance_gap(config);
    if !gap.satisfied {
        return Err(ModelError::GapViolated { gap: gap.gap.to_f64_lossy() });
    }
    use AgentType::{High, Low};
    let at = |high: (bool, bool, bool), low: (bool, bool, bool)| {
        agent_values(config, &StrategyProfile::from_classes(config, high, low))
    };
    let all_promote = at((false, false, true), (false, false, true))?;
    let highs_hit_highs = at((true, false, true), (false, false, true))?;
    let everyone_hits_highs = at((true, false, true), (true, false, true))?;
    let highs_hit_all = at((true, true, true), (false, false, true))?;
    let all_but_low_low = at((true, true, true), (true, false, true))?;

    let need = |v: Option<T>| v.ok_or_else(|| ModelError::InvalidCount { requested: 1, max: 0 });
    Ok(BoundSet {
        high_sab_high: last_unit_sabotage_gain(config, &all_promote, High, High),
        low_sab_high: need(last_unit_sabotage_gain(config, &highs_hit_highs, Low, High))?,
        high_sab_low: need(last_unit_sabotage_gain(config, &everyone_hits_highs, High, Low))?,
        low_sab_low: last_unit_sabotage_gain(config, &all_but_low_low, Low, Low),
        alt_high_sab_low: need(last_unit_sabotage_gain(config, &highs_hit_highs, High, Low))?,
        alt_low_sab_high: need(last_unit_sabotage_gain(config, &highs_hit_all, Low, High))?,
    })
}

/// High-sab-high threshold on an arbitrary baseline; used to compare the
/// incentive with and without promotion.
pub fn high_sab_high_bound<T: Scalar>(config: &ContestConfig<T>, values: &AgentValues<T>) -> Option<T> {
    last_unit_sabotage_gain(config, values, AgentType::High, AgentType::High)
}
