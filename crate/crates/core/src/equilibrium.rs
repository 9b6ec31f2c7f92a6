//! The seven symmetric pure-strategy equilibria and their cost regions.
//!
//! A region's cell is bounded by onset thresholds: the cost at which the
//! neighbouring, less strategic equilibrium stops being a best response as
//! the cost falls. Each threshold is exact for all-or-none deviations: the
//! average per-act gain of switching a whole target class, which (marginal
//! gains being increasing) is also the binding condition against partial
//! deviations.
//!
//! Neighbouring equilibria can coexist over a short cost range, and there can
//! be short ranges where no symmetric pure equilibrium exists. Cells always
//! tile the cost axis; [`Classification::nash_interval`] reports where a
//! profile is actually an equilibrium and [`Classification::gaps`] where a
//! cell's profile is not.

use std::fmt;

use rayon::prelude::*;

use crate::contest::{
    agent_values, expected_utility, AgentType, ContestConfig, Result, StrategyProfile, TypeStrategy,
};
use crate::contest::performance_gap;
use crate::error::ModelError;
use crate::rating_matrix::matrix_utility;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EquilibriumId {
    Ne1,
    Ne2,
    Ne3,
    Ne4,
    Ne5,
    Ne6,
    Ne7,
}

impl EquilibriumId {
    pub const ALL: [EquilibriumId; 7] = [
        EquilibriumId::Ne1,
        EquilibriumId::Ne2,
        EquilibriumId::Ne3,
        EquilibriumId::Ne4,
        EquilibriumId::Ne5,
        EquilibriumId::Ne6,
        EquilibriumId::Ne7,
    ];

    pub fn index(self) -> usize {
        self as usize + 1
    }

    /// `(sabotage highs, sabotage lows, promote)` for high and low types.
    pub fn classes(self) -> ((bool, bool, bool), (bool, bool, bool)) {
        use EquilibriumId::*;
        match self {
            Ne1 => ((false, false, false), (false, false, false)),
            Ne2 => ((false, false, false), (false, false, true)),
            Ne3 => ((false, false, true), (false, false, true)),
            Ne4 => ((true, false, true), (false, false, true)),
            Ne5 => ((true, false, true), (true, false, true)),
            Ne6 => ((true, true, true), (true, false, true)),
            Ne7 => ((true, true, true), (true, true, true)),
        }
    }

    pub fn profile<T: Scalar>(self, config: &ContestConfig<T>) -> StrategyProfile {
        let (high, low) = self.classes();
        StrategyProfile::from_classes(config, high, low)
    }

    pub fn label<T: Scalar>(self, config: &ContestConfig<T>) -> EquilibriumLabel {
        let profile = self.profile(config);
        EquilibriumLabel { id: self, high: profile.high, low: profile.low }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let digit = s.trim().trim_start_matches(|c: char| c.is_ascii_alphabetic()).parse::<usize>().ok()?;
        EquilibriumId::ALL.get(digit.checked_sub(1)?).copied()
    }
}

impl fmt::Display for EquilibriumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NE{}", self.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquilibriumLabel {
    pub id: EquilibriumId,
    pub high: TypeStrategy,
    pub low: TypeStrategy,
}

impl EquilibriumLabel {
    pub fn profile(&self) -> StrategyProfile {
        StrategyProfile { high: self.high, low: self.low }
    }
}

/// Cost interval `(low, high]`, with `high = None` meaning unbounded and a
/// zero lower end included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostInterval<T> {
    pub low: T,
    pub high: Option<T>,
}

impl<T: Scalar> CostInterval<T> {
    pub fn contains(&self, x: T) -> bool {
        let above = x > self.low || (self.low == T::zero() && x == T::zero());
        above && self.high.map_or(true, |h| x <= h)
    }

    pub fn is_empty(&self) -> bool {
        self.high.is_some_and(|h| h <= self.low)
    }
}

impl<T: Scalar> fmt::Display for CostInterval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.high {
            Some(h) => write!(f, "({}, {}]", self.low.to_f64_lossy(), h.to_f64_lossy()),
            None => write!(f, "({}, inf)", self.low.to_f64_lossy()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumRegion<T> {
    pub label: EquilibriumLabel,
    /// Sabotage-cost cell, in currency.
    pub c_s_interval: CostInterval<T>,
    /// Promotion-cost band, in currency.
    pub c_p_condition: CostInterval<T>,
}

/// Win-probability effect of one agent switching class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationEffect<T> {
    pub from: TypeStrategy,
    pub to: TypeStrategy,
    pub probability_change: T,
    pub extra_acts: i64,
    pub extra_promotion: i64,
}

impl<T: Scalar> DeviationEffect<T> {
    /// Utility gained by deviating at the given costs.
    pub fn gain(&self, prize: T, c_s: T, c_p: T) -> T {
        prize * self.probability_change - c_s * signed(self.extra_acts) - c_p * signed(self.extra_promotion)
    }
}

fn signed<T: Scalar>(k: i64) -> T {
    let m = T::from_count(k.unsigned_abs() as usize);
    if k < 0 {
        -m
    } else {
        m
    }
}

/// All-or-none classes available to an agent of type `who`.
pub fn class_strategies<T: Scalar>(config: &ContestConfig<T>, who: AgentType) -> Vec<TypeStrategy> {
    let mut out: Vec<TypeStrategy> = Vec::with_capacity(8);
    for sab_high in [false, true] {
        for sab_low in [false, true] {
            for promote in [false, true] {
                let s = TypeStrategy::class(config, who, sab_high, sab_low, promote);
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Closed-form effect of a single agent of type `who` switching from its
/// profile strategy to `to`: its own value only moves with its promotion,
/// total output moves with its promotion and every rating it withdraws.
pub fn deviation_effect<T: Scalar>(
    config: &ContestConfig<T>,
    profile: &StrategyProfile,
    who: AgentType,
    to: TypeStrategy,
) -> Result<DeviationEffect<T>> {
    to.validate(config, who)?;
    let values = agent_values(config, profile)?;
    let from = profile.strategy(who);
    let promo = i64::from(to.promote) - i64::from(from.promote);
    let lift = signed::<T>(promo) * config.promotion_lift(who);
    let own = values.value(who) + lift;
    let mut total = values.total() + lift;
    for target in AgentType::BOTH {
        let delta = to.sabotage_count(target) as i64 - from.sabotage_count(target) as i64;
        total = total - signed::<T>(delta) * config.sabotage_damage(target);
    }
    if total <= T::zero() {
        return Err(ModelError::DegenerateContest);
    }
    Ok(DeviationEffect {
        from,
        to,
        probability_change: own / total - values.value(who) / values.total(),
        extra_acts: to.acts() as i64 - from.acts() as i64,
        extra_promotion: promo,
    })
}

fn deviations<T: Scalar>(
    config: &ContestConfig<T>,
    profile: &StrategyProfile,
) -> Result<Vec<(AgentType, DeviationEffect<T>)>> {
    let mut out = Vec::new();
    for who in AgentType::BOTH {
        for to in class_strategies(config, who) {
            if to != profile.strategy(who) {
                out.push((who, deviation_effect(config, profile, who, to)?));
            }
        }
    }
    Ok(out)
}

/// Sabotage-cost threshold below which the profile breaks because someone
/// starts sabotaging more (promotion held fixed), with the binding deviation.
fn sabotage_onset<T: Scalar>(
    config: &ContestConfig<T>,
    profile: &StrategyProfile,
) -> Result<Option<(T, AgentType, TypeStrategy)>> {
    let mut best: Option<(T, AgentType, TypeStrategy)> = None;
    for (who, d) in deviations(config, profile)? {
        if d.extra_promotion != 0 || d.extra_acts <= 0 {
            continue;
        }
        let threshold = config.prize() * d.probability_change / signed::<T>(d.extra_acts);
        if best.as_ref().map_or(true, |(t, _, _)| threshold > *t) {
            best = Some((threshold, who, d.to));
        }
    }
    Ok(best)
}

/// Promotion-cost threshold below which the profile breaks because someone
/// starts promoting (sabotage held fixed), with the binding agent type.
fn promotion_onset<T: Scalar>(config: &ContestConfig<T>, profile: &StrategyProfile) -> Result<Option<(T, AgentType)>> {
    let mut best: Option<(T, AgentType)> = None;
    for (who, d) in deviations(config, profile)? {
        if d.extra_promotion != 1 || d.extra_acts != 0 {
            continue;
        }
        let threshold = config.prize() * d.probability_change;
        if best.as_ref().map_or(true, |(t, _)| threshold > *t) {
            best = Some((threshold, who));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification<T> {
    config: ContestConfig<T>,
    regions: Vec<EquilibriumRegion<T>>,
}

/// Partition the cost plane into the seven equilibrium regions, ordered
/// NE1..NE7 (descending costs).
pub fn classify<T: Scalar>(config: &ContestConfig<T>) -> Result<Classification<T>> {
    let gap = performance_gap(config);
    if !gap.satisfied {
        return Err(ModelError::GapViolated { gap: gap.gap.to_f64_lossy() });
    }
    if config.highs() < 2 {
        return Err(ModelError::InvalidConfig(
            "high types sabotaging each other needs at least two high types".into(),
        ));
    }
    use EquilibriumId::*;
    let profile = |id: EquilibriumId| id.profile(config);

    // c_p bands: low types start promoting first, then high types.
    let (low_promo, who1) = promotion_onset(config, &profile(Ne1))?.expect("promotion deviation exists");
    let (high_promo, who2) = promotion_onset(config, &profile(Ne2))?.expect("promotion deviation exists");
    if who1 != AgentType::Low || who2 != AgentType::High || !(low_promo > high_promo) {
        return Err(ModelError::BoundOrder(format!(
            "promotion onsets: {who1} at {}, {who2} at {}",
            low_promo.to_f64_lossy(),
            high_promo.to_f64_lossy()
        )));
    }

    // c_s onsets along NE3 -> NE7, each checked against the expected switch.
    let expected = [
        (Ne3, AgentType::High, Ne4),
        (Ne4, AgentType::Low, Ne5),
        (Ne5, AgentType::High, Ne6),
        (Ne6, AgentType::Low, Ne7),
    ];
    let mut onsets = Vec::with_capacity(4);
    for (from, who, to) in expected {
        let (t, binding, strategy) = sabotage_onset(config, &profile(from))?
            .ok_or_else(|| ModelError::BoundOrder(format!("{from} has no sabotage deviation")))?;
        let target = profile(to).strategy(who);
        if binding != who || strategy != target {
            return Err(ModelError::BoundOrder(format!(
                "leaving {from} as sabotage gets cheaper, the first profitable switch is {binding} -> {strategy}, not {who} -> {target}"
            )));
        }
        onsets.push(t);
    }
    if !onsets.windows(2).all(|w| w[0] > w[1]) {
        let shown: Vec<f64> = onsets.iter().map(|t| t.to_f64_lossy()).collect();
        return Err(ModelError::BoundOrder(format!("onsets NE4..NE7 not decreasing: {shown:?}")));
    }
    let ne1_onset = sabotage_onset(config, &profile(Ne1))?.map_or(T::zero(), |o| o.0);
    let ne2_onset = sabotage_onset(config, &profile(Ne2))?.map_or(T::zero(), |o| o.0);

    let zero = T::zero();
    let below_high_promo = CostInterval { low: zero, high: Some(high_promo) };
    let cell = |low: T, high: Option<T>| CostInterval { low, high };
    let regions = vec![
        (Ne1, cell(ne1_onset, None), cell(low_promo, None)),
        (Ne2, cell(ne2_onset, None), cell(high_promo, Some(low_promo))),
        (Ne3, cell(onsets[0], None), below_high_promo),
        (Ne4, cell(onsets[1], Some(onsets[0])), below_high_promo),
        (Ne5, cell(onsets[2], Some(onsets[1])), below_high_promo),
        (Ne6, cell(onsets[3], Some(onsets[2])), below_high_promo),
        (Ne7, cell(zero, Some(onsets[3])), below_high_promo),
    ]
    .into_iter()
    .map(|(id, c_s_interval, c_p_condition)| EquilibriumRegion { label: id.label(config), c_s_interval, c_p_condition })
    .collect();
    Ok(Classification { config: *config, regions })
}

impl<T: Scalar> Classification<T> {
    pub fn config(&self) -> &ContestConfig<T> {
        &self.config
    }

    pub fn regions(&self) -> &[EquilibriumRegion<T>] {
        &self.regions
    }

    pub fn region(&self, id: EquilibriumId) -> &EquilibriumRegion<T> {
        &self.regions[id.index() - 1]
    }

    /// Promotion cost below which high types promote (NE3 and below).
    pub fn high_promotion_threshold(&self) -> T {
        self.region(EquilibriumId::Ne2).c_p_condition.low
    }

    /// Promotion cost below which low types promote.
    pub fn low_promotion_threshold(&self) -> T {
        self.region(EquilibriumId::Ne1).c_p_condition.low
    }

    /// Label of the cell containing `(c_s, c_p)`, or `None` where the taxonomy
    /// has no symmetric state (sabotage without promotion).
    pub fn label_at(&self, c_s: T, c_p: T) -> Option<EquilibriumId> {
        self.regions
            .iter()
            .find(|r| r.c_s_interval.contains(c_s) && r.c_p_condition.contains(c_p))
            .map(|r| r.label.id)
    }

    /// Sabotage-cost boundaries between NE3..NE7 in ascending order.
    pub fn sabotage_boundaries(&self) -> Vec<T> {
        let mut out: Vec<T> = self.regions[3..].iter().map(|r| r.c_s_interval.high.expect("bounded cell")).collect();
        out.reverse();
        out
    }

    /// Exact range of `c_s` over which the profile of `id` is a Nash
    /// equilibrium at promotion cost `c_p`, against every class deviation.
    /// `None` when it is an equilibrium for no `c_s`.
    pub fn nash_interval(&self, id: EquilibriumId, c_p: T) -> Result<Option<CostInterval<T>>> {
        nash_interval(&self.config, &id.profile(&self.config), c_p)
    }

    /// Sub-ranges of each sabotage cell (NE3..NE7, at promotion cost `c_p`)
    /// where the cell's profile is not an equilibrium.
    pub fn gaps(&self, c_p: T) -> Result<Vec<(EquilibriumId, CostInterval<T>)>> {
        let mut out = Vec::new();
        for region in &self.regions[2..] {
            let cell = region.c_s_interval;
            match self.nash_interval(region.label.id, c_p)? {
                None => out.push((region.label.id, cell)),
                Some(nash) => {
                    if nash.low > cell.low {
                        out.push((region.label.id, CostInterval { low: cell.low, high: Some(nash.low) }));
                    }
                    if let (Some(nh), Some(ch)) = (nash.high, cell.high) {
                        if nh < ch {
                            out.push((region.label.id, CostInterval { low: nh, high: Some(ch) }));
                        }
                    } else if let (Some(nh), None) = (nash.high, cell.high) {
                        out.push((region.label.id, CostInterval { low: nh, high: None }));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Cost axis of a one-dimensional slice through the cost plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostAxis {
    Sabotage,
    Promotion,
}

impl CostAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            CostAxis::Sabotage => "c_s",
            CostAxis::Promotion => "c_p",
        }
    }
}

/// Exact Nash range in `c_s` for a profile at a fixed promotion cost. The
/// returned interval is closed; its `low` is inclusive here.
pub fn nash_interval<T: Scalar>(
    config: &ContestConfig<T>,
    profile: &StrategyProfile,
    c_p: T,
) -> Result<Option<CostInterval<T>>> {
    nash_range(config, profile, CostAxis::Sabotage, c_p)
}

/// Exact closed Nash range along `axis` with the other cost held at
/// `other`.
pub fn nash_range<T: Scalar>(
    config: &ContestConfig<T>,
    profile: &StrategyProfile,
    axis: CostAxis,
    other: T,
) -> Result<Option<CostInterval<T>>> {
    let mut low = T::zero();
    let mut high: Option<T> = None;
    for (_, d) in deviations(config, profile)? {
        // gain(x) = base - x * slope <= 0
        let (base, slope) = match axis {
            CostAxis::Sabotage => (d.gain(config.prize(), T::zero(), other), d.extra_acts),
            CostAxis::Promotion => (d.gain(config.prize(), other, T::zero()), d.extra_promotion),
        };
        match slope.cmp(&0) {
            std::cmp::Ordering::Equal => {
                if base.gt_tol(T::zero()) {
                    return Ok(None);
                }
            }
            std::cmp::Ordering::Greater => low = low.max_of(base / signed::<T>(slope)),
            std::cmp::Ordering::Less => {
                let cap = base / signed::<T>(slope);
                high = Some(high.map_or(cap, |h| h.min_of(cap)));
            }
        }
    }
    if high.is_some_and(|h| h < low) {
        return Ok(None);
    }
    Ok(Some(CostInterval { low, high }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NashVerdict<T> {
    Holds,
    Deviation { who: AgentType, from: TypeStrategy, to: TypeStrategy, gain: T },
}

impl<T> NashVerdict<T> {
    pub fn holds(&self) -> bool {
        matches!(self, NashVerdict::Holds)
    }
}

/// Direct check of the Nash property: every unilateral class deviation of
/// either type is evaluated on the full rating matrix with the deviator
/// treated asymmetrically. Returns the most profitable deviation if any.
pub fn verify_nash<T: Scalar>(
    config: &ContestConfig<T>,
    profile: &StrategyProfile,
    c_s: T,
    c_p: T,
) -> Result<NashVerdict<T>> {
    let slack = T::tolerance() * (config.prize() + T::one());
    let mut best: Option<(AgentType, TypeStrategy, T)> = None;
    for who in AgentType::BOTH {
        let current = profile.strategy(who);
        let stay = matrix_utility(config, profile, who, None, c_s, c_p)?;
        for to in class_strategies(config, who) {
            if to == current {
                continue;
            }
            let gain = matrix_utility(config, profile, who, Some(to), c_s, c_p)? - stay;
            if gain > slack && best.as_ref().map_or(true, |(_, _, g)| gain > *g) {
                best = Some((who, to, gain));
            }
        }
    }
    Ok(match best {
        None => NashVerdict::Holds,
        Some((who, to, gain)) => NashVerdict::Deviation { who, from: profile.strategy(who), to, gain },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Interior,
    /// Just below the low end of the Nash range.
    BelowRange,
    /// Just above the high end of the Nash range.
    AboveRange,
}

impl PointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PointKind::Interior => "interior",
            PointKind::BelowRange => "below",
            PointKind::AboveRange => "above",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationPoint<T> {
    pub id: EquilibriumId,
    pub axis: CostAxis,
    pub kind: PointKind,
    pub c_s: T,
    pub c_p: T,
    pub verdict: NashVerdict<T>,
}

impl<T> VerificationPoint<T> {
    /// Interior points must hold; points past a range end must not.
    pub fn passed(&self) -> bool {
        self.verdict.holds() == (self.kind == PointKind::Interior)
    }
}

fn overlap<T: Scalar>(a: CostInterval<T>, b: CostInterval<T>) -> Option<(T, Option<T>)> {
    let low = a.low.max_of(b.low);
    let high = match (a.high, b.high) {
        (Some(x), Some(y)) => Some(x.min_of(y)),
        (x, y) => x.or(y),
    };
    (high.map_or(true, |h| h > low)).then_some((low, high))
}

fn interior_points<T: Scalar>(low: T, high: Option<T>, count: usize) -> Vec<T> {
    let two = T::from_count(2);
    let high = high.unwrap_or(if low > T::zero() { low * two } else { T::one() });
    let steps = T::from_count(count + 1);
    (1..=count).map(|i| low + (high - low) * T::from_count(i) / steps).collect()
}

/// Checks every region against brute-force deviation on the rating matrix.
///
/// Each region is sliced through a centre point along its boundary axis
/// (promotion cost for NE1 and NE2, sabotage cost otherwise). `interior`
/// points are spread over the part of the cell where its profile is a Nash
/// equilibrium, and one point is placed a relative `step` beyond each finite
/// end of the exact Nash range, where a profitable deviation must exist.
pub fn verify_regions<T: Scalar>(
    classification: &Classification<T>,
    interior: usize,
    step: T,
) -> Result<Vec<VerificationPoint<T>>> {
    let config = classification.config();
    let two = T::from_count(2);
    let p_high = classification.high_promotion_threshold();
    let p_low = classification.low_promotion_threshold();
    let mut out = Vec::new();
    for region in classification.regions() {
        let id = region.label.id;
        let profile = id.profile(config);
        let (axis, other) = match id {
            EquilibriumId::Ne1 | EquilibriumId::Ne2 => {
                // any sabotage cost that keeps sabotage unprofitable at the band
                let c_p = if id == EquilibriumId::Ne1 { p_low * two } else { (p_high + p_low) / two };
                let floor = nash_range(config, &profile, CostAxis::Sabotage, c_p)?.map_or(T::one(), |r| r.low);
                let c_s = (floor.max_of(region.c_s_interval.low) + T::one()) * two;
                (CostAxis::Promotion, c_s)
            }
            _ => (CostAxis::Sabotage, p_high / two),
        };
        let cell = match axis {
            CostAxis::Sabotage => region.c_s_interval,
            CostAxis::Promotion => region.c_p_condition,
        };
        let at = |x: T| match axis {
            CostAxis::Sabotage => (x, other),
            CostAxis::Promotion => (other, x),
        };
        let mut check = |kind: PointKind, x: T| -> Result<()> {
            let (c_s, c_p) = at(x);
            let verdict = verify_nash(config, &profile, c_s, c_p)?;
            out.push(VerificationPoint { id, axis, kind, c_s, c_p, verdict });
            Ok(())
        };
        let Some(range) = nash_range(config, &profile, axis, other)? else {
            return Err(ModelError::BoundOrder(format!("{id} is not an equilibrium anywhere along {}", axis.as_str())));
        };
        let (low, high) = overlap(range, cell)
            .ok_or_else(|| ModelError::BoundOrder(format!("{id} is not an equilibrium inside its own cell")))?;
        for x in interior_points(low, high, interior) {
            check(PointKind::Interior, x)?;
        }
        if range.low > T::zero() {
            check(PointKind::BelowRange, range.low * (T::one() - step))?;
        }
        if let Some(h) = range.high {
            check(PointKind::AboveRange, h * (T::one() + step))?;
        }
    }
    Ok(out)
}

/// How the promotion cost moves along a sabotage-cost sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PromotionCost<T> {
    Fixed(T),
    /// Promotion costs the same as one act of sabotage.
    SameAsSabotage,
}

impl<T: Scalar> PromotionCost<T> {
    pub fn at(&self, c_s: T) -> T {
        match self {
            PromotionCost::Fixed(c) => *c,
            PromotionCost::SameAsSabotage => c_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow<T> {
    pub c_s: T,
    pub c_p: T,
    pub label: Option<EquilibriumId>,
    pub utility_high: Option<T>,
    pub utility_low: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T> {
    pub rows: Vec<SweepRow<T>>,
    pub promotion_cost: PromotionCost<T>,
}

impl<T: Scalar> SweepResult<T> {
    /// Maximal runs of identical labels as `(label, first c_s, last c_s)`.
    pub fn segments(&self) -> Vec<(Option<EquilibriumId>, T, T)> {
        let mut out: Vec<(Option<EquilibriumId>, T, T)> = Vec::new();
        for row in &self.rows {
            match out.last_mut() {
                Some(last) if last.0 == row.label => last.2 = row.c_s,
                _ => out.push((row.label, row.c_s, row.c_s)),
            }
        }
        out
    }
}

/// Equilibrium label and both types' expected utilities at each grid point.
pub fn sweep_costs<T: Scalar>(
    config: &ContestConfig<T>,
    c_s_grid: &[T],
    promotion_cost: PromotionCost<T>,
) -> Result<SweepResult<T>> {
    if !c_s_grid.windows(2).all(|w| w[0] <= w[1]) {
        return Err(ModelError::InvalidConfig("sweep grid must be sorted ascending".into()));
    }
    let classification = classify(config)?;
    let rows = c_s_grid
        .par_iter()
        .map(|&c_s| {
            let c_p = promotion_cost.at(c_s);
            let label = classification.label_at(c_s, c_p);
            let (utility_high, utility_low) = match label {
                Some(id) => {
                    let priced = config.with_costs(c_s, c_p)?;
                    let profile = id.profile(config);
                    (
                        Some(expected_utility(&priced, &profile, AgentType::High)?),
                        Some(expected_utility(&priced, &profile, AgentType::Low)?),
                    )
                }
                None => (None, None),
            };
            Ok(SweepRow { c_s, c_p, label, utility_high, utility_low })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows, promotion_cost })
}

/// `points` log-spaced values from `low` to `high` inclusive.
pub fn log_grid(low: f64, high: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![low],
        _ => {
            let (a, b) = (low.ln(), high.ln());
            (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
        }
    }
}

/// 1,000 log-spaced sabotage costs from a tenth of the smallest boundary to
/// ten times the largest one, covering every region of the classification.
pub fn default_grid(classification: &Classification<f64>, promotion_cost: PromotionCost<f64>) -> Vec<f64> {
    let mut bounds = classification.sabotage_boundaries();
    bounds.push(classification.region(EquilibriumId::Ne1).c_s_interval.low);
    if promotion_cost == PromotionCost::SameAsSabotage {
        bounds.push(classification.low_promotion_threshold());
    }
    let lo = bounds.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = bounds.iter().cloned().fold(0.0, f64::max);
    log_grid(lo / 10.0, hi * 10.0, 1000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_rational::Ratio;

    type Q = Ratio<i128>;

    fn q(n: i128, d: i128) -> Q {
        Ratio::new(n, d)
    }

    fn example() -> ContestConfig<f64> {
        ContestConfig::new(100, 30, 10, 0.2, 0.8, 5000.0, 0.0, 0.0).unwrap()
    }

    fn example_exact() -> ContestConfig<Q> {
        ContestConfig::new(100, 30, 10, q(1, 5), q(4, 5), q(5000, 1), q(0, 1), q(0, 1)).unwrap()
    }

    #[test]
    fn labels_match_the_seven_states() {
        let c = example();
        let p = EquilibriumId::Ne6.profile(&c);
        assert_eq!(p.high, TypeStrategy { sabotage_high: 9, sabotage_low: 30, promote: true });
        assert_eq!(p.low, TypeStrategy { sabotage_high: 10, sabotage_low: 0, promote: true });
        let p7 = EquilibriumId::Ne7.profile(&c);
        assert_eq!(p7.low.sabotage_low, 29);
        assert_eq!(EquilibriumId::parse("NE4"), Some(EquilibriumId::Ne4));
        assert_eq!(EquilibriumId::parse("ne8"), None);
        assert_eq!(EquilibriumId::Ne2.to_string(), "NE2");
    }

    #[test]
    fn deviation_effect_agrees_with_rating_matrix() {
        let c = example_exact();
        for id in EquilibriumId::ALL {
            let profile = id.profile(&c);
            for who in AgentType::BOTH {
                let base = matrix_utility(&c, &profile, who, None, q(0, 1), q(0, 1)).unwrap();
                for to in class_strategies(&c, who) {
                    let d = deviation_effect(&c, &profile, who, to).unwrap();
                    let dev = matrix_utility(&c, &profile, who, Some(to), q(0, 1), q(0, 1)).unwrap();
                    assert_eq!(d.gain(c.prize(), q(0, 1), q(0, 1)), dev - base);
                }
            }
        }
    }

    #[test]
    fn regions_tile_the_sabotage_axis() {
        let cl = classify(&example()).unwrap();
        assert_eq!(cl.regions().len(), 7);
        let c_p = cl.high_promotion_threshold() / 2.0;
        let b = cl.sabotage_boundaries();
        assert_eq!(b.len(), 4);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        for x in log_grid(1e-5, 1e3, 5000) {
            let hits = cl.regions().iter().filter(|r| r.c_s_interval.contains(x) && r.c_p_condition.contains(c_p)).count();
            assert_eq!(hits, 1, "c_s={x}");
        }
        // boundaries belong to the more-sabotage side
        assert_eq!(cl.label_at(b[3], c_p), Some(EquilibriumId::Ne4));
        assert_eq!(cl.label_at(b[0], c_p), Some(EquilibriumId::Ne7));
        assert_eq!(cl.label_at(0.0, c_p), Some(EquilibriumId::Ne7));
    }

    #[test]
    fn costly_everything_is_ne1() {
        let cl = classify(&example()).unwrap();
        assert_eq!(cl.label_at(1e6, 1e6), Some(EquilibriumId::Ne1));
        assert_eq!(cl.label_at(1e6, 1.0), Some(EquilibriumId::Ne2));
        assert_eq!(cl.label_at(1e6, 0.01), Some(EquilibriumId::Ne3));
        assert_eq!(cl.label_at(1e-6, 1e6), None);
    }

    #[test]
    fn ne4_band_of_worked_example() {
        let cl = classify(&example()).unwrap();
        let r = cl.region(EquilibriumId::Ne4).c_s_interval;
        assert_relative_eq!(r.low, 0.031578, max_relative = 1e-4);
        assert_relative_eq!(r.high.unwrap(), 0.114201, max_relative = 1e-4);
    }

    #[test]
    fn gap_violation_is_reported() {
        let c = ContestConfig::new(100, 30, 10, 0.5, 0.6, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(classify(&c), Err(ModelError::GapViolated { .. })));
    }

    #[test]
    fn verify_nash_examples() {
        let c = example_exact();
        let ne1 = EquilibriumId::Ne1.profile(&c);
        assert!(verify_nash(&c, &ne1, q(1_000_000, 1), q(1_000_000, 1)).unwrap().holds());
        let cl = classify(&c).unwrap();
        let ne4 = EquilibriumId::Ne4.profile(&c);
        let cell = cl.region(EquilibriumId::Ne4).c_s_interval;
        let mid = (cell.low + cell.high.unwrap()) / q(2, 1);
        assert!(verify_nash(&c, &ne4, mid, q(1, 100)).unwrap().holds());
        match verify_nash(&c, &ne4, cell.low * q(9, 10), q(1, 100)).unwrap() {
            NashVerdict::Deviation { who, to, .. } => {
                assert_eq!(who, AgentType::Low);
                assert_eq!(to, TypeStrategy { sabotage_high: 10, sabotage_low: 0, promote: true });
            }
            NashVerdict::Holds => panic!("expected a profitable deviation"),
        }
    }

    #[test]
    fn sweep_single_point_and_limits() {
        let c = example();
        let one = sweep_costs(&c, &[1.0], PromotionCost::Fixed(0.01)).unwrap();
        assert_eq!(one.rows.len(), 1);
        assert_eq!(one.rows[0].label, Some(EquilibriumId::Ne3));
        let far = sweep_costs(&c, &[1e9], PromotionCost::SameAsSabotage).unwrap();
        let sincere = agent_values(&c, &StrategyProfile::sincere()).unwrap();
        assert_eq!(far.rows[0].label, Some(EquilibriumId::Ne1));
        assert_relative_eq!(far.rows[0].utility_high.unwrap(), 5000.0 * sincere.high() / sincere.total(), max_relative = 1e-12);
        assert!(sweep_costs(&c, &[2.0, 1.0], PromotionCost::Fixed(0.0)).is_err());
    }

    #[test]
    fn coupled_sweep_visits_all_seven_in_order() {
        let c = example();
        let cl = classify(&c).unwrap();
        let grid = default_grid(&cl, PromotionCost::SameAsSabotage);
        let sweep = sweep_costs(&c, &grid, PromotionCost::SameAsSabotage).unwrap();
        let order: Vec<_> = sweep.segments().into_iter().map(|s| s.0).collect();
        let expected: Vec<_> = EquilibriumId::ALL.iter().rev().map(|id| Some(*id)).collect();
        assert_eq!(order, expected);
    }

    #[test]
    fn every_region_verifies_exactly() {
        let c = classify(&example_exact()).unwrap();
        let points = verify_regions(&c, 10, q(1, 1000)).unwrap();
        for id in EquilibriumId::ALL {
            let interior = points.iter().filter(|p| p.id == id && p.kind == PointKind::Interior).count();
            assert_eq!(interior, 10, "{id}");
            assert!(points.iter().any(|p| p.id == id && p.kind != PointKind::Interior), "{id}");
        }
        let failed: Vec<_> = points.iter().filter(|p| !p.passed()).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }
}
