//! Seeded multi-week rating panels.
//!
//! Each week some members submit and become contestants; the rest may rate
//! as neutral outsiders. Every active rater rates each submission with a
//! fixed probability. Sincere ratings discretise the submission's quality on
//! the 0–5 star scale; strategic overrides (0 stars for sabotage, 5 stars for
//! self-promotion) are applied per rule and recorded as ground truth.
//!
//! Each week draws from its own ChaCha stream derived from `(seed, week)`,
//! so weeks are generated in parallel with identical output.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::contest::ContestConfig;
use crate::equilibrium::{classify, EquilibriumId};
use crate::error::SimError;

pub const MAX_STARS: u8 = 5;

/// Truncation of the rating noise, in standard deviations.
const NOISE_TRUNCATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Sincere,
    Sabotage,
    Promotion,
}

impl Intent {
    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Sincere => "sincere",
            Intent::Sabotage => "sabotage",
            Intent::Promotion => "promotion",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sincere" => Some(Intent::Sincere),
            "sabotage" => Some(Intent::Sabotage),
            "promotion" => Some(Intent::Promotion),
            _ => None,
        }
    }
}

/// Who sabotages whom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SabotageRule {
    None,
    /// Probability that a contestant sabotages a rival's submission it rates,
    /// indexed `[source band][target band]`.
    Explicit { probabilities: Vec<Vec<f64>> },
    /// Each week's contest is mapped onto the high/low model and contestants
    /// play the equilibrium of the cell their costs fall in.
    Equilibrium(EquilibriumRule),
}

/// Whether contestants rate their own submission at 5 stars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PromotionRule {
    None,
    /// Probability of promoting when rating one's own submission, per
    /// source band.
    Explicit { probabilities: Vec<f64> },
    /// Promote when the week's equilibrium says so; needs an equilibrium
    /// sabotage rule for the costs.
    Equilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumRule {
    /// Contestants with skill at or above this are high types.
    pub high_skill_cut: f64,
    pub prize: f64,
    pub sabotage_cost: f64,
    pub promotion_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncentiveChange {
    /// First week under the new regime.
    pub week: u32,
    /// New prize for the equilibrium rule, if it changes.
    #[serde(default)]
    pub prize: Option<f64>,
    /// Additive increase in the probability that a contestant's rating of a
    /// rival is 0 stars.
    #[serde(default)]
    pub sabotage_uplift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkillMeasure {
    /// Latent skill of the member.
    #[default]
    Latent,
    /// Mean quality of the member's earlier submissions; missing before
    /// the first one.
    Lagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub weeks: u32,
    pub population: usize,
    /// Beta shape parameters of the latent skill distribution on `[0, 1]`.
    pub skill_alpha: f64,
    pub skill_beta: f64,
    /// Probability that a member submits in a given week.
    pub participation_rate: f64,
    /// Probability that a non-submitting member rates in a given week.
    pub rater_activity_rate: f64,
    /// Probability that an active rater rates a given rival submission.
    pub rating_rate: f64,
    /// Probability that a contestant rates its own submission.
    pub self_rating_rate: f64,
    /// Standard deviation of the sincere rating noise on the unit scale.
    pub rating_noise_sd: f64,
    /// Standard deviation of submission quality around the author's skill.
    pub quality_sd: f64,
    /// Skill cut points defining the bands of explicit rules.
    pub band_cuts: Vec<f64>,
    pub sabotage_rule: SabotageRule,
    pub promotion_rule: PromotionRule,
    pub incentive_change: Option<IncentiveChange>,
    pub skill_measure: SkillMeasure,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            weeks: 50,
            population: 2000,
            skill_alpha: 2.0,
            skill_beta: 5.0,
            participation_rate: 0.028,
            rater_activity_rate: 0.18,
            rating_rate: 0.15,
            self_rating_rate: 0.8,
            rating_noise_sd: 0.08,
            quality_sd: 0.0,
            band_cuts: vec![0.5],
            sabotage_rule: SabotageRule::None,
            promotion_rule: PromotionRule::None,
            incentive_change: None,
            skill_measure: SkillMeasure::Latent,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn bands(&self) -> usize {
        self.band_cuts.len() + 1
    }

    pub fn band_of(&self, skill: f64) -> usize {
        self.band_cuts.iter().filter(|&&c| skill >= c).count()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.weeks < 1 {
            return bad("weeks must be at least 1".into());
        }
        if self.population < 3 {
            return bad("population must be at least 3".into());
        }
        let probs = [
            ("participation_rate", self.participation_rate),
            ("rater_activity_rate", self.rater_activity_rate),
            ("rating_rate", self.rating_rate),
            ("self_rating_rate", self.self_rating_rate),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be a probability, got {p}"));
            }
        }
        if !(self.skill_alpha > 0.0 && self.skill_beta > 0.0) {
            return bad("skill shape parameters must be positive".into());
        }
        if !(self.rating_noise_sd > 0.0) || self.quality_sd < 0.0 {
            return bad("noise standard deviations must be positive".into());
        }
        if !self.band_cuts.windows(2).all(|w| w[0] < w[1]) || self.band_cuts.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("band_cuts must be increasing and inside [0, 1]".into());
        }
        let k = self.bands();
        match &self.sabotage_rule {
            SabotageRule::Explicit { probabilities } => {
                if probabilities.len() != k || probabilities.iter().any(|r| r.len() != k) {
                    return bad(format!("sabotage probabilities must be {k}x{k}"));
                }
                if probabilities.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("sabotage probabilities must lie in [0, 1]".into());
                }
            }
            SabotageRule::Equilibrium(rule) => {
                if !(rule.prize >= 0.0 && rule.sabotage_cost >= 0.0 && rule.promotion_cost >= 0.0) {
                    return bad("equilibrium prize and costs must be non-negative".into());
                }
            }
            SabotageRule::None => {}
        }
        match &self.promotion_rule {
            PromotionRule::Explicit { probabilities } => {
                if probabilities.len() != k || probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad(format!("promotion probabilities must be {k} values in [0, 1]"));
                }
            }
            PromotionRule::Equilibrium => {
                if !matches!(self.sabotage_rule, SabotageRule::Equilibrium(_)) {
                    return bad("equilibrium promotion needs an equilibrium sabotage rule".into());
                }
            }
            PromotionRule::None => {}
        }
        if let Some(change) = &self.incentive_change {
            if change.week == 0 || change.week >= self.weeks {
                return bad(format!("incentive change week {} must lie inside 1..{}", change.week, self.weeks));
            }
            if !(0.0..=1.0).contains(&change.sabotage_uplift) {
                return bad("sabotage_uplift must lie in [0, 1]".into());
            }
        }
        Ok(())
    }

    /// Contest of a typical week under an equilibrium rule: expected counts
    /// and mean qualities of each type.
    pub fn expected_contest(&self, rule: &EquilibriumRule) -> Option<ContestConfig<f64>> {
        let beta = Beta::new(self.skill_alpha, self.skill_beta).ok()?;
        // Monte Carlo moments with a fixed stream; only used for sizing costs
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let draws: Vec<f64> = (0..200_000).map(|_| beta.sample(&mut rng)).collect();
        let (hi, lo): (Vec<f64>, Vec<f64>) = draws.iter().partition(|&&s| s >= rule.high_skill_cut);
        let share_high = hi.len() as f64 / draws.len() as f64;
        let submitters = self.population as f64 * self.participation_rate;
        let outsiders = (self.population as f64 - submitters) * self.rater_activity_rate;
        let h = (submitters * share_high).round() as usize;
        let l = (submitters * (1.0 - share_high)).round() as usize;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        ContestConfig::new(
            outsiders.round() as usize,
            l,
            h,
            mean(&lo),
            mean(&hi),
            rule.prize,
            rule.sabotage_cost,
            rule.promotion_cost,
        )
        .ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingRow {
    pub rater_id: u32,
    pub submitter_id: u32,
    pub submission_id: u32,
    pub contest_week: u32,
    pub rating: u8,
    pub submitted_same_contest: bool,
    pub rate_own_submission: bool,
    pub source_skill: f64,
    pub target_skill: f64,
    pub after_incentive_change: bool,
    pub true_intent: Intent,
}

impl RatingRow {
    pub fn zero_star(&self) -> bool {
        self.rating == 0
    }

    pub fn five_star(&self) -> bool {
        self.rating == MAX_STARS
    }

    /// Intent consistency: own ratings only by contestants, sabotage is 0
    /// stars, promotion is 5 stars of one's own submission.
    pub fn is_consistent(&self) -> bool {
        (!self.rate_own_submission || self.submitted_same_contest)
            && self.rating <= MAX_STARS
            && match self.true_intent {
                Intent::Sincere => true,
                Intent::Sabotage => self.rating == 0 && self.submitted_same_contest && !self.rate_own_submission,
                Intent::Promotion => self.rating == MAX_STARS && self.rate_own_submission,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingPanel {
    pub rows: Vec<RatingRow>,
    pub seed: u64,
    pub weeks: u32,
    pub incentive_week: Option<u32>,
    /// Equilibrium played in each week under an equilibrium rule; weeks
    /// that did not fit the model are absent. Not stored in panel files.
    pub equilibria: BTreeMap<u32, EquilibriumId>,
}

impl RatingPanel {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Contest weeks present in the panel, ascending.
    pub fn week_ids(&self) -> Vec<u32> {
        let mut w: Vec<u32> = self.rows.iter().map(|r| r.contest_week).collect();
        w.sort_unstable();
        w.dedup();
        w
    }

    /// Rows grouped by contest week, preserving row order within a week.
    pub fn by_week(&self) -> Vec<(u32, Vec<&RatingRow>)> {
        let mut map: HashMap<u32, Vec<&RatingRow>> = HashMap::new();
        for row in &self.rows {
            map.entry(row.contest_week).or_default().push(row);
        }
        let mut out: Vec<_> = map.into_iter().collect();
        out.sort_by_key(|(w, _)| *w);
        out
    }
}

/// Probability that a sincere rating of a submission of quality `q` rounds
/// to 0 stars.
pub fn sincere_zero_probability(quality: f64, noise_sd: f64) -> f64 {
    let std = StdNormal::new(0.0, 1.0).expect("standard normal");
    let cut = 0.5 / f64::from(MAX_STARS) - quality;
    let lo = std.cdf(-NOISE_TRUNCATION);
    let hi = std.cdf(NOISE_TRUNCATION);
    ((std.cdf(cut / noise_sd) - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn sincere_rating<R: Rng>(rng: &mut R, noise: &Normal<f64>, quality: f64, sd: f64) -> u8 {
    let eps = loop {
        let e = noise.sample(rng);
        if e.abs() <= NOISE_TRUNCATION * sd {
            break e;
        }
    };
    (f64::from(MAX_STARS) * (quality + eps)).round().clamp(0.0, f64::from(MAX_STARS)) as u8
}

#[derive(Debug, Clone, Copy)]
struct WeekPlan {
    high: (bool, bool, bool),
    low: (bool, bool, bool),
    high_cut: f64,
}

impl WeekPlan {
    fn classes(&self, skill: f64) -> (bool, bool, bool) {
        if skill >= self.high_cut {
            self.high
        } else {
            self.low
        }
    }
}

/// Maps the week's contest onto the model and returns the equilibrium the
/// costs select, or `None` when the week does not fit the model.
fn equilibrium_plan(
    rule: &EquilibriumRule,
    prize: f64,
    outsiders: usize,
    qualities: &[(f64, f64)],
) -> Option<(EquilibriumId, WeekPlan)> {
    let (hi, lo): (Vec<_>, Vec<_>) = qualities.iter().partition(|(skill, _)| *skill >= rule.high_skill_cut);
    let mean = |v: &[&(f64, f64)]| v.iter().map(|(_, q)| *q).sum::<f64>() / v.len().max(1) as f64;
    let config = ContestConfig::new(
        outsiders,
        lo.len(),
        hi.len(),
        mean(&lo),
        mean(&hi),
        prize,
        rule.sabotage_cost,
        rule.promotion_cost,
    )
    .ok()?;
    let classification = classify(&config).ok()?;
    let id = classification.label_at(rule.sabotage_cost, rule.promotion_cost)?;
    let (high, low) = id.classes();
    Some((id, WeekPlan { high, low, high_cut: rule.high_skill_cut }))
}

struct Week {
    rows: Vec<RatingRow>,
    submissions: Vec<(u32, f64)>,
    equilibrium: Option<EquilibriumId>,
}

pub fn simulate(config: &SimConfig) -> Result<RatingPanel, SimError> {
    config.validate()?;
    let beta = Beta::new(config.skill_alpha, config.skill_beta)
        .map_err(|e| SimError::InvalidConfig(format!("skill distribution: {e}")))?;
    let mut skill_rng = ChaCha8Rng::seed_from_u64(config.seed);
    skill_rng.set_stream(u64::MAX);
    let skills: Vec<f64> = (0..config.population).map(|_| beta.sample(&mut skill_rng)).collect();

    let weeks: Vec<Week> = (0..config.weeks).into_par_iter().map(|w| simulate_week(config, &skills, w)).collect();

    let mut rows = Vec::with_capacity(weeks.iter().map(|w| w.rows.len()).sum());
    let mut next_submission = 0u32;
    let mut history: Vec<(f64, u32)> = vec![(0.0, 0); config.population];
    let mut equilibria = BTreeMap::new();
    for (w, week) in weeks.into_iter().enumerate() {
        if week.submissions.is_empty() {
            log::info!("week {w}: no submissions, skipped");
            continue;
        }
        if let Some(id) = week.equilibrium {
            equilibria.insert(w as u32, id);
        }
        let offset = next_submission;
        next_submission += week.submissions.len() as u32;
        let lagged = |member: u32, history: &[(f64, u32)]| {
            let (sum, n) = history[member as usize];
            if n == 0 {
                f64::NAN
            } else {
                sum / f64::from(n)
            }
        };
        for mut row in week.rows {
            row.submission_id += offset;
            if config.skill_measure == SkillMeasure::Lagged {
                row.source_skill = lagged(row.rater_id, &history);
                row.target_skill = lagged(row.submitter_id, &history);
            }
            rows.push(row);
        }
        for (member, quality) in week.submissions {
            let h = &mut history[member as usize];
            h.0 += quality;
            h.1 += 1;
        }
    }
    Ok(RatingPanel {
        rows,
        seed: config.seed,
        weeks: config.weeks,
        incentive_week: config.incentive_change.map(|c| c.week),
        equilibria,
    })
}

fn simulate_week(config: &SimConfig, skills: &[f64], week: u32) -> Week {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::from(week));
    let noise = Normal::new(0.0, config.rating_noise_sd).expect("positive sd");
    let quality_noise = Normal::new(0.0, config.quality_sd).expect("non-negative sd");

    let after = config.incentive_change.is_some_and(|c| week >= c.week);
    let uplift = config.incentive_change.filter(|_| after).map_or(0.0, |c| c.sabotage_uplift);

    let mut submitters: Vec<(u32, f64)> = Vec::new();
    let mut outsiders: Vec<u32> = Vec::new();
    for (member, &skill) in skills.iter().enumerate() {
        if rng.random_bool(config.participation_rate) {
            let quality = (skill + quality_noise.sample(&mut rng)).clamp(0.0, 1.0);
            submitters.push((member as u32, quality));
        } else if rng.random_bool(config.rater_activity_rate) {
            outsiders.push(member as u32);
        }
    }
    if submitters.is_empty() {
        return Week { rows: Vec::new(), submissions: Vec::new(), equilibrium: None };
    }

    let plan = match &config.sabotage_rule {
        SabotageRule::Equilibrium(rule) => {
            let prize = config.incentive_change.filter(|_| after).and_then(|c| c.prize).unwrap_or(rule.prize);
            let qualities: Vec<(f64, f64)> = submitters.iter().map(|&(m, q)| (skills[m as usize], q)).collect();
            let plan = equilibrium_plan(rule, prize, outsiders.len(), &qualities);
            if plan.is_none() {
                log::debug!("week {week}: contest does not fit the model; ratings stay sincere");
            }
            plan
        }
        _ => None,
    };
    let equilibrium = plan.map(|p| p.0);
    let plan = plan.map(|p| p.1);

    let sabotage_probability = |source: f64, target: f64| -> f64 {
        match &config.sabotage_rule {
            SabotageRule::None => 0.0,
            SabotageRule::Explicit { probabilities } => probabilities[config.band_of(source)][config.band_of(target)],
            SabotageRule::Equilibrium(_) => plan.map_or(0.0, |p| {
                let (sab_high, sab_low, _) = p.classes(source);
                let target_is_high = target >= p.high_cut;
                f64::from(u8::from(if target_is_high { sab_high } else { sab_low }))
            }),
        }
    };
    let promotion_probability = |source: f64| -> f64 {
        match &config.promotion_rule {
            PromotionRule::None => 0.0,
            PromotionRule::Explicit { probabilities } => probabilities[config.band_of(source)],
            PromotionRule::Equilibrium => plan.map_or(0.0, |p| f64::from(u8::from(p.classes(source).2))),
        }
    };

    let mut rows = Vec::new();
    let is_submitter: HashMap<u32, usize> = submitters.iter().enumerate().map(|(i, (m, _))| (*m, i)).collect();
    let raters: Vec<u32> = {
        let mut r: Vec<u32> = submitters.iter().map(|(m, _)| *m).chain(outsiders.iter().copied()).collect();
        r.sort_unstable();
        r
    };
    for (local_id, &(author, quality)) in submitters.iter().enumerate() {
        let target_skill = skills[author as usize];
        for &rater in &raters {
            let competitor = is_submitter.contains_key(&rater);
            let own = rater == author;
            let source_skill = skills[rater as usize];
            // an equilibrium strategy covers every submission in the target class
            let targeted = competitor
                && plan.is_some()
                && if own { promotion_probability(source_skill) == 1.0 } else { sabotage_probability(source_skill, target_skill) == 1.0 };
            let rate_p = if own { config.self_rating_rate } else { config.rating_rate };
            if !rng.random_bool(rate_p) && !targeted {
                continue;
            }
            let (rating, intent) = if own {
                if rng.random_bool(promotion_probability(source_skill)) {
                    (MAX_STARS, Intent::Promotion)
                } else {
                    (sincere_rating(&mut rng, &noise, quality, config.rating_noise_sd), Intent::Sincere)
                }
            } else if competitor {
                let s = sabotage_probability(source_skill, target_skill);
                if rng.random_bool(s) {
                    (0, Intent::Sabotage)
                } else {
                    let sincere = sincere_rating(&mut rng, &noise, quality, config.rating_noise_sd);
                    // additive uplift in P(0 stars): top up the non-zero mass
                    let extra = if uplift > 0.0 {
                        let base = s + (1.0 - s) * sincere_zero_probability(quality, config.rating_noise_sd);
                        if base < 1.0 {
                            (uplift / (1.0 - base)).min(1.0)
                        } else {
                            0.0
                        }
                    } else {
                        0.0
                    };
                    if sincere > 0 && extra > 0.0 && rng.random_bool(extra) {
                        (0, Intent::Sabotage)
                    } else {
                        (sincere, Intent::Sincere)
                    }
                }
            } else {
                (sincere_rating(&mut rng, &noise, quality, config.rating_noise_sd), Intent::Sincere)
            };
            rows.push(RatingRow {
                rater_id: rater,
                submitter_id: author,
                submission_id: local_id as u32,
                contest_week: week,
                rating,
                submitted_same_contest: competitor,
                rate_own_submission: own,
                source_skill,
                target_skill,
                after_incentive_change: after,
                true_intent: intent,
            });
        }
    }
    Week { rows, submissions: submitters, equilibrium }
}

/// Ratings in one `(submitted_same_contest, rate_own_submission)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SummaryCell {
    pub submitted_same_contest: bool,
    pub rate_own_submission: bool,
    pub count: usize,
    pub zero_star: usize,
    pub five_star: usize,
}

impl SummaryCell {
    pub fn p_zero(&self) -> f64 {
        self.zero_star as f64 / self.count.max(1) as f64
    }

    pub fn p_five(&self) -> f64 {
        self.five_star as f64 / self.count.max(1) as f64
    }
}

/// Rating behaviour by competing status: outsider, contestant rating a
/// rival, contestant rating itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSummary {
    pub cells: [SummaryCell; 3],
}

impl PanelSummary {
    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    pub fn cell(&self, submitted: bool, own: bool) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.submitted_same_contest == submitted && c.rate_own_submission == own)
    }
}

pub fn summarize(panel: &RatingPanel) -> PanelSummary {
    let mut cells = [
        SummaryCell { submitted_same_contest: false, rate_own_submission: false, ..Default::default() },
        SummaryCell { submitted_same_contest: true, rate_own_submission: false, ..Default::default() },
        SummaryCell { submitted_same_contest: true, rate_own_submission: true, ..Default::default() },
    ];
    for row in &panel.rows {
        let idx = match (row.submitted_same_contest, row.rate_own_submission) {
            (false, _) => 0,
            (true, false) => 1,
            (true, true) => 2,
        };
        let c = &mut cells[idx];
        c.count += 1;
        c.zero_star += usize::from(row.zero_star());
        c.five_star += usize::from(row.five_star());
    }
    PanelSummary { cells }
}

/// Spread of the ratings one rater cast in one week.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionRow {
    pub rater_id: u32,
    pub contest_week: u32,
    pub ratings: usize,
    pub std_dev: f64,
    pub submitted_same_contest: bool,
    pub source_skill: f64,
}

/// Sample standard deviation per rater-week over ratings of others'
/// submissions; rater-weeks with fewer than two such ratings are dropped.
pub fn rating_dispersion(panel: &RatingPanel) -> Vec<DispersionRow> {
    let mut groups: HashMap<(u32, u32), (Vec<f64>, bool, f64)> = HashMap::new();
    for row in panel.rows.iter().filter(|r| !r.rate_own_submission) {
        let e = groups
            .entry((row.rater_id, row.contest_week))
            .or_insert_with(|| (Vec::new(), row.submitted_same_contest, row.source_skill));
        e.0.push(f64::from(row.rating));
    }
    let mut out: Vec<DispersionRow> = groups
        .into_iter()
        .filter(|(_, (r, _, _))| r.len() >= 2)
        .map(|((rater_id, contest_week), (r, submitted, skill))| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            DispersionRow {
                rater_id,
                contest_week,
                ratings: r.len(),
                std_dev: var.sqrt(),
                submitted_same_contest: submitted,
                source_skill: skill,
            }
        })
        .collect();
    out.sort_by_key(|d| (d.contest_week, d.rater_id));
    out
}
