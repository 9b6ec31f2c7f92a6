//! Contest rankings by mean rating, and how often winners change when
//! ratings from potentially strategic raters are removed, compared with
//! removing the ratings of randomly chosen raters.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::RankingError;
use crate::sim::{RatingPanel, RatingRow};

pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSubmission {
    pub submission_id: u32,
    /// `None` when every rating of the submission was excluded.
    pub mean_rating: Option<f64>,
    pub ratings: usize,
    /// 1-based.
    pub rank: usize,
}

impl RankedSubmission {
    pub fn unrated(&self) -> bool {
        self.ratings == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContestRanking {
    pub contest_week: u32,
    /// Best first.
    pub entries: Vec<RankedSubmission>,
}

impl ContestRanking {
    pub fn top(&self, k: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = self.entries.iter().take(k).map(|e| e.submission_id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn winner(&self) -> Option<u32> {
        self.entries.first().map(|e| e.submission_id)
    }

    /// Mean-rating gap between ranks 1 and 2, when both are rated.
    pub fn margin(&self) -> Option<f64> {
        match (self.entries.first(), self.entries.get(1)) {
            (Some(a), Some(b)) => Some(a.mean_rating? - b.mean_rating?),
            _ => None,
        }
    }
}

/// Per-submission totals; ranking compares `sum/count` exactly by
/// cross-multiplying.
fn order(tallies: &[(u32, u64, u64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..tallies.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ia, sa, ca) = tallies[a];
        let (ib, sb, cb) = tallies[b];
        match (ca, cb) {
            (0, 0) => ia.cmp(&ib),
            (0, _) => Ordering::Greater,
            (_, 0) => Ordering::Less,
            _ => (sb * ca).cmp(&(sa * cb)).then(ia.cmp(&ib)),
        }
    });
    idx
}

fn ranking_from(week: u32, tallies: &[(u32, u64, u64)]) -> ContestRanking {
    let entries = order(tallies)
        .into_iter()
        .enumerate()
        .map(|(pos, i)| {
            let (submission_id, sum, count) = tallies[i];
            RankedSubmission {
                submission_id,
                mean_rating: (count > 0).then(|| sum as f64 / count as f64),
                ratings: count as usize,
                rank: pos + 1,
            }
        })
        .collect();
    ContestRanking { contest_week: week, entries }
}

/// Ranks the submissions of one week by mean rating over the rows not
/// excluded. Ties go to the lower submission id; submissions left without
/// ratings stay in the ranking, below every rated one.
pub fn rank_contest(week: u32, rows: &[&RatingRow], exclude: impl Fn(&RatingRow) -> bool) -> Result<ContestRanking, RankingError> {
    let rows: Vec<&&RatingRow> = rows.iter().filter(|r| r.contest_week == week).collect();
    if rows.is_empty() {
        return Err(RankingError::EmptyWeek(week));
    }
    let mut tallies: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    let mut kept = 0;
    for row in rows {
        let t = tallies.entry(row.submission_id).or_insert((0, 0));
        if !exclude(row) {
            t.0 += u64::from(row.rating);
            t.1 += 1;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(RankingError::EmptyWeek(week));
    }
    let tallies: Vec<(u32, u64, u64)> = tallies.into_iter().map(|(id, (s, c))| (id, s, c)).collect();
    Ok(ranking_from(week, &tallies))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Matching {
    /// Remove random raters until at least as many ratings are gone.
    RatingCount,
    /// Remove as many random raters as the strategic variant did.
    RaterCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    SelfVotes,
    CompetitorVotes,
    /// Competitor votes, scored on close contests only.
    CloseContests,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SelfVotes, Variant::CompetitorVotes, Variant::CloseContests];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::SelfVotes => "self_votes",
            Variant::CompetitorVotes => "competitor_votes",
            Variant::CloseContests => "close_contests",
        }
    }

    fn removes(self, row: &Compact) -> bool {
        match self {
            Variant::SelfVotes => row.own,
            Variant::CompetitorVotes | Variant::CloseContests => row.competitor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemovalOptions {
    /// Size of the winner set.
    pub top_k: usize,
    /// Contests whose rank-1/rank-2 margin is at or below this quantile of
    /// all margins count as close.
    pub close_quantile: f64,
    pub replications: usize,
    pub matching: Matching,
    pub seed: u64,
}

impl Default for RemovalOptions {
    fn default() -> Self {
        Self { top_k: 1, close_quantile: 0.25, replications: 500, matching: Matching::RatingCount, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantReport {
    pub variant: Variant,
    /// Contests the rates are computed over.
    pub contests: usize,
    /// Contests with at least one rating removed.
    pub recomputed: usize,
    pub removed_ratings: usize,
    pub removed_raters: usize,
    pub winner_changes: usize,
    pub top3_changes: usize,
}

impl VariantReport {
    pub fn winner_change_rate(&self) -> f64 {
        self.winner_changes as f64 / self.contests.max(1) as f64
    }

    pub fn top3_change_rate(&self) -> f64 {
        self.top3_changes as f64 / self.contests.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullReplication {
    pub winner_change_rate: f64,
    pub top3_change_rate: f64,
    pub close_winner_change_rate: f64,
    pub removed_ratings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    pub replications: Vec<NullReplication>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

impl NullDistribution {
    pub fn len(&self) -> usize {
        self.replications.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replications.is_empty()
    }

    pub fn winner_rates(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.winner_change_rate).collect()
    }

    pub fn mean_winner_change(&self) -> f64 {
        mean(self.replications.iter().map(|r| r.winner_change_rate))
    }

    pub fn mean_top3_change(&self) -> f64 {
        mean(self.replications.iter().map(|r| r.top3_change_rate))
    }

    pub fn mean_close_winner_change(&self) -> f64 {
        mean(self.replications.iter().map(|r| r.close_winner_change_rate))
    }

    /// Monte Carlo standard error of the mean winner-change rate.
    pub fn winner_change_se(&self) -> f64 {
        let m = self.mean_winner_change();
        let n = self.len() as f64;
        let var = self.replications.iter().map(|r| (r.winner_change_rate - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (var / n).sqrt()
    }

    /// Central 95% interval of the winner-change rate.
    pub fn winner_band95(&self) -> (f64, f64) {
        let r = self.winner_rates();
        (quantile(&r, 0.025), quantile(&r, 0.975))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub contests: usize,
    pub close_contests: usize,
    pub close_margin: f64,
    pub variants: Vec<VariantReport>,
    pub null: NullDistribution,
}

impl PerturbationReport {
    pub fn variant(&self, v: Variant) -> &VariantReport {
        self.variants.iter().find(|r| r.variant == v).expect("every variant is reported")
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} contests, {} close (margin <= {:.4})\n", self.contests, self.close_contests, self.close_margin);
        for v in &self.variants {
            s.push_str(&format!(
                "{:<18} winner change {:>6.2}%  top-3 change {:>6.2}%  ({} ratings from {} raters removed)\n",
                v.variant.as_str(),
                100.0 * v.winner_change_rate(),
                100.0 * v.top3_change_rate(),
                v.removed_ratings,
                v.removed_raters
            ));
        }
        let (lo, hi) = self.null.winner_band95();
        s.push_str(&format!(
            "random raters      winner change {:>6.2}%  top-3 change {:>6.2}%  close {:>6.2}%  (95% band {:.2}%..{:.2}%, {} replications)\n",
            100.0 * self.null.mean_winner_change(),
            100.0 * self.null.mean_top3_change(),
            100.0 * self.null.mean_close_winner_change(),
            100.0 * lo,
            100.0 * hi,
            self.null.len()
        ));
        s
    }
}

#[derive(Debug, Clone, Copy)]
struct Compact {
    rater: u32,
    /// Position of `rater` in the week's `raters`.
    rater_index: usize,
    submission: usize,
    rating: u8,
    competitor: bool,
    own: bool,
}

struct WeekData {
    week: u32,
    ids: Vec<u32>,
    rows: Vec<Compact>,
    /// Distinct raters, ascending.
    raters: Vec<u32>,
    ratings_per_rater: Vec<usize>,
    baseline: ContestRanking,
}

impl WeekData {
    fn tallies(&self, removed: impl Fn(&Compact) -> bool) -> Vec<(u32, u64, u64)> {
        let mut t: Vec<(u32, u64, u64)> = self.ids.iter().map(|&id| (id, 0, 0)).collect();
        for r in self.rows.iter().filter(|r| !removed(r)) {
            t[r.submission].1 += u64::from(r.rating);
            t[r.submission].2 += 1;
        }
        t
    }

    fn rerank(&self, removed: impl Fn(&Compact) -> bool) -> ContestRanking {
        ranking_from(self.week, &self.tallies(removed))
    }
}

fn prepare(panel: &RatingPanel) -> Vec<WeekData> {
    panel
        .by_week()
        .into_par_iter()
        .map(|(week, rows)| {
            let mut ids: Vec<u32> = rows.iter().map(|r| r.submission_id).collect();
            ids.sort_unstable();
            ids.dedup();
            let pos: HashMap<u32, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
            let mut raters: Vec<u32> = rows.iter().map(|r| r.rater_id).collect();
            raters.sort_unstable();
            raters.dedup();
            let rater_pos: HashMap<u32, usize> = raters.iter().enumerate().map(|(i, id)| (*id, i)).collect();
            let mut ratings_per_rater = vec![0; raters.len()];
            let compact: Vec<Compact> = rows
                .iter()
                .map(|r| {
                    let rater_index = rater_pos[&r.rater_id];
                    ratings_per_rater[rater_index] += 1;
                    Compact {
                        rater: r.rater_id,
                        rater_index,
                        submission: pos[&r.submission_id],
                        rating: r.rating,
                        competitor: r.submitted_same_contest,
                        own: r.rate_own_submission,
                    }
                })
                .collect();
            let mut w = WeekData {
                week,
                ids,
                rows: compact,
                raters,
                ratings_per_rater,
                baseline: ContestRanking { contest_week: week, entries: vec![] },
            };
            w.baseline = w.rerank(|_| false);
            w
        })
        .collect()
}

struct Changes {
    winner: bool,
    top3: bool,
}

fn compare(base: &ContestRanking, new: &ContestRanking, top_k: usize) -> Changes {
    Changes { winner: base.top(top_k) != new.top(top_k), top3: base.top(3) != new.top(3) }
}

fn close_flags(weeks: &[WeekData], q: f64) -> (Vec<bool>, f64) {
    let margins: Vec<Option<f64>> = weeks.iter().map(|w| w.baseline.margin()).collect();
    let present: Vec<f64> = margins.iter().flatten().copied().collect();
    let threshold = quantile(&present, q);
    (margins.iter().map(|m| m.is_some_and(|m| m <= threshold)).collect(), threshold)
}

/// Strategic removal targets per week: ratings and distinct raters removed
/// by the competitor-vote variant.
fn competitor_targets(w: &WeekData) -> (usize, usize) {
    let removed: Vec<&Compact> = w.rows.iter().filter(|r| r.competitor).collect();
    let mut raters: Vec<u32> = removed.iter().map(|r| r.rater).collect();
    raters.sort_unstable();
    raters.dedup();
    (removed.len(), raters.len())
}

fn random_removal(w: &WeekData, target: (usize, usize), matching: Matching, rng: &mut ChaCha8Rng) -> (ContestRanking, usize) {
    let mut order: Vec<usize> = (0..w.raters.len()).collect();
    order.shuffle(rng);
    let mut chosen = vec![false; w.raters.len()];
    let (mut removed, mut count) = (0, 0);
    for rater in order {
        let done = match matching {
            Matching::RatingCount => removed >= target.0,
            Matching::RaterCount => count >= target.1,
        };
        if done {
            break;
        }
        removed += w.ratings_per_rater[rater];
        count += 1;
        chosen[rater] = true;
    }
    (w.rerank(|r| chosen[r.rater_index]), removed)
}

fn replication(weeks: &[WeekData], close: &[bool], options: &RemovalOptions, rep: usize) -> NullReplication {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(rep as u64);
    let (mut winners, mut top3, mut close_winners, mut removed_total) = (0, 0, 0, 0);
    for (w, &is_close) in weeks.iter().zip(close) {
        let (ranking, removed) = random_removal(w, competitor_targets(w), options.matching, &mut rng);
        let c = compare(&w.baseline, &ranking, options.top_k);
        winners += usize::from(c.winner);
        top3 += usize::from(c.top3);
        close_winners += usize::from(c.winner && is_close);
        removed_total += removed;
    }
    let n_close = close.iter().filter(|&&c| c).count();
    NullReplication {
        winner_change_rate: winners as f64 / weeks.len().max(1) as f64,
        top3_change_rate: top3 as f64 / weeks.len().max(1) as f64,
        close_winner_change_rate: close_winners as f64 / n_close.max(1) as f64,
        removed_ratings: removed_total,
    }
}

fn null_from(weeks: &[WeekData], close: &[bool], options: &RemovalOptions) -> Result<NullDistribution, RankingError> {
    if options.replications < MIN_REPLICATIONS {
        return Err(RankingError::TooFewReplications(options.replications));
    }
    let replications = (0..options.replications).into_par_iter().map(|rep| replication(weeks, close, options, rep)).collect();
    Ok(NullDistribution { replications })
}

/// Winner-change rates when each week loses the ratings of random raters,
/// as many as (by rating or rater count) the competitor-vote removal takes.
pub fn bootstrap_null(panel: &RatingPanel, options: &RemovalOptions) -> Result<NullDistribution, RankingError> {
    if panel.is_empty() {
        return Err(RankingError::EmptyPanel);
    }
    let weeks = prepare(panel);
    let (close, _) = close_flags(&weeks, options.close_quantile);
    null_from(&weeks, &close, options)
}

pub fn strategic_removal_study(panel: &RatingPanel, options: &RemovalOptions) -> Result<PerturbationReport, RankingError> {
    if panel.is_empty() {
        return Err(RankingError::EmptyPanel);
    }
    let weeks = prepare(panel);
    let (close, close_margin) = close_flags(&weeks, options.close_quantile);
    let variants = Variant::ALL
        .iter()
        .map(|&variant| {
            let mut report = VariantReport {
                variant,
                contests: 0,
                recomputed: 0,
                removed_ratings: 0,
                removed_raters: 0,
                winner_changes: 0,
                top3_changes: 0,
            };
            for (w, &is_close) in weeks.iter().zip(&close) {
                if variant == Variant::CloseContests && !is_close {
                    continue;
                }
                report.contests += 1;
                let removed: Vec<&Compact> = w.rows.iter().filter(|r| variant.removes(r)).collect();
                if removed.is_empty() {
                    continue;
                }
                report.recomputed += 1;
                report.removed_ratings += removed.len();
                let mut raters: Vec<u32> = removed.iter().map(|r| r.rater).collect();
                raters.sort_unstable();
                raters.dedup();
                report.removed_raters += raters.len();
                let c = compare(&w.baseline, &w.rerank(|r| variant.removes(r)), options.top_k);
                report.winner_changes += usize::from(c.winner);
                report.top3_changes += usize::from(c.top3);
            }
            report
        })
        .collect();
    let null = null_from(&weeks, &close, options)?;
    Ok(PerturbationReport {
        contests: weeks.len(),
        close_contests: close.iter().filter(|&&c| c).count(),
        close_margin,
        variants,
        null,
    })
}
