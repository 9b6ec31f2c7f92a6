//! Linear probability models with two absorbed fixed effects and one-way
//! cluster-robust standard errors.
//!
//! Fixed effects are swept out by alternating projections: subtract group
//! means of the first factor, then of the second, until a full sweep moves
//! no value by more than the tolerance. OLS on the demeaned data then gives
//! the same slopes as the dummy-variable regression.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num_traits::Float;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::EstimationError;
use crate::linalg::least_squares;
use crate::sim::{DispersionRow, RatingPanel};

pub const DEMEAN_TOLERANCE: f64 = 1e-8;
pub const DEMEAN_MAX_ITERATIONS: usize = 10_000;

/// Relative column norm below which a regressor counts as absorbed.
const ABSORBED_TOLERANCE: f64 = 1e-9;
/// Relative pivot size below which QR drops a column.
const COLLINEAR_TOLERANCE: f64 = 1e-10;

/// Dense group codes `0..count` for arbitrary ids, numbered by first
/// appearance.
pub fn encode_groups(keys: &[u32]) -> (Vec<usize>, usize) {
    let mut map: HashMap<u32, usize> = HashMap::new();
    let codes = keys
        .iter()
        .map(|k| {
            let next = map.len();
            *map.entry(*k).or_insert(next)
        })
        .collect();
    (codes, map.len())
}

#[derive(Debug, Clone)]
pub struct Demeaned<T> {
    pub columns: Vec<Vec<T>>,
    /// Largest number of sweeps any column needed.
    pub iterations: usize,
    /// Largest final-sweep change over all columns.
    pub delta: T,
}

fn subtract_group_means<T: Float>(col: &mut [T], groups: &[usize], count: usize, sums: &mut [T], sizes: &[T]) -> T {
    sums.iter_mut().for_each(|s| *s = T::zero());
    for (v, &g) in col.iter().zip(groups) {
        sums[g] = sums[g] + *v;
    }
    for g in 0..count {
        sums[g] = sums[g] / sizes[g];
    }
    let mut change = T::zero();
    for (v, &g) in col.iter_mut().zip(groups) {
        let m = sums[g];
        *v = *v - m;
        change = change.max(m.abs());
    }
    change
}

/// Sweeps out both factors from every column. `fe1` and `fe2` are dense
/// group codes (see [`encode_groups`]).
pub fn demean_two_way<T: Float + Send + Sync>(
    columns: &[Vec<T>],
    fe1: &[usize],
    fe2: &[usize],
    tolerance: T,
    max_iterations: usize,
) -> Result<Demeaned<T>, EstimationError> {
    if !(tolerance > T::zero()) {
        return Err(EstimationError::InvalidSpec("tolerance must be positive".into()));
    }
    let n = fe1.len();
    if fe2.len() != n || columns.iter().any(|c| c.len() != n) {
        return Err(EstimationError::InvalidSpec("fixed-effect and data columns differ in length".into()));
    }
    let count = |g: &[usize]| g.iter().copied().max().map_or(0, |m| m + 1);
    let (g1, g2) = (count(fe1), count(fe2));
    let sizes = |g: &[usize], k: usize| {
        let mut s = vec![T::zero(); k];
        for &i in g {
            s[i] = s[i] + T::one();
        }
        s
    };
    let (s1, s2) = (sizes(fe1, g1), sizes(fe2, g2));

    let results: Vec<(Vec<T>, usize, T)> = columns
        .par_iter()
        .map(|column| {
            let mut col = column.clone();
            let mut b1 = vec![T::zero(); g1];
            let mut b2 = vec![T::zero(); g2];
            let mut iterations = 0;
            let mut delta = T::infinity();
            while iterations < max_iterations {
                iterations += 1;
                let c1 = subtract_group_means(&mut col, fe1, g1, &mut b1, &s1);
                let c2 = subtract_group_means(&mut col, fe2, g2, &mut b2, &s2);
                delta = c1.max(c2);
                if delta < tolerance {
                    break;
                }
            }
            (col, iterations, delta)
        })
        .collect();

    let iterations = results.iter().map(|r| r.1).max().unwrap_or(0);
    let delta = results.iter().map(|r| r.2).fold(T::zero(), T::max);
    if !(delta < tolerance) && n > 0 {
        return Err(EstimationError::NonConvergence { iterations, delta: delta.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(Demeaned { columns: results.into_iter().map(|r| r.0).collect(), iterations, delta })
}

/// Named numeric and categorical columns of equal length.
#[derive(Debug, Clone, Default)]
pub struct ModelFrame {
    len: usize,
    numeric: BTreeMap<String, Vec<f64>>,
    categorical: BTreeMap<String, Vec<u32>>,
}

impl ModelFrame {
    pub fn new(len: usize) -> Self {
        Self { len, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn add_numeric(&mut self, name: &str, values: Vec<f64>) -> Result<(), EstimationError> {
        if values.len() != self.len {
            return Err(EstimationError::InvalidSpec(format!("column {name} has {} rows, frame has {}", values.len(), self.len)));
        }
        self.numeric.insert(name.to_string(), values);
        Ok(())
    }

    pub fn add_categorical(&mut self, name: &str, values: Vec<u32>) -> Result<(), EstimationError> {
        if values.len() != self.len {
            return Err(EstimationError::InvalidSpec(format!("column {name} has {} rows, frame has {}", values.len(), self.len)));
        }
        self.categorical.insert(name.to_string(), values);
        Ok(())
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64], EstimationError> {
        self.numeric.get(name).map(Vec::as_slice).ok_or_else(|| EstimationError::MissingColumn(name.to_string()))
    }

    pub fn categorical(&self, name: &str) -> Result<&[u32], EstimationError> {
        self.categorical.get(name).map(Vec::as_slice).ok_or_else(|| EstimationError::MissingColumn(name.to_string()))
    }

    /// Standard columns of a rating panel. Booleans are 0/1; `zero_star`
    /// and `five_star` are the outcome indicators.
    pub fn from_panel(panel: &RatingPanel) -> Self {
        let rows = &panel.rows;
        let mut f = Self::new(rows.len());
        let num = |g: &dyn Fn(&crate::sim::RatingRow) -> f64| rows.iter().map(g).collect::<Vec<f64>>();
        let b = |x: bool| f64::from(u8::from(x));
        let cols: [(&str, Vec<f64>); 9] = [
            ("zero_star", num(&|r| b(r.zero_star()))),
            ("five_star", num(&|r| b(r.five_star()))),
            ("rating", num(&|r| f64::from(r.rating))),
            ("submitted_same_contest", num(&|r| b(r.submitted_same_contest))),
            ("rate_own_submission", num(&|r| b(r.rate_own_submission))),
            ("after_incentive_change", num(&|r| b(r.after_incentive_change))),
            ("source_skill", num(&|r| r.source_skill)),
            ("target_skill", num(&|r| r.target_skill)),
            ("contest_week", num(&|r| f64::from(r.contest_week))),
        ];
        for (name, values) in cols {
            f.numeric.insert(name.to_string(), values);
        }
        let cat = |g: &dyn Fn(&crate::sim::RatingRow) -> u32| rows.iter().map(g).collect::<Vec<u32>>();
        f.categorical.insert("rater_id".into(), cat(&|r| r.rater_id));
        f.categorical.insert("submitter_id".into(), cat(&|r| r.submitter_id));
        f.categorical.insert("submission_id".into(), cat(&|r| r.submission_id));
        f.categorical.insert("contest_week".into(), cat(&|r| r.contest_week));
        f
    }

    /// Rating-spread rows with rater and week as categorical keys.
    pub fn from_dispersion(rows: &[DispersionRow]) -> Self {
        let mut f = Self::new(rows.len());
        f.numeric.insert("std_dev".into(), rows.iter().map(|r| r.std_dev).collect());
        f.numeric.insert("submitted_same_contest".into(), rows.iter().map(|r| f64::from(u8::from(r.submitted_same_contest))).collect());
        f.numeric.insert("source_skill".into(), rows.iter().map(|r| r.source_skill).collect());
        f.numeric.insert("ratings".into(), rows.iter().map(|r| r.ratings as f64).collect());
        f.categorical.insert("rater_id".into(), rows.iter().map(|r| r.rater_id).collect());
        f.categorical.insert("contest_week".into(), rows.iter().map(|r| r.contest_week).collect());
        f
    }

    /// Rows whose index satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len).filter(|&i| keep(i)).collect();
        let pick_f = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let pick_u = |v: &Vec<u32>| idx.iter().map(|&i| v[i]).collect::<Vec<u32>>();
        Self {
            len: idx.len(),
            numeric: self.numeric.iter().map(|(k, v)| (k.clone(), pick_f(v))).collect(),
            categorical: self.categorical.iter().map(|(k, v)| (k.clone(), pick_u(v))).collect(),
        }
    }
}

/// Product of one or more numeric columns; a single factor is a main effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term(pub Vec<String>);

impl Term {
    pub fn main(name: &str) -> Self {
        Term(vec![name.to_string()])
    }

    pub fn interaction(a: &str, b: &str) -> Self {
        Term(vec![a.to_string(), b.to_string()])
    }

    /// `a:b:c` notation.
    pub fn parse(s: &str) -> Self {
        Term(s.split(':').map(|p| p.trim().to_string()).collect())
    }

    pub fn name(&self) -> String {
        self.0.join(":")
    }

    pub fn involves(&self, column: &str) -> bool {
        self.0.iter().any(|c| c == column)
    }

    fn values(&self, frame: &ModelFrame) -> Result<Vec<f64>, EstimationError> {
        let mut out = vec![1.0; frame.len()];
        for factor in &self.0 {
            for (o, v) in out.iter_mut().zip(frame.numeric(factor)?) {
                *o *= v;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSpec {
    pub outcome: String,
    pub regressors: Vec<Term>,
    pub fixed_effects: (String, String),
    pub cluster: String,
}

impl RegressionSpec {
    /// Submission-clustered model with rater and submission effects.
    pub fn new(outcome: &str, regressors: Vec<Term>) -> Self {
        Self {
            outcome: outcome.to_string(),
            regressors,
            fixed_effects: ("rater_id".into(), "submission_id".into()),
            cluster: "submission_id".into(),
        }
    }

    pub fn clustered_by(mut self, cluster: &str) -> Self {
        self.cluster = cluster.to_string();
        self
    }

    pub fn with_fixed_effects(mut self, fe1: &str, fe2: &str) -> Self {
        self.fixed_effects = (fe1.to_string(), fe2.to_string());
        self
    }

    /// 0-star model: competing, own submission.
    pub fn sabotage() -> Self {
        Self::new("zero_star", vec![Term::main("submitted_same_contest"), Term::main("rate_own_submission")])
    }

    /// 5-star model: competing, own submission.
    pub fn promotion() -> Self {
        Self::new("five_star", vec![Term::main("submitted_same_contest"), Term::main("rate_own_submission")])
    }

    /// 0-star model with competing interacted with rater and target skill.
    pub fn sabotage_by_skill() -> Self {
        Self::new(
            "zero_star",
            vec![
                Term::main("submitted_same_contest"),
                Term::main("rate_own_submission"),
                Term::interaction("submitted_same_contest", "source_skill"),
                Term::interaction("submitted_same_contest", "target_skill"),
            ],
        )
    }

    /// 5-star model with own-submission rating interacted with rater skill.
    pub fn promotion_by_skill() -> Self {
        Self::new(
            "five_star",
            vec![
                Term::main("submitted_same_contest"),
                Term::main("rate_own_submission"),
                Term::interaction("rate_own_submission", "source_skill"),
            ],
        )
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.regressors.is_empty() {
            return Err(EstimationError::InvalidSpec("no regressors".into()));
        }
        if self.regressors.iter().any(|t| t.involves(&self.outcome)) {
            return Err(EstimationError::InvalidSpec(format!("outcome {} also appears as a regressor", self.outcome)));
        }
        let mut names: Vec<String> = self.regressors.iter().map(Term::name).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(EstimationError::InvalidSpec("duplicate regressor".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermEstimate {
    pub term: String,
    pub coefficient: f64,
    pub clustered_se: f64,
    pub t: f64,
    pub p: f64,
}

impl TermEstimate {
    /// 95% interval using the normal critical value.
    pub fn ci95(&self) -> (f64, f64) {
        (self.coefficient - 1.96 * self.clustered_se, self.coefficient + 1.96 * self.clustered_se)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub outcome: String,
    pub estimates: Vec<TermEstimate>,
    /// Terms removed as absorbed by the fixed effects or collinear.
    pub dropped: Vec<String>,
    pub r_squared_within: f64,
    pub n_obs: usize,
    pub clusters: usize,
    pub iterations: usize,
    pub delta: f64,
}

impl FitResult {
    pub fn get(&self, term: &str) -> Option<&TermEstimate> {
        self.estimates.iter().find(|e| e.term == term)
    }
}

/// Design matrix of a spec over the usable rows of a frame.
struct Design {
    rows: Vec<usize>,
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    fe1: Vec<usize>,
    fe2: Vec<usize>,
    cluster: Vec<usize>,
    clusters: usize,
}

fn design(frame: &ModelFrame, spec: &RegressionSpec) -> Result<Design, EstimationError> {
    spec.validate()?;
    let y_all = frame.numeric(&spec.outcome)?;
    let x_all: Vec<Vec<f64>> = spec.regressors.iter().map(|t| t.values(frame)).collect::<Result<_, _>>()?;
    let fe1_all = frame.categorical(&spec.fixed_effects.0)?;
    let fe2_all = frame.categorical(&spec.fixed_effects.1)?;
    let cl_all = frame.categorical(&spec.cluster)?;
    let rows: Vec<usize> = (0..frame.len())
        .filter(|&i| y_all[i].is_finite() && x_all.iter().all(|c| c[i].is_finite()))
        .collect();
    if rows.is_empty() {
        return Err(EstimationError::EmptyPanel);
    }
    let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let pick_u = |v: &[u32]| rows.iter().map(|&i| v[i]).collect::<Vec<u32>>();
    let (fe1, _) = encode_groups(&pick_u(fe1_all));
    let (fe2, _) = encode_groups(&pick_u(fe2_all));
    let (cluster, clusters) = encode_groups(&pick_u(cl_all));
    if clusters < 2 {
        return Err(EstimationError::TooFewClusters(clusters));
    }
    Ok(Design { y: pick(y_all), x: x_all.iter().map(|c| pick(c)).collect(), fe1, fe2, cluster, clusters, rows })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Estimates `spec` on `frame`: OLS on two-way demeaned data with CR1
/// standard errors clustered on `spec.cluster`. Rows with missing values in
/// the outcome or any regressor are dropped.
pub fn fit(frame: &ModelFrame, spec: &RegressionSpec) -> Result<FitResult, EstimationError> {
    fit_design(&design(frame, spec)?, spec).map(|(fit, _)| fit)
}

/// Convenience wrapper building the frame from a panel.
pub fn fit_panel(panel: &RatingPanel, spec: &RegressionSpec) -> Result<FitResult, EstimationError> {
    fit(&ModelFrame::from_panel(panel), spec)
}

fn fit_design(d: &Design, spec: &RegressionSpec) -> Result<(FitResult, Vec<Option<f64>>), EstimationError> {
    let mut all = d.x.clone();
    all.push(d.y.clone());
    let dm = demean_two_way(&all, &d.fe1, &d.fe2, DEMEAN_TOLERANCE, DEMEAN_MAX_ITERATIONS)?;
    let mut columns = dm.columns;
    let y = columns.pop().expect("outcome column");
    let k = columns.len();

    let mut dropped = Vec::new();
    let mut candidates = Vec::new();
    for j in 0..k {
        let scale = norm(&d.x[j]).max(1.0);
        if norm(&columns[j]) <= ABSORBED_TOLERANCE * scale {
            log::warn!("{} is absorbed by the fixed effects and drops out", spec.regressors[j].name());
            dropped.push(j);
        } else {
            candidates.push(j);
        }
    }
    if candidates.is_empty() {
        return Err(EstimationError::NothingIdentified);
    }
    let xs: Vec<Vec<f64>> = candidates.iter().map(|&j| columns[j].clone()).collect();
    let ls = least_squares(&xs, &y, COLLINEAR_TOLERANCE);
    for &j in &ls.dropped {
        log::warn!("{} is collinear with other regressors and drops out", spec.regressors[candidates[j]].name());
        dropped.push(candidates[j]);
    }
    dropped.sort_unstable();

    let n = y.len();
    let kk = ls.rank();
    let g = d.clusters;
    // meat: sum over clusters of (X_g' e_g)(X_g' e_g)'
    let mut scores = vec![vec![0.0; kk]; g];
    for i in 0..n {
        let e = ls.residuals[i];
        for (a, &col) in ls.kept.iter().enumerate() {
            scores[d.cluster[i]][a] += xs[col][i] * e;
        }
    }
    let mut meat = vec![vec![0.0; kk]; kk];
    for s in &scores {
        for a in 0..kk {
            for b in 0..kk {
                meat[a][b] += s[a] * s[b];
            }
        }
    }
    let bread = &ls.xtx_inverse;
    let factor = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - kk as f64).max(1.0));
    let mut variance = vec![0.0; kk];
    for a in 0..kk {
        let mut v = 0.0;
        for m in 0..kk {
            for l in 0..kk {
                v += bread[a][m] * meat[m][l] * bread[l][a];
            }
        }
        variance[a] = v * factor;
    }
    let dist = StudentsT::new(0.0, 1.0, (g - 1) as f64).map_err(|e| EstimationError::InvalidSpec(e.to_string()))?;

    let mut coefficients = vec![None; k];
    let mut estimates = Vec::new();
    for &col in &ls.kept {
        coefficients[candidates[col]] = ls.coefficients[col];
    }
    for j in 0..k {
        let Some(coefficient) = coefficients[j] else { continue };
        let a = ls.kept.iter().position(|&c| candidates[c] == j).expect("kept term");
        let se = variance[a].max(0.0).sqrt();
        let t = coefficient / se;
        let p = if se > 0.0 { 2.0 * (1.0 - dist.cdf(t.abs())) } else { f64::NAN };
        estimates.push(TermEstimate { term: spec.regressors[j].name(), coefficient, clustered_se: se, t, p });
    }
    let ssr: f64 = ls.residuals.iter().map(|e| e * e).sum();
    let sst: f64 = y.iter().map(|v| v * v).sum();
    let r_squared_within = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    Ok((
        FitResult {
            outcome: spec.outcome.clone(),
            estimates,
            dropped: dropped.iter().map(|&j| spec.regressors[j].name()).collect(),
            r_squared_within,
            n_obs: n,
            clusters: g,
            iterations: dm.iterations,
            delta: dm.delta,
        },
        coefficients,
    ))
}

/// Regime-switch design on a panel with an incentive change.
#[derive(Debug, Clone, PartialEq)]
pub struct DidSpec {
    /// Inclusive contest-week window; must contain weeks on both sides of
    /// the switch.
    pub window: (u32, u32),
    pub outcome: String,
    /// Placebo switch week before the real one.
    pub fake_after: Option<u32>,
    /// Weeks at which the post period is split into separate terms.
    pub post_splits: Vec<u32>,
    pub cluster: String,
}

impl DidSpec {
    pub fn new(window: (u32, u32)) -> Self {
        Self { window, outcome: "zero_star".into(), fake_after: None, post_splits: Vec::new(), cluster: "submission_id".into() }
    }
}

pub const DID_TERM: &str = "submitted_same_contest:after";
pub const PLACEBO_TERM: &str = "submitted_same_contest:fake_after";

/// Within-rater difference-in-differences of the outcome between competing
/// and neutral ratings, before versus after the incentive change. Own
/// ratings get their own before/after terms so the competing terms describe
/// ratings of rivals only.
pub fn did_incentive_experiment(panel: &RatingPanel, spec: &DidSpec) -> Result<FitResult, EstimationError> {
    let switch = panel.incentive_week.ok_or(EstimationError::NoIncentiveChange)?;
    let (start, end) = spec.window;
    if !(start < switch && switch <= end) {
        return Err(EstimationError::InvalidWindow { start, end, switch });
    }
    if let Some(fake) = spec.fake_after {
        if !(start < fake && fake < switch) {
            return Err(EstimationError::InvalidSpec(format!("placebo week {fake} must lie strictly between {start} and {switch}")));
        }
    }
    let mut splits = spec.post_splits.clone();
    splits.sort_unstable();
    if splits.iter().any(|&s| s <= switch || s > end) {
        return Err(EstimationError::InvalidSpec("post-period splits must lie after the switch and inside the window".into()));
    }

    let full = ModelFrame::from_panel(panel);
    let weeks = full.numeric("contest_week")?.to_vec();
    let mut frame = full.filter(|i| weeks[i] >= f64::from(start) && weeks[i] <= f64::from(end));
    if frame.is_empty() {
        return Err(EstimationError::EmptyPanel);
    }
    let week = frame.numeric("contest_week")?.to_vec();
    let indicator = |from: u32, to: Option<u32>| -> Vec<f64> {
        week.iter()
            .map(|&w| f64::from(u8::from(w >= f64::from(from) && to.is_none_or(|t| w < f64::from(t)))))
            .collect()
    };

    let mut regressors = vec![
        Term::main("submitted_same_contest"),
        Term::main("rate_own_submission"),
        Term::interaction("rate_own_submission", "after"),
    ];
    frame.add_numeric("after", indicator(switch, None))?;
    if splits.is_empty() {
        regressors.push(Term::interaction("submitted_same_contest", "after"));
    } else {
        let mut bounds = vec![switch];
        bounds.extend(&splits);
        for (q, from) in bounds.iter().enumerate() {
            let name = format!("after_{}", q + 1);
            frame.add_numeric(&name, indicator(*from, bounds.get(q + 1).copied()))?;
            regressors.push(Term::interaction("submitted_same_contest", &name));
        }
    }
    if let Some(fake) = spec.fake_after {
        frame.add_numeric("fake_after", indicator(fake, None))?;
        regressors.push(Term::interaction("submitted_same_contest", "fake_after"));
    }
    let reg = RegressionSpec::new(&spec.outcome, regressors).clustered_by(&spec.cluster);
    fit(&frame, &reg)
}

/// Observed-minus-counterfactual ratings aggregated per submission.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionScore {
    pub submission_id: u32,
    pub target_skill: f64,
    /// Competitor ratings of the submission (own ratings excluded).
    pub competitor_ratings: usize,
    /// Sum of residuals: observed 0-stars beyond the counterfactual.
    pub excess_zeros: f64,
    /// Mean residual; positive means more 0-stars than a neutral rater
    /// would give.
    pub sabotage_received: f64,
    /// Mean shortfall of 0-stars (counterfactual minus observed, floored
    /// at zero).
    pub leniency: f64,
}

/// Residual of every competitor rating against a neutral-rater
/// counterfactual: the fitted value with every term involving one of
/// `strategic_columns` switched off, fixed effects kept.
pub fn sabotage_residuals(
    panel: &RatingPanel,
    spec: &RegressionSpec,
    strategic_columns: &[&str],
) -> Result<Vec<SubmissionScore>, EstimationError> {
    let frame = ModelFrame::from_panel(panel);
    let d = design(&frame, spec)?;
    let (_, coefficients) = fit_design(&d, spec)?;
    let n = d.y.len();
    // y - X b on raw data = fixed effects + noise; demeaning strips the noise
    let mut r = d.y.clone();
    for (j, c) in coefficients.iter().enumerate() {
        if let Some(b) = c {
            for (ri, x) in r.iter_mut().zip(&d.x[j]) {
                *ri -= b * x;
            }
        }
    }
    let noise = demean_two_way(&[r.clone()], &d.fe1, &d.fe2, DEMEAN_TOLERANCE, DEMEAN_MAX_ITERATIONS)?;
    let mut counterfactual: Vec<f64> = r.iter().zip(&noise.columns[0]).map(|(a, b)| a - b).collect();
    for (j, c) in coefficients.iter().enumerate() {
        let term = &spec.regressors[j];
        if strategic_columns.iter().any(|s| term.involves(s)) {
            continue;
        }
        if let Some(b) = c {
            for (cf, x) in counterfactual.iter_mut().zip(&d.x[j]) {
                *cf += b * x;
            }
        }
    }

    let mut acc: BTreeMap<u32, (f64, usize, f64, f64)> = BTreeMap::new();
    for i in 0..n {
        let row = &panel.rows[d.rows[i]];
        if !row.submitted_same_contest || row.rate_own_submission {
            continue;
        }
        let resid = d.y[i] - counterfactual[i];
        let e = acc.entry(row.submission_id).or_insert((row.target_skill, 0, 0.0, 0.0));
        e.1 += 1;
        e.2 += resid;
        e.3 += (-resid).max(0.0);
    }
    Ok(acc
        .into_iter()
        .map(|(submission_id, (target_skill, count, sum, lenient))| SubmissionScore {
            submission_id,
            target_skill,
            competitor_ratings: count,
            excess_zeros: sum,
            sabotage_received: sum / count as f64,
            leniency: lenient / count as f64,
        })
        .collect())
}

/// Spread of a rater's weekly ratings on competing status, with rater and
/// week effects, clustered by rater.
pub fn dispersion_regression(rows: &[DispersionRow]) -> Result<FitResult, EstimationError> {
    let frame = ModelFrame::from_dispersion(rows);
    let spec = RegressionSpec::new("std_dev", vec![Term::main("submitted_same_contest")])
        .with_fixed_effects("rater_id", "contest_week")
        .clustered_by("rater_id");
    fit(&frame, &spec)
}

fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Side-by-side text table: one column per model, coefficient with
/// significance stars over the clustered SE in parentheses.
pub fn render_table(models: &[(&str, &FitResult)]) -> String {
    let mut terms: Vec<String> = Vec::new();
    for (_, m) in models {
        for e in &m.estimates {
            if !terms.contains(&e.term) {
                terms.push(e.term.clone());
            }
        }
    }
    let label_w = terms.iter().map(String::len).chain(["Observations".len()]).max().unwrap_or(12) + 2;
    let col_w = models.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(14) + 2;
    let mut out = String::new();
    let rule = "-".repeat(label_w + col_w * models.len());
    let _ = writeln!(out, "{:label_w$}{}", "", models.iter().map(|(n, _)| format!("{n:>col_w$}")).collect::<String>());
    let _ = writeln!(out, "{:label_w$}{}", "", models.iter().map(|(_, m)| format!("{:>col_w$}", m.outcome)).collect::<String>());
    let _ = writeln!(out, "{rule}");
    for term in &terms {
        let mut coef = format!("{term:label_w$}");
        let mut se = format!("{:label_w$}", "");
        for (_, m) in models {
            match m.get(term) {
                Some(e) => {
                    let _ = write!(coef, "{:>col_w$}", format!("{:.4}{}", e.coefficient, stars(e.p)));
                    let _ = write!(se, "{:>col_w$}", format!("({:.4})", e.clustered_se));
                }
                None => {
                    let _ = write!(coef, "{:>col_w$}", "");
                    let _ = write!(se, "{:>col_w$}", "");
                }
            }
        }
        let _ = writeln!(out, "{coef}");
        let _ = writeln!(out, "{se}");
    }
    let _ = writeln!(out, "{rule}");
    let mut obs = format!("{:label_w$}", "Observations");
    let mut r2 = format!("{:label_w$}", "Within R2");
    for (_, m) in models {
        let _ = write!(obs, "{:>col_w$}", m.n_obs);
        let _ = write!(r2, "{:>col_w$}", format!("{:.4}", m.r_squared_within));
    }
    let _ = writeln!(out, "{obs}");
    let _ = writeln!(out, "{r2}");
    let _ = writeln!(out, "Clustered standard errors in parentheses. *** p<0.001, ** p<0.01, * p<0.05");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_group_second_factor_is_one_way() {
        let x = vec![1.0, 2.0, 6.0, 4.0, 5.0];
        let fe1 = vec![0, 0, 1, 1, 1];
        let fe2 = vec![0; 5];
        let d = demean_two_way(&[x], &fe1, &fe2, 1e-12, 100).unwrap();
        let expected = [-0.5, 0.5, 1.0, -1.0, 0.0];
        for (a, b) in d.columns[0].iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn balanced_two_by_two_closed_form() {
        // x_ij - xbar_i. - xbar_.j + xbar..
        let x = vec![1.0, 4.0, 2.0, 9.0];
        let fe1 = vec![0, 0, 1, 1];
        let fe2 = vec![0, 1, 0, 1];
        let d = demean_two_way(&[x.clone()], &fe1, &fe2, 1e-14, 100).unwrap();
        let row = [2.5, 5.5];
        let col = [1.5, 6.5];
        let grand = 4.0;
        for i in 0..4 {
            let want = x[i] - row[fe1[i]] - col[fe2[i]] + grand;
            assert!((d.columns[0][i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn nonconvergence_reports_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let fe1: Vec<usize> = (0..n).map(|i| i % 20).collect();
        let fe2: Vec<usize> = (0..n).map(|i| (i / 3) % 15).collect();
        let err = demean_two_way(&[x], &fe1, &fe2, 1e-15, 1).unwrap_err();
        assert!(matches!(err, EstimationError::NonConvergence { iterations: 1, .. }));
    }

    fn random_frame(seed: u64, n: usize) -> ModelFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = ModelFrame::new(n);
        let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..12)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..9)).collect();
        let x1: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let x2: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
        let y: Vec<f64> =
            (0..n).map(|i| 0.3 * x1[i] - 0.2 * x2[i] + f64::from(a[i]) * 0.05 + f64::from(b[i]) * 0.1 + rng.random::<f64>()).collect();
        f.add_numeric("y", y).unwrap();
        f.add_numeric("x1", x1).unwrap();
        f.add_numeric("x2", x2).unwrap();
        f.add_categorical("a", a).unwrap();
        f.add_categorical("b", b).unwrap();
        f
    }

    fn dummy_ols(frame: &ModelFrame, terms: &[&str]) -> Vec<f64> {
        let n = frame.len();
        let (a, ga) = encode_groups(frame.categorical("a").unwrap());
        let (b, gb) = encode_groups(frame.categorical("b").unwrap());
        let k = terms.len() + ga + gb - 1;
        let x = DMatrix::from_fn(n, k, |i, j| {
            if j < terms.len() {
                frame.numeric(terms[j]).unwrap()[i]
            } else if j < terms.len() + ga {
                f64::from(u8::from(a[i] == j - terms.len()))
            } else {
                f64::from(u8::from(b[i] == j - terms.len() - ga + 1))
            }
        });
        let y = DVector::from_column_slice(frame.numeric("y").unwrap());
        let beta = x.svd(true, true).solve(&y, 1e-12).unwrap();
        beta.iter().take(terms.len()).copied().collect()
    }

    #[test]
    fn matches_dummy_variable_ols() {
        let frame = random_frame(5, 200);
        let spec = RegressionSpec::new("y", vec![Term::main("x1"), Term::main("x2")]).with_fixed_effects("a", "b").clustered_by("a");
        let fit = fit(&frame, &spec).unwrap();
        let oracle = dummy_ols(&frame, &["x1", "x2"]);
        assert_relative_eq!(fit.get("x1").unwrap().coefficient, oracle[0], max_relative = 1e-6);
        assert_relative_eq!(fit.get("x2").unwrap().coefficient, oracle[1], max_relative = 1e-6);
        assert!(fit.estimates.iter().all(|e| e.clustered_se > 0.0));
        assert_eq!(fit.n_obs, 200);
    }

    #[test]
    fn absorbed_and_collinear_terms_drop_by_name() {
        let mut frame = random_frame(6, 150);
        let a: Vec<f64> = frame.categorical("a").unwrap().iter().map(|&v| f64::from(v)).collect();
        let twice: Vec<f64> = frame.numeric("x1").unwrap().iter().map(|v| 2.0 * v).collect();
        frame.add_numeric("a_level", a).unwrap();
        frame.add_numeric("x1_twice", twice).unwrap();
        let spec = RegressionSpec::new("y", vec![Term::main("x1"), Term::main("a_level"), Term::main("x1_twice")])
            .with_fixed_effects("a", "b")
            .clustered_by("b");
        let fit = fit(&frame, &spec).unwrap();
        assert_eq!(fit.estimates.len(), 1);
        assert!(fit.dropped.contains(&"a_level".to_string()));
        assert_eq!(fit.dropped.len(), 2);
    }

    #[test]
    fn spec_errors() {
        let frame = random_frame(7, 50);
        let missing = RegressionSpec::new("y", vec![Term::main("nope")]).with_fixed_effects("a", "b").clustered_by("a");
        assert!(matches!(fit(&frame, &missing), Err(EstimationError::MissingColumn(_))));
        let overlap = RegressionSpec::new("y", vec![Term::interaction("y", "x1")]).with_fixed_effects("a", "b").clustered_by("a");
        assert!(matches!(fit(&frame, &overlap), Err(EstimationError::InvalidSpec(_))));
        let mut one = random_frame(7, 50);
        one.add_categorical("c", vec![3; 50]).unwrap();
        let single = RegressionSpec::new("y", vec![Term::main("x1")]).with_fixed_effects("a", "b").clustered_by("c");
        assert!(matches!(fit(&one, &single), Err(EstimationError::TooFewClusters(1))));
        let empty = ModelFrame::from_panel(&RatingPanel::default());
        assert!(matches!(fit(&empty, &RegressionSpec::sabotage()), Err(EstimationError::EmptyPanel)));
    }

    #[test]
    fn did_window_must_straddle_switch() {
        let panel = RatingPanel { incentive_week: Some(10), ..Default::default() };
        let err = did_incentive_experiment(&panel, &DidSpec::new((10, 20))).unwrap_err();
        assert!(matches!(err, EstimationError::InvalidWindow { start: 10, end: 20, switch: 10 }));
        let none = RatingPanel::default();
        assert!(matches!(did_incentive_experiment(&none, &DidSpec::new((0, 5))), Err(EstimationError::NoIncentiveChange)));
    }

    #[test]
    fn table_lists_every_term() {
        let frame = random_frame(8, 120);
        let spec = RegressionSpec::new("y", vec![Term::main("x1"), Term::main("x2")]).with_fixed_effects("a", "b").clustered_by("a");
        let f = fit(&frame, &spec).unwrap();
        let t = render_table(&[("(1)", &f)]);
        assert!(t.contains("x1") && t.contains("x2") && t.contains("Observations"));
    }
}
