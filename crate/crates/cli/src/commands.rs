use std::fs;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use num_traits::ToPrimitive;

use contestlab::contest::{
    agent_values, performance_gap, sabotage_bounds, self_promotion_gain, AgentType, ContestConfig, StrategyProfile,
};
use contestlab::econometrics::{
    did_incentive_experiment, dispersion_regression, fit_panel, render_table, sabotage_residuals, FitResult, RegressionSpec,
};
use contestlab::equilibrium::{
    classify, default_grid, log_grid, sweep_costs, verify_regions, EquilibriumId, NashVerdict, PromotionCost,
    VerificationPoint,
};
use contestlab::io::{fmt_f64, fmt_opt, read_panel, sweep_svg, write_csv, write_panel, Scenario};
use contestlab::ranking::strategic_removal_study;
use contestlab::sim::{rating_dispersion, simulate as run_simulation, summarize, RatingPanel};
use contestlab::{FormatError, Rational, Scalar};

use crate::{CliError, Common};

struct Context {
    scenario: Scenario,
    seed: u64,
    out: PathBuf,
}

impl Context {
    fn load(common: &Common) -> Result<Self, CliError> {
        let mut scenario = Scenario::load(&common.scenario)?;
        if let Some(r) = common.replications {
            scenario.ranking.replications = r;
        }
        let seed = common.seed.unwrap_or(scenario.seed);
        scenario.seed = seed;
        if let Some(sim) = scenario.simulation.as_mut() {
            sim.seed = seed;
        }
        scenario.validate()?;
        let out = common.out.clone().or_else(|| scenario.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out)?;
        Ok(Self { scenario, seed, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn csv(&self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
        write_csv(&self.path(name), self.seed, &[("scenario", self.scenario.name.replace(' ', "_"))], header, rows)?;
        Ok(())
    }

    fn panel(&self, path: Option<&Path>) -> Result<RatingPanel, CliError> {
        match path {
            Some(p) => Ok(read_panel(p)?),
            None => {
                let sim = self
                    .scenario
                    .simulation
                    .as_ref()
                    .ok_or_else(|| FormatError::Invalid("no [simulation] section and no --panel given".into()))?;
                Ok(run_simulation(sim)?)
            }
        }
    }
}

fn row(items: &[&dyn ToString]) -> Vec<String> {
    items.iter().map(|i| i.to_string()).collect()
}

pub fn bounds(common: &Common) -> Result<(), CliError> {
    let ctx = Context::load(common)?;
    let config = ctx.scenario.contest.config()?;
    let gap = performance_gap(&config);
    let mut rows = vec![
        vec!["performance_gap".into(), fmt_f64(gap.gap)],
        vec!["gap_satisfied".into(), u8::from(gap.satisfied).to_string()],
    ];
    let sincere = agent_values(&config, &StrategyProfile::sincere())?;
    rows.push(vec!["value_high".into(), fmt_f64(sincere.high())]);
    rows.push(vec!["value_low".into(), fmt_f64(sincere.low())]);
    rows.push(vec!["value_total".into(), fmt_f64(sincere.total())]);
    let prize = config.prize();
    for who in AgentType::BOTH {
        let name = format!("promotion_gain_{}", who.to_string().to_lowercase());
        rows.push(vec![name, fmt_f64(self_promotion_gain(&config, &sincere, who) * prize)]);
    }
    let header = ["quantity", "value"];
    if !gap.satisfied {
        ctx.csv("bounds.csv", &header, rows)?;
        return Err(ModelError::GapViolated { gap: gap.gap }.into());
    }
    let b = sabotage_bounds(&config)?.in_currency(prize);
    rows.push(vec!["high_sab_high".into(), fmt_opt(b.high_sab_high)]);
    rows.push(vec!["low_sab_high".into(), fmt_f64(b.low_sab_high)]);
    rows.push(vec!["high_sab_low".into(), fmt_f64(b.high_sab_low)]);
    rows.push(vec!["low_sab_low".into(), fmt_opt(b.low_sab_low)]);
    rows.push(vec!["alt_high_sab_low".into(), fmt_f64(b.alt_high_sab_low)]);
    rows.push(vec!["alt_low_sab_high".into(), fmt_f64(b.alt_low_sab_high)]);
    match classify(&config) {
        Ok(c) => {
            rows.push(vec!["low_promotion_threshold".into(), fmt_f64(c.low_promotion_threshold())]);
            rows.push(vec!["high_promotion_threshold".into(), fmt_f64(c.high_promotion_threshold())]);
            for (name, v) in ["ne7_ne6", "ne6_ne5", "ne5_ne4", "ne4_ne3"].iter().zip(c.sabotage_boundaries()) {
                rows.push(vec![format!("onset_{name}"), fmt_f64(v)]);
            }
        }
        Err(e) => log::warn!("no region map: {e}"),
    }
    for r in &rows {
        println!("{:<26} {}", r[0], r[1]);
    }
    ctx.csv("bounds.csv", &header, rows)
}

use contestlab::ModelError;

pub fn sweep(common: &Common) -> Result<(), CliError> {
    let ctx = Context::load(common)?;
    let config = ctx.scenario.contest.config()?;
    let classification = classify(&config)?;
    let s = &ctx.scenario.sweep;
    let promotion = s.promotion_cost.map_or(PromotionCost::SameAsSabotage, PromotionCost::Fixed);
    let grid = match (s.c_s_min, s.c_s_max) {
        (Some(a), Some(b)) => log_grid(a, b, s.points),
        (Some(a), None) if s.points == 1 => vec![a],
        _ => {
            let d = default_grid(&classification, promotion);
            log_grid(s.c_s_min.unwrap_or(d[0]), s.c_s_max.unwrap_or(d[d.len() - 1]), s.points)
        }
    };
    let result = sweep_costs(&config, &grid, promotion)?;
    let classes = |id: Option<EquilibriumId>| -> [String; 6] {
        match id {
            Some(id) => {
                let (h, l) = id.classes();
                [h.0, h.1, h.2, l.0, l.1, l.2].map(|b| u8::from(b).to_string())
            }
            None => Default::default(),
        }
    };
    let rows = result
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![fmt_f64(r.c_s), fmt_f64(r.c_p), r.label.map_or_else(String::new, |l| l.to_string())];
            v.extend(classes(r.label));
            v.push(fmt_opt(r.utility_high));
            v.push(fmt_opt(r.utility_low));
            v
        })
        .collect();
    ctx.csv(
        "sweep.csv",
        &[
            "c_s",
            "c_p",
            "label",
            "high_sabotage_high",
            "high_sabotage_low",
            "high_promote",
            "low_sabotage_high",
            "low_sabotage_low",
            "low_promote",
            "utility_high",
            "utility_low",
        ],
        rows,
    )?;
    let regions = classification
        .regions()
        .iter()
        .map(|r| {
            vec![
                r.label.id.to_string(),
                fmt_f64(r.c_s_interval.low),
                fmt_opt(r.c_s_interval.high),
                fmt_f64(r.c_p_condition.low),
                fmt_opt(r.c_p_condition.high),
            ]
        })
        .collect();
    ctx.csv("regions.csv", &["label", "c_s_low", "c_s_high", "c_p_low", "c_p_high"], regions)?;
    fs::write(ctx.path("sweep.svg"), sweep_svg(&result, &format!("{}: equilibria and utilities", ctx.scenario.name)))?;
    for (label, a, b) in result.segments() {
        println!("{:<5} c_s {:.6e} .. {:.6e}", label.map_or_else(|| "none".into(), |l| l.to_string()), a, b);
    }
    Ok(())
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    let ctx = Context::load(common)?;
    let panel = ctx.panel(None)?;
    write_panel(&ctx.path("panel.csv"), &panel)?;
    let summary = summarize(&panel);
    let rows = summary
        .cells
        .iter()
        .map(|c| {
            row(&[
                &u8::from(c.submitted_same_contest),
                &u8::from(c.rate_own_submission),
                &c.count,
                &fmt_f64(c.p_zero()),
                &fmt_f64(c.p_five()),
            ])
        })
        .collect();
    ctx.csv("summary.csv", &["submitted_same_contest", "rate_own_submission", "count", "p_zero_star", "p_five_star"], rows)?;
    println!("{} ratings over {} weeks", panel.len(), panel.week_ids().len());
    for c in &summary.cells {
        println!(
            "submitted={} own={} n={:>8} P(0)={:.4} P(5)={:.4}",
            u8::from(c.submitted_same_contest),
            u8::from(c.rate_own_submission),
            c.count,
            c.p_zero(),
            c.p_five()
        );
    }
    Ok(())
}

pub fn estimate(common: &Common, panel_path: Option<&Path>) -> Result<(), CliError> {
    let ctx = Context::load(common)?;
    let panel = ctx.panel(panel_path)?;
    let mut models: Vec<(String, FitResult)> = Vec::new();
    let specs: Vec<(String, RegressionSpec)> = if ctx.scenario.regression.is_empty() {
        vec![("sabotage".into(), RegressionSpec::sabotage()), ("promotion".into(), RegressionSpec::promotion())]
    } else {
        ctx.scenario.regression.iter().map(|r| (r.name.clone(), r.spec())).collect()
    };
    for (name, spec) in &specs {
        models.push((name.clone(), fit_panel(&panel, spec)?));
    }
    if let Some(did) = &ctx.scenario.did {
        if panel.incentive_week.is_some() {
            models.push(("did".into(), did_incentive_experiment(&panel, &did.spec())?));
        } else {
            log::warn!("[did] given but the panel has no incentive change; skipped");
        }
    }
    let dispersion = rating_dispersion(&panel);
    if !dispersion.is_empty() {
        match dispersion_regression(&dispersion) {
            Ok(fit) => models.push(("dispersion".into(), fit)),
            Err(e) => log::warn!("dispersion model skipped: {e}"),
        }
    }

    let mut est_rows = Vec::new();
    let mut model_rows = Vec::new();
    for (name, m) in &models {
        for e in &m.estimates {
            est_rows.push(vec![
                name.clone(),
                e.term.clone(),
                fmt_f64(e.coefficient),
                fmt_f64(e.clustered_se),
                fmt_f64(e.t),
                fmt_f64(e.p),
            ]);
        }
        model_rows.push(vec![
            name.clone(),
            m.outcome.clone(),
            m.n_obs.to_string(),
            m.clusters.to_string(),
            fmt_f64(m.r_squared_within),
            m.iterations.to_string(),
            fmt_f64(m.delta),
            m.dropped.join(";"),
        ]);
    }
    ctx.csv("estimates.csv", &["model", "term", "coefficient", "clustered_se", "t", "p"], est_rows)?;
    ctx.csv(
        "models.csv",
        &["model", "outcome", "n_obs", "clusters", "r_squared_within", "iterations", "delta", "dropped"],
        model_rows,
    )?;
    let named: Vec<(String, &FitResult)> = models.iter().map(|(n, m)| (format!("({n})"), m)).collect();
    let refs: Vec<(&str, &FitResult)> = named.iter().map(|(n, m)| (n.as_str(), *m)).collect();
    let table = render_table(&refs);
    fs::write(ctx.path("estimates.txt"), &table)?;
    print!("{table}");

    let scores = sabotage_residuals(&panel, &RegressionSpec::sabotage(), &["submitted_same_contest", "rate_own_submission"])?;
    let score_rows = scores
        .iter()
        .map(|s| {
            vec![
                s.submission_id.to_string(),
                fmt_f64(s.target_skill),
                s.competitor_ratings.to_string(),
                fmt_f64(s.excess_zeros),
                fmt_f64(s.sabotage_received),
                fmt_f64(s.leniency),
            ]
        })
        .collect();
    ctx.csv(
        "submission_scores.csv",
        &["submission_id", "target_skill", "competitor_ratings", "excess_zeros", "sabotage_received", "leniency"],
        score_rows,
    )
}

pub fn rank(common: &Common, panel_path: Option<&Path>) -> Result<(), CliError> {
    let ctx = Context::load(common)?;
    let panel = ctx.panel(panel_path)?;
    let options = ctx.scenario.ranking.options(ctx.seed)?;
    let report = strategic_removal_study(&panel, &options)?;
    let mut rows: Vec<Vec<String>> = report
        .variants
        .iter()
        .map(|v| {
            vec![
                v.variant.as_str().to_string(),
                v.contests.to_string(),
                v.recomputed.to_string(),
                v.removed_ratings.to_string(),
                v.removed_raters.to_string(),
                fmt_f64(v.winner_change_rate()),
                fmt_f64(v.top3_change_rate()),
            ]
        })
        .collect();
    let (lo, hi) = report.null.winner_band95();
    rows.push(vec![
        "random_raters".into(),
        report.contests.to_string(),
        String::new(),
        String::new(),
        String::new(),
        fmt_f64(report.null.mean_winner_change()),
        fmt_f64(report.null.mean_top3_change()),
    ]);
    ctx.csv(
        "ranking.csv",
        &["variant", "contests", "recomputed", "removed_ratings", "removed_raters", "winner_change_rate", "top3_change_rate"],
        rows,
    )?;
    let reps = report
        .null
        .replications
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.to_string(),
                fmt_f64(r.winner_change_rate),
                fmt_f64(r.top3_change_rate),
                fmt_f64(r.close_winner_change_rate),
                r.removed_ratings.to_string(),
            ]
        })
        .collect();
    ctx.csv(
        "null_replications.csv",
        &["replication", "winner_change_rate", "top3_change_rate", "close_winner_change_rate", "removed_ratings"],
        reps,
    )?;
    let summary = report.summary();
    fs::write(ctx.path("ranking.txt"), &summary)?;
    print!("{summary}");
    println!("null 95% band for winner change: [{lo:.4}, {hi:.4}]");
    Ok(())
}

fn exact(x: f64) -> Option<Rational> {
    let r = Ratio::<i128>::approximate_float(x)?;
    (r.to_f64() == Some(x) && *r.denom() <= 1_000_000).then_some(r)
}

fn exact_config(c: &ContestConfig<f64>) -> Option<ContestConfig<Rational>> {
    ContestConfig::new(
        c.outsiders(),
        c.lows(),
        c.highs(),
        exact(c.quality(AgentType::Low))?,
        exact(c.quality(AgentType::High))?,
        exact(c.prize())?,
        exact(c.sabotage_cost())?,
        exact(c.promotion_cost())?,
    )
    .ok()
}

fn point_row<T: Scalar>(p: &VerificationPoint<T>) -> Vec<String> {
    let (who, to, gain) = match &p.verdict {
        NashVerdict::Holds => (String::new(), String::new(), String::new()),
        NashVerdict::Deviation { who, to, gain, .. } => (who.to_string(), to.to_string(), fmt_f64(gain.to_f64_lossy())),
    };
    vec![
        p.id.to_string(),
        p.axis.as_str().to_string(),
        p.kind.as_str().to_string(),
        fmt_f64(p.c_s.to_f64_lossy()),
        fmt_f64(p.c_p.to_f64_lossy()),
        u8::from(p.verdict.holds()).to_string(),
        who,
        to,
        gain,
        u8::from(p.passed()).to_string(),
    ]
}

pub fn verify(common: &Common) -> Result<(), CliError> {
    let ctx = Context::load(common)?;
    let config = ctx.scenario.contest.config()?;
    let v = &ctx.scenario.verify;
    let (rows, failed, arithmetic) = match (exact_config(&config), exact(v.step)) {
        (Some(q), Some(step)) => {
            let points = verify_regions(&classify(&q)?, v.interior, step)?;
            let failed = points.iter().filter(|p| !p.passed()).count();
            (points.iter().map(point_row).collect::<Vec<_>>(), failed, "exact")
        }
        _ => {
            let points = verify_regions(&classify(&config)?, v.interior, v.step)?;
            let failed = points.iter().filter(|p| !p.passed()).count();
            (points.iter().map(point_row).collect::<Vec<_>>(), failed, "f64")
        }
    };
    let total = rows.len();
    ctx.csv(
        "verify.csv",
        &["label", "axis", "kind", "c_s", "c_p", "holds", "deviator", "deviation", "gain", "passed"],
        rows,
    )?;
    println!("{total} points checked ({arithmetic} arithmetic), {failed} failed");
    if failed > 0 {
        return Err(CliError::VerificationFailed(failed));
    }
    Ok(())
}
