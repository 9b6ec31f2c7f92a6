//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the output; exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use contestlab::contest::{
    agent_values, marginal_sabotage_gain, performance_gap, sabotage_bounds, self_promotion_gain, AgentType,
    ContestConfig, StrategyProfile,
};
use contestlab::econometrics::{
    did_incentive_experiment, encode_groups, fit, fit_panel, DidSpec, ModelFrame, RegressionSpec, Term, DID_TERM,
    PLACEBO_TERM,
};
use contestlab::equilibrium::{classify, verify_regions, EquilibriumId, PointKind};
use contestlab::io::Scenario;
use contestlab::ranking::{strategic_removal_study, RemovalOptions, Variant};
use contestlab::sim::{simulate, IncentiveChange, SimConfig};
use contestlab::Rational;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use AgentType::{High, Low};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&path).unwrap()
}

fn q(n: i128, d: i128) -> Rational {
    Rational::new(n, d)
}

fn b8_exact() -> ContestConfig<Rational> {
    ContestConfig::new(100, 30, 10, q(1, 5), q(4, 5), q(5000, 1), q(0, 1), q(0, 1)).unwrap()
}

fn b8() -> ContestConfig<f64> {
    scenario("b8.toml").contest.config().unwrap()
}

fn gap() -> Outcome {
    let exact = performance_gap(&b8_exact());
    let g = performance_gap(&b8());
    let expect = 0.8 / 0.2 * 101.0 / 140.0;
    outcome(
        (g.gap - expect).abs() < 1e-9 && g.satisfied && exact.gap == q(404, 140),
        format!("g = {:.10}, expected {expect:.10}, satisfied={}", g.gap, g.satisfied),
    )
}

fn structure() -> Outcome {
    let config = b8();
    let c = classify(&config).unwrap();
    let ids: Vec<EquilibriumId> = c.regions().iter().map(|r| r.label.id).collect();
    let ordered = ids == EquilibriumId::ALL;
    // NE3..NE7 tile the sabotage-cost axis from high to low
    let tiled = c.regions()[2..].windows(2).all(|w| w[1].c_s_interval.high == Some(w[0].c_s_interval.low));
    let c_p = scenario("b8.toml").sweep.promotion_cost.unwrap_or(0.01);
    let ne4 = c.region(EquilibriumId::Ne4).c_s_interval;
    let (lo, hi) = (ne4.low, ne4.high.unwrap());
    let labelled = c_p < c.low_promotion_threshold() && c.label_at((lo + hi) / 2.0, c_p) == Some(EquilibriumId::Ne4);
    let overlaps = lo < 0.23 && hi > 0.06;
    let close = ((lo - 0.06) / 0.06).abs() <= 0.3 && ((hi - 0.23) / 0.23).abs() <= 0.3;
    outcome(
        ordered && tiled && labelled && overlaps && close,
        format!(
            "{} regions in order={ordered}, tiled={tiled}, NE4 at c_p={c_p}: ({lo:.4}, {hi:.4}] vs (0.06, 0.23): \
             overlap={overlaps}, endpoints {:+.0}% / {:+.0}%",
            ids.len(),
            100.0 * (lo - 0.06) / 0.06,
            100.0 * (hi - 0.23) / 0.23
        ),
    )
}

fn nash() -> Outcome {
    let c = classify(&b8_exact()).unwrap();
    let points = verify_regions(&c, 10, q(1, 1000)).unwrap();
    let mut per_region: BTreeMap<EquilibriumId, (usize, usize, usize)> = BTreeMap::new();
    for p in &points {
        let e = per_region.entry(p.id).or_default();
        match p.kind {
            PointKind::Interior => e.0 += usize::from(p.passed()),
            _ => {
                e.1 += usize::from(p.passed());
                e.2 += 1;
            }
        }
    }
    let failed = points.iter().filter(|p| !p.passed()).count();
    let complete = per_region.len() == 7 && per_region.values().all(|(i, b, n)| *i == 10 && *n >= 1 && b == n);
    outcome(failed == 0 && complete, format!("{} points over {} regions, {failed} failed", points.len(), per_region.len()))
}

fn random_config(rng: &mut ChaCha8Rng) -> ContestConfig<f64> {
    let h = rng.random_range(2..20);
    let l = h + rng.random_range(1..30);
    let n = l + rng.random_range(1..150);
    let bl = rng.random_range(0.01..0.98);
    let bh = bl + (0.99 - bl) * rng.random_range(0.001..1.0);
    ContestConfig::new(n, l, h, bl, bh, 1.0, 0.0, 0.0).unwrap()
}

fn lemmas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut configs = Vec::new();
    while configs.len() < 1000 {
        let c = random_config(&mut rng);
        let valid = performance_gap(&c).satisfied
            && EquilibriumId::ALL.iter().all(|id| agent_values(&c, &id.profile(&c)).is_ok());
        if valid {
            configs.push(c);
        }
    }
    let (mut a1, mut a3, mut a4, mut a6) = (0, 0, 0, 0);
    for c in &configs {
        let v = agent_values(c, &StrategyProfile::sincere()).unwrap();
        a1 += usize::from(self_promotion_gain(c, &v, Low) <= self_promotion_gain(c, &v, High));
        let mut a3_bad = false;
        let mut a4_bad = false;
        for attacker in [High, Low] {
            let promote = self_promotion_gain(c, &v, attacker);
            for target in [High, Low] {
                let gains: Vec<f64> = (0..c.max_targets(attacker, target))
                    .map(|k| marginal_sabotage_gain(c, &v, attacker, target, k).unwrap())
                    .collect();
                a3_bad |= gains.windows(2).any(|w| w[1] <= w[0]);
                a4_bad |= gains.iter().any(|g| promote <= *g);
            }
        }
        a3 += usize::from(a3_bad);
        a4 += usize::from(a4_bad);
        let hits_high = [High, Low].iter().all(|&a| {
            marginal_sabotage_gain(c, &v, a, High, 0).unwrap() > marginal_sabotage_gain(c, &v, a, Low, 0).unwrap()
        });
        let b = sabotage_bounds(c).unwrap();
        a6 += usize::from(!(hits_high && b.low_sab_high > b.high_sab_low));
    }
    outcome(
        a1 + a3 + a4 + a6 == 0,
        format!("{} configs; violations: A.1 {a1}, A.3 {a3}, A.4 {a4}, A.6+order {a6}", configs.len()),
    )
}

const TERMS: [&str; 3] = ["x1", "x2", "x1:x2"];

fn random_frame(rng: &mut ChaCha8Rng) -> ModelFrame {
    let n = rng.random_range(50..=500);
    let (ga, gb) = (rng.random_range(2..30u32), rng.random_range(2..20u32));
    let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..ga)).collect();
    let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..gb)).collect();
    let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let x2: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 0.3 * x1[i] - 0.2 * x2[i] + 0.5 * x1[i] * x2[i] + 0.1 * f64::from(a[i] % 7) + rng.random::<f64>())
        .collect();
    let mut f = ModelFrame::new(n);
    f.add_numeric("y", y).unwrap();
    f.add_numeric("x1", x1).unwrap();
    f.add_numeric("x2", x2).unwrap();
    f.add_categorical("a", a).unwrap();
    f.add_categorical("b", b).unwrap();
    f
}

// OLS on the terms plus dummies for every level of `a` and all but one of `b`
fn dummy_ols(frame: &ModelFrame) -> Vec<f64> {
    let (a, ga) = encode_groups(frame.categorical("a").unwrap());
    let (b, gb) = encode_groups(frame.categorical("b").unwrap());
    let cols: Vec<Vec<f64>> = TERMS
        .iter()
        .map(|t| t.split(':').fold(vec![1.0; frame.len()], |acc, c| acc.iter().zip(frame.numeric(c).unwrap()).map(|(x, y)| x * y).collect()))
        .collect();
    let k = TERMS.len();
    let x = DMatrix::from_fn(frame.len(), k + ga + gb - 1, |i, j| {
        if j < k {
            cols[j][i]
        } else if j < k + ga {
            f64::from(u8::from(a[i] == j - k))
        } else {
            f64::from(u8::from(b[i] == j - k - ga + 1))
        }
    });
    let y = DVector::from_column_slice(frame.numeric("y").unwrap());
    let beta = (x.transpose() * &x).try_inverse().expect("full-rank design") * x.transpose() * y;
    beta.iter().take(k).copied().collect()
}

fn fe_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = RegressionSpec::new("y", TERMS.iter().map(|t| Term::parse(t)).collect()).with_fixed_effects("a", "b").clustered_by("a");
    let mut worst: f64 = 0.0;
    let mut panels = 0;
    while panels < 100 {
        let frame = random_frame(&mut rng);
        let (_, ga) = encode_groups(frame.categorical("a").unwrap());
        let (_, gb) = encode_groups(frame.categorical("b").unwrap());
        // skip the rare draw whose dummy design cannot be inverted
        if frame.len() <= TERMS.len() + ga + gb {
            continue;
        }
        let got = fit(&frame, &spec).unwrap();
        for (term, expect) in TERMS.iter().zip(dummy_ols(&frame)) {
            let b = got.get(term).unwrap().coefficient;
            worst = worst.max((b - expect).abs() / expect.abs().max(1e-3));
        }
        panels += 1;
    }
    outcome(worst <= 1e-6, format!("{panels} panels, worst relative error {worst:.2e}"))
}

fn recovery() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut placebo_misses = 0;
    for uplift in [0.01, 0.02, 0.05] {
        let mut covered = 0;
        for seed in 0..50 {
            let config = SimConfig {
                seed: 1000 + seed,
                incentive_change: Some(IncentiveChange { week: 25, prize: None, sabotage_uplift: uplift }),
                ..SimConfig::default()
            };
            let panel = simulate(&config).unwrap();
            let spec = DidSpec { fake_after: Some(12), ..DidSpec::new((0, 49)) };
            let f = did_incentive_experiment(&panel, &spec).unwrap();
            let did = f.get(DID_TERM).unwrap();
            covered += usize::from((did.coefficient - uplift).abs() <= 1.96 * did.clustered_se);
            let placebo = f.get(PLACEBO_TERM).unwrap();
            placebo_misses += usize::from(placebo.coefficient.abs() > 3.0 * placebo.clustered_se);
        }
        pass &= covered >= 45;
        lines.push(format!("uplift {uplift}: coverage {covered}/50"));
    }
    pass &= placebo_misses == 0;
    lines.push(format!("placebo beyond 3 SE in {placebo_misses}/150 runs"));
    outcome(pass, lines.join("; "))
}

fn targeting() -> Outcome {
    let s = scenario("ne4.toml");
    let panel = simulate(s.simulation.as_ref().unwrap()).unwrap();
    let get = |name: &str| s.regression.iter().find(|r| r.name == name).unwrap().spec();
    let sab = fit_panel(&panel, &get("sabotage_by_skill")).unwrap();
    let promo = fit_panel(&panel, &get("promotion_by_skill")).unwrap();
    let source = sab.get("submitted_same_contest:source_skill").unwrap();
    let target = sab.get("submitted_same_contest:target_skill").unwrap();
    let own = promo.get("rate_own_submission:source_skill").unwrap();
    outcome(
        source.coefficient > 0.0 && source.p < 0.01 && target.coefficient > 0.0 && target.p < 0.01 && own.coefficient < 0.0,
        format!(
            "submitted x source {:.3} (p={:.1e}), submitted x target {:.3} (p={:.1e}), own x source {:.3}",
            source.coefficient, source.p, target.coefficient, target.p, own.coefficient
        ),
    )
}

fn calibration() -> Outcome {
    let runs = 20;
    let ne4 = scenario("ne4.toml").simulation.unwrap();
    let (mut inside, mut above) = (0, 0);
    let mut slowest = Duration::ZERO;
    for r in 0..runs {
        let options = RemovalOptions { replications: 500, seed: 77 + r, ..RemovalOptions::default() };
        let start = Instant::now();
        let null_panel = simulate(&SimConfig { seed: 500 + r, ..SimConfig::default() }).unwrap();
        let report = strategic_removal_study(&null_panel, &options).unwrap();
        slowest = slowest.max(start.elapsed());
        let (lo, hi) = report.null.winner_band95();
        let rate = report.variant(Variant::CompetitorVotes).winner_change_rate();
        inside += usize::from(rate >= lo && rate <= hi);

        let panel = simulate(&SimConfig { seed: 900 + r, ..ne4.clone() }).unwrap();
        let report = strategic_removal_study(&panel, &options).unwrap();
        above += usize::from(report.variant(Variant::CompetitorVotes).winner_change_rate() > report.null.mean_winner_change());
    }
    let need = |share: f64| (share * runs as f64).ceil() as u64;
    outcome(
        inside as u64 >= need(0.9) && above as u64 >= need(0.95) && slowest < Duration::from_secs(180),
        format!("null inside band {inside}/{runs}, NE4 above null mean {above}/{runs}, slowest run {:.1}s", slowest.as_secs_f64()),
    )
}

fn digest_dir(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let hash = Sha256::digest(std::fs::read(&path).unwrap());
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), hash.iter().map(|b| format!("{b:02x}")).collect());
    }
    out
}

fn determinism() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let runs: [(&str, &str, &[&str]); 6] = [
        ("bounds", "b8.toml", &[]),
        ("sweep", "b8.toml", &[]),
        ("verify", "b8.toml", &[]),
        ("simulate", "recovery.toml", &[]),
        ("estimate", "recovery.toml", &[]),
        ("rank", "ne4.toml", &["--replications", "100"]),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut bad = Vec::new();
    let mut files = 0;
    for (command, file, extra) in runs {
        let digests: Vec<_> = (0..2)
            .map(|i| {
                let out: PathBuf = tmp.path().join(format!("{command}-{i}"));
                let status = Command::new(env!("CARGO_BIN_EXE_contestlab"))
                    .arg(command)
                    .arg("--scenario")
                    .arg(root.join(file))
                    .args(["--seed", "42", "--out"])
                    .arg(&out)
                    .args(extra)
                    .env("CONTESTLAB_THREADS", "2")
                    .output()
                    .unwrap();
                assert!(status.status.success(), "{command}: {}", String::from_utf8_lossy(&status.stderr));
                digest_dir(&out)
            })
            .collect();
        let csvs = digests[0].keys().filter(|k| k.ends_with(".csv")).count();
        files += digests[0].len();
        if digests[0] != digests[1] || csvs == 0 {
            bad.push(command);
        }
    }
    outcome(bad.is_empty(), format!("6 commands, {files} files compared, differing: {bad:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("1 performance gap", gap, Duration::from_secs(1)),
        ("2 equilibrium structure", structure, Duration::from_secs(1)),
        ("3 Nash verification", nash, Duration::from_secs(10)),
        ("4 lemma properties", lemmas, Duration::from_secs(30)),
        ("5 FE-OLS oracle", fe_oracle, Duration::from_secs(60)),
        ("6 effect recovery", recovery, Duration::from_secs(300)),
        ("7 skill targeting", targeting, Duration::from_secs(300)),
        ("8 ranking calibration", calibration, Duration::from_secs(180)),
        ("9 determinism", determinism, Duration::from_secs(600)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "{} criterion {name}: {} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
