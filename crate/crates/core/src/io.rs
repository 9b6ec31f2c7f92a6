//! Scenario files, CSV artifacts and the sweep plot.
//!
//! Every CSV starts with one comment line, `# contestlab <version> seed=<seed>`
//! plus any extra `key=value` pairs, followed by a header row.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contest::ContestConfig;
use crate::econometrics::{DidSpec, RegressionSpec, Term};
use crate::equilibrium::{EquilibriumId, SweepResult};
use crate::error::FormatError;
use crate::ranking::{Matching, RemovalOptions};
use crate::sim::{Intent, RatingPanel, RatingRow, SimConfig};
use crate::TOOL_VERSION;

pub const SCENARIO_SCHEMA: u32 = 1;
pub const PANEL_SCHEMA: u32 = 1;

pub const PANEL_HEADER: [&str; 11] = [
    "rater_id",
    "submitter_id",
    "submission_id",
    "contest_week",
    "rating",
    "submitted_same_contest",
    "rate_own_submission",
    "source_skill",
    "target_skill",
    "after_incentive_change",
    "true_intent",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContestSection {
    pub outsiders: usize,
    pub lows: usize,
    pub highs: usize,
    pub quality_low: f64,
    pub quality_high: f64,
    pub prize: f64,
    #[serde(default)]
    pub sabotage_cost: f64,
    #[serde(default)]
    pub promotion_cost: f64,
}

impl ContestSection {
    pub fn config(&self) -> Result<ContestConfig<f64>, crate::ModelError> {
        ContestConfig::new(
            self.outsiders,
            self.lows,
            self.highs,
            self.quality_low,
            self.quality_high,
            self.prize,
            self.sabotage_cost,
            self.promotion_cost,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub points: usize,
    /// Grid range; derived from the region boundaries when absent.
    pub c_s_min: Option<f64>,
    pub c_s_max: Option<f64>,
    /// Fixed promotion cost; when absent it moves with the sabotage cost.
    pub promotion_cost: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { points: 1000, c_s_min: None, c_s_max: None, promotion_cost: None }
    }
}

fn default_fe() -> [String; 2] {
    ["rater_id".into(), "submission_id".into()]
}

fn default_cluster() -> String {
    "submission_id".into()
}

fn default_outcome() -> String {
    "zero_star".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSection {
    pub name: String,
    pub outcome: String,
    /// Terms in `a:b` notation.
    pub regressors: Vec<String>,
    #[serde(default = "default_fe")]
    pub fixed_effects: [String; 2],
    #[serde(default = "default_cluster")]
    pub cluster: String,
}

impl RegressionSection {
    pub fn spec(&self) -> RegressionSpec {
        RegressionSpec::new(&self.outcome, self.regressors.iter().map(|t| Term::parse(t)).collect())
            .with_fixed_effects(&self.fixed_effects[0], &self.fixed_effects[1])
            .clustered_by(&self.cluster)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DidSection {
    pub window: [u32; 2],
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default)]
    pub fake_after: Option<u32>,
    #[serde(default)]
    pub post_splits: Vec<u32>,
    #[serde(default = "default_cluster")]
    pub cluster: String,
}

impl DidSection {
    pub fn spec(&self) -> DidSpec {
        DidSpec {
            window: (self.window[0], self.window[1]),
            outcome: self.outcome.clone(),
            fake_after: self.fake_after,
            post_splits: self.post_splits.clone(),
            cluster: self.cluster.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingSection {
    pub replications: usize,
    pub close_quantile: f64,
    /// `rating_count` or `rater_count`.
    pub matching: String,
    pub top_k: usize,
}

impl Default for RankingSection {
    fn default() -> Self {
        Self { replications: 500, close_quantile: 0.25, matching: "rating_count".into(), top_k: 1 }
    }
}

impl RankingSection {
    pub fn options(&self, seed: u64) -> Result<RemovalOptions, FormatError> {
        let matching = match self.matching.as_str() {
            "rating_count" => Matching::RatingCount,
            "rater_count" => Matching::RaterCount,
            other => return Err(FormatError::Invalid(format!("unknown matching `{other}`"))),
        };
        Ok(RemovalOptions {
            top_k: self.top_k,
            close_quantile: self.close_quantile,
            replications: self.replications,
            matching,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub interior: usize,
    /// Relative distance beyond each Nash range end.
    pub step: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { interior: 10, step: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub contest: ContestSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub simulation: Option<SimConfig>,
    #[serde(default)]
    pub regression: Vec<RegressionSection>,
    #[serde(default)]
    pub did: Option<DidSection>,
    #[serde(default)]
    pub ranking: RankingSection,
    #[serde(default)]
    pub verify: VerifySection,
}

impl Scenario {
    /// Parses and checks the version header; no semantic validation.
    pub fn parse(text: &str, path: &str) -> Result<Self, FormatError> {
        let parse_err = |message: String| FormatError::Parse { path: path.to_string(), message };
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        match table.get("schema_version") {
            Some(toml::Value::Integer(v)) if *v == i64::from(SCENARIO_SCHEMA) => {}
            Some(v) => {
                return Err(FormatError::Schema { what: "scenario", expected: SCENARIO_SCHEMA.to_string(), found: v.to_string() })
            }
            None => {
                return Err(FormatError::Schema { what: "scenario", expected: SCENARIO_SCHEMA.to_string(), found: "none".into() })
            }
        }
        toml::from_str(text).map_err(|e| parse_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Semantic checks of every section, run before any computation.
    pub fn validate(&self) -> Result<(), FormatError> {
        let invalid = |e: &dyn std::fmt::Display| FormatError::Invalid(e.to_string());
        self.contest.config().map_err(|e| invalid(&e))?;
        if self.sweep.points == 0 {
            return Err(FormatError::Invalid("sweep.points must be at least 1".into()));
        }
        if let (Some(a), Some(b)) = (self.sweep.c_s_min, self.sweep.c_s_max) {
            if !(a > 0.0 && b >= a) {
                return Err(FormatError::Invalid("sweep range must satisfy 0 < c_s_min <= c_s_max".into()));
            }
        }
        if let Some(sim) = &self.simulation {
            sim.validate().map_err(|e| invalid(&e))?;
        }
        for r in &self.regression {
            r.spec().validate().map_err(|e| invalid(&e))?;
        }
        if let Some(did) = &self.did {
            if did.window[0] >= did.window[1] {
                return Err(FormatError::Invalid("did.window must be [start, end] with start < end".into()));
            }
        }
        let options = self.ranking.options(self.seed)?;
        if options.replications < crate::ranking::MIN_REPLICATIONS {
            return Err(FormatError::Invalid(format!("ranking.replications must be at least {}", crate::ranking::MIN_REPLICATIONS)));
        }
        if !(0.0..=1.0).contains(&options.close_quantile) || options.top_k == 0 {
            return Err(FormatError::Invalid("ranking.close_quantile must lie in [0, 1] and top_k be positive".into()));
        }
        if !(self.verify.step > 0.0 && self.verify.step < 1.0) {
            return Err(FormatError::Invalid("verify.step must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Shortest round-trip text of a float; missing values are empty.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_f64)
}

fn comment_line(seed: u64, meta: &[(&str, String)]) -> String {
    let mut line = format!("# contestlab {TOOL_VERSION} seed={seed}");
    for (k, v) in meta {
        let _ = write!(line, " {k}={v}");
    }
    line
}

/// Writes a CSV with the comment line and header.
pub fn write_csv(
    path: &Path,
    seed: u64,
    meta: &[(&str, String)],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), FormatError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", comment_line(seed, meta))?;
    let mut w = csv::Writer::from_writer(out);
    let to_io = |e: csv::Error| FormatError::Io(std::io::Error::other(e));
    w.write_record(header).map_err(to_io)?;
    for row in rows {
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

fn b01(x: bool) -> String {
    u8::from(x).to_string()
}

pub fn write_panel(path: &Path, panel: &RatingPanel) -> Result<(), FormatError> {
    let meta = [
        ("panel_schema", PANEL_SCHEMA.to_string()),
        ("weeks", panel.weeks.to_string()),
        ("incentive_week", panel.incentive_week.map_or_else(|| "none".into(), |w| w.to_string())),
    ];
    let rows = panel.rows.iter().map(|r| {
        vec![
            r.rater_id.to_string(),
            r.submitter_id.to_string(),
            r.submission_id.to_string(),
            r.contest_week.to_string(),
            r.rating.to_string(),
            b01(r.submitted_same_contest),
            b01(r.rate_own_submission),
            fmt_f64(r.source_skill),
            fmt_f64(r.target_skill),
            b01(r.after_incentive_change),
            r.true_intent.as_str().to_string(),
        ]
    });
    write_csv(path, panel.seed, &meta, &PANEL_HEADER, rows)
}

/// `key=value` pairs of a comment line written by [`write_csv`].
fn parse_comment(line: &str) -> Option<Vec<(String, String)>> {
    let rest = line.strip_prefix("# contestlab ")?;
    Some(
        rest.split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    )
}

pub fn read_panel(path: &Path) -> Result<RatingPanel, FormatError> {
    let name = path.display().to_string();
    let parse_err = |message: String| FormatError::Parse { path: name.clone(), message };
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let meta = parse_comment(first.trim_end()).unwrap_or_default();
    let get = |k: &str| meta.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
    let schema = get("panel_schema").unwrap_or_else(|| "none".into());
    if schema != PANEL_SCHEMA.to_string() {
        return Err(FormatError::Schema { what: "panel", expected: PANEL_SCHEMA.to_string(), found: schema });
    }
    let seed = get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
    let weeks = get("weeks").and_then(|s| s.parse().ok()).unwrap_or(0);
    let incentive_week = get("incentive_week").and_then(|s| s.parse().ok());

    let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header: Vec<String> = csv.headers().map_err(|e| parse_err(e.to_string()))?.iter().map(String::from).collect();
    if header != PANEL_HEADER {
        return Err(FormatError::Schema { what: "panel", expected: PANEL_HEADER.join(","), found: header.join(",") });
    }
    let mut rows = Vec::new();
    for (line, record) in csv.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let at = |msg: &str| parse_err(format!("row {}: {msg}", line + 1));
        let int = |i: usize| field(i).parse::<u32>().map_err(|_| at(&format!("bad {}", PANEL_HEADER[i])));
        let flag = |i: usize| match field(i) {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(at(&format!("bad {}", PANEL_HEADER[i]))),
        };
        let skill = |i: usize| match field(i) {
            "" => Ok(f64::NAN),
            s => s.parse::<f64>().map_err(|_| at(&format!("bad {}", PANEL_HEADER[i]))),
        };
        let rating = field(4).parse::<u8>().ok().filter(|r| *r <= crate::sim::MAX_STARS).ok_or_else(|| at("bad rating"))?;
        rows.push(RatingRow {
            rater_id: int(0)?,
            submitter_id: int(1)?,
            submission_id: int(2)?,
            contest_week: int(3)?,
            rating,
            submitted_same_contest: flag(5)?,
            rate_own_submission: flag(6)?,
            source_skill: skill(7)?,
            target_skill: skill(8)?,
            after_incentive_change: flag(9)?,
            true_intent: Intent::parse(field(10)).ok_or_else(|| at("bad true_intent"))?,
        });
    }
    Ok(RatingPanel { rows, seed, weeks, incentive_week, ..Default::default() })
}

fn region_colour(id: Option<EquilibriumId>) -> &'static str {
    match id.map(EquilibriumId::index) {
        Some(1) => "#f7f7f7",
        Some(2) => "#deebf7",
        Some(3) => "#c6dbef",
        Some(4) => "#fee0d2",
        Some(5) => "#fcbba1",
        Some(6) => "#fc9272",
        Some(7) => "#fb6a4a",
        _ => "#ffffff",
    }
}

/// Utilities of both types against log sabotage cost, with one shaded band
/// per equilibrium region.
pub fn sweep_svg(sweep: &SweepResult<f64>, title: &str) -> String {
    let (w, h, left, right, top, bottom) = (900.0, 480.0, 80.0, 20.0, 40.0, 60.0);
    let rows = &sweep.rows;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, w / 2.0);
    if rows.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.c_s.max(f64::MIN_POSITIVE).log10()).collect();
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let us: Vec<f64> = rows.iter().flat_map(|r| [r.utility_high, r.utility_low]).flatten().collect();
    let (y0, y1) = us.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &u| (a.min(u), b.max(u)));
    let (y0, y1) = if y0.is_finite() && y1 > y0 { (y0.min(0.0), y1) } else { (0.0, 1.0) };
    let px = |x: f64| left + (x - x0) / span * (w - left - right);
    let py = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * (h - top - bottom);

    let segments = sweep.segments();
    for (i, (id, a, b)) in segments.iter().enumerate() {
        let start = if i == 0 { px(a.log10()) } else { (px(segments[i - 1].2.log10()) + px(a.log10())) / 2.0 };
        let end = match segments.get(i + 1) {
            Some(next) => (px(b.log10()) + px(next.1.log10())) / 2.0,
            None => px(b.log10()),
        };
        let _ = writeln!(
            svg,
            r#"<rect x="{start:.2}" y="{top}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            (end - start).max(0.5),
            h - top - bottom,
            region_colour(*id)
        );
        let label = id.map_or_else(|| "none".to_string(), |id| id.to_string());
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{label}</text>"#, (start + end) / 2.0, top + 16.0);
    }
    for (name, colour, pick) in [
        ("high type", "#08519c", (|r: &crate::equilibrium::SweepRow<f64>| r.utility_high) as fn(&_) -> Option<f64>),
        ("low type", "#a50f15", |r| r.utility_low),
    ] {
        let mut path = String::new();
        let mut pen_down = false;
        for (r, x) in rows.iter().zip(&xs) {
            match pick(r) {
                Some(u) => {
                    let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, px(*x), py(u));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="2"><title>{name}</title></path>"#, path.trim_end());
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{0}" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for d in (x0.floor() as i32)..=(x1.ceil() as i32) {
        let x = f64::from(d);
        if x < x0 - 1e-9 || x > x1 + 1e-9 {
            continue;
        }
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">1e{d}</text>"#, px(x), h - bottom + 18.0);
    }
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * f64::from(i) / 4.0;
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{:.1}</text>"#, left - 6.0, py(y) + 4.0, y);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">sabotage cost c_s</text>"#, (left + w - right) / 2.0, h - 15.0);
    let _ = writeln!(svg, r#"<text x="15" y="{}" transform="rotate(-90 15 {0})" text-anchor="middle">expected utility</text>"#, (top + h - bottom) / 2.0);
    let _ = writeln!(svg, r##"<text x="{}" y="{}" fill="#08519c">high type</text><text x="{0}" y="{}" fill="#a50f15">low type</text>"##, w - right - 80.0, top + 36.0, top + 52.0);
    svg.push_str("</svg>\n");
    svg
}
