//! Overlay benchmark fixtures and result aggregation.
//!
//! Stage 1 pages carry every element at load; stage 2 pages insert the same
//! mix after a delay. Each element is either an armored payload needing a
//! read overlay or an editable region needing a compose overlay.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use mg_core::scheme::password::PasswordSystem;
use mg_core::{EncryptOptions, KeySystem, KeySystemRecord, SchemeEnv};
use mg_server::agent::bench::BenchRecord;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

pub const FIXTURE_LABEL: &str = "bench-fixture";
const FIXTURE_ITERATIONS: u32 = 10_000;
/// Static per-element cost should stay roughly flat as n grows.
pub const STATIC_SPREAD_LIMIT: f64 = 3.0;
pub const DYNAMIC_LIMIT_MS: f64 = 100.0;
pub const DYNAMIC_LIMIT_N: u32 = 1000;
pub const MIN_RUNS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid fixture spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient runs for {browser_label} stage {stage} n={n}: {runs} < {required}")]
    InsufficientRuns { browser_label: String, stage: u8, n: u32, runs: usize, required: usize },
    #[error("{path}:{line}: {message}")]
    BadRecord { path: String, line: usize, message: String },
    #[error("no benchmark records")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] mg_core::Error),
}

#[derive(Debug, Clone)]
pub struct BenchFixtureSpec {
    pub n: usize,
    pub seed: u64,
    pub dynamic_delay_ms: u64,
    pub agent_origin: String,
}

impl BenchFixtureSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(BenchError::InvalidSpec(format!("n must be even and at least 2, got {}", self.n)));
        }
        Ok(())
    }
}

pub struct Fixture {
    pub stage1_html: String,
    pub stage2_html: String,
    /// Shared password that opens every payload.
    pub password: String,
    pub key: KeySystemRecord,
    pub payloads: Vec<String>,
}

#[derive(Serialize)]
struct FixtureInfo<'a> {
    n: usize,
    seed: u64,
    label: &'a str,
    password: &'a str,
    fingerprint: String,
}

pub fn generate(spec: &BenchFixtureSpec) -> Result<Fixture, BenchError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut pw = [0u8; 12];
    rng.fill_bytes(&mut pw);
    let password = format!("fixture-{}", hex::encode(pw));
    let system = PasswordSystem::create(FIXTURE_LABEL, &password, true, FIXTURE_ITERATIONS, &mut rng)?;

    let mut payloads = Vec::with_capacity(spec.n / 2);
    for i in 0..spec.n / 2 {
        let text = format!("<p>Benchmark message {i}: the quick brown fox jumps over the lazy dog.</p>");
        let mut env = SchemeEnv::new(&mut rng);
        let package = system.encrypt(&mut env, &[], text.as_bytes(), EncryptOptions::default())?;
        payloads.push(package.to_armor()?.into_string());
    }
    Ok(Fixture {
        stage1_html: stage1_page(spec, &payloads),
        stage2_html: stage2_page(spec, &payloads),
        password,
        key: system.serialize(),
        payloads,
    })
}

fn page_head(stage: u8, spec: &BenchFixtureSpec) -> String {
    format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\">\
         <title>MessageGuard benchmark stage {stage} (n={n})</title>\n\
         <style>.mg-bench-read,.mg-bench-compose{{display:block;width:320px;height:80px;margin:4px;\
         overflow:hidden;word-break:break-all}}</style></head>\n\
         <body data-mg-bench-stage=\"{stage}\" data-mg-bench-n=\"{n}\">\n",
        n = spec.n
    )
}

fn items(payloads: &[String]) -> String {
    let mut out = String::new();
    for (i, armored) in payloads.iter().enumerate() {
        let _ = writeln!(out, "<div class=\"mg-bench-read\" id=\"read-{i}\">{armored}</div>");
        let _ = writeln!(out, "<textarea class=\"mg-bench-compose\" id=\"compose-{i}\"></textarea>");
    }
    out
}

fn frontend_tag(spec: &BenchFixtureSpec, stage: u8) -> String {
    format!(
        "<script src=\"{}/frontend.js\" data-mg-bench=\"{stage}\" data-mg-bench-n=\"{}\"></script>\n",
        spec.agent_origin.trim_end_matches('/'),
        spec.n
    )
}

fn stage1_page(spec: &BenchFixtureSpec, payloads: &[String]) -> String {
    let mut page = page_head(1, spec);
    page.push_str("<div id=\"mg-bench-items\">\n");
    page.push_str(&items(payloads));
    page.push_str("</div>\n");
    page.push_str(&frontend_tag(spec, 1));
    page.push_str("</body></html>\n");
    page
}

fn stage2_page(spec: &BenchFixtureSpec, payloads: &[String]) -> String {
    let mut page = page_head(2, spec);
    page.push_str("<div id=\"mg-bench-items\"></div>\n");
    let json = serde_json::to_string(payloads).expect("strings serialize");
    let _ = writeln!(page, "<script type=\"application/json\" id=\"mg-bench-payloads\">{json}</script>");
    page.push_str(&frontend_tag(spec, 2));
    let _ = write!(
        page,
        "<script>\nwindow.addEventListener('load', function () {{\n\
         \x20 setTimeout(function () {{\n\
         \x20   var payloads = JSON.parse(document.getElementById('mg-bench-payloads').textContent);\n\
         \x20   var root = document.getElementById('mg-bench-items');\n\
         \x20   window.mgBenchInsertedAt = performance.now();\n\
         \x20   payloads.forEach(function (armored, i) {{\n\
         \x20     var read = document.createElement('div');\n\
         \x20     read.className = 'mg-bench-read'; read.id = 'read-' + i; read.textContent = armored;\n\
         \x20     var compose = document.createElement('textarea');\n\
         \x20     compose.className = 'mg-bench-compose'; compose.id = 'compose-' + i;\n\
         \x20     root.appendChild(read); root.appendChild(compose);\n\
         \x20   }});\n\
         \x20   document.dispatchEvent(new CustomEvent('mg-bench-inserted', {{ detail: {{ n: {n} }} }}));\n\
         \x20 }}, {delay});\n}});\n</script>\n",
        n = spec.n,
        delay = spec.dynamic_delay_ms
    );
    page.push_str("</body></html>\n");
    page
}

/// Writes `stage1.html`, `stage2.html` and `fixture.json` into `dir`.
pub fn write_fixture(dir: &Path, spec: &BenchFixtureSpec, fixture: &Fixture) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("stage1.html"), &fixture.stage1_html)?;
    std::fs::write(dir.join("stage2.html"), &fixture.stage2_html)?;
    let info = FixtureInfo {
        n: spec.n,
        seed: spec.seed,
        label: FIXTURE_LABEL,
        password: &fixture.password,
        fingerprint: fixture.key.fingerprint.to_hex(),
    };
    let mut json = serde_json::to_vec_pretty(&info).expect("info serializes");
    json.push(b'\n');
    std::fs::write(dir.join("fixture.json"), json)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub browser_label: String,
    pub stage: u8,
    pub n: u32,
    pub runs: usize,
    pub mean_ms_per_element: f64,
    pub p95_ms: f64,
    /// Mean of the per-run totals.
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub cells: Vec<CellReport>,
    pub regressions: Vec<String>,
}

pub fn read_results(path: &Path) -> Result<Vec<BenchRecord>, BenchError> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| BenchError::BadRecord { path: path.display().to_string(), line: i + 1, message };
        let record: BenchRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        record.validate().map_err(bad)?;
        records.push(record);
    }
    Ok(records)
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

pub fn bench_report(records: &[BenchRecord], min_runs: usize) -> Result<BenchReport, BenchError> {
    if records.is_empty() {
        return Err(BenchError::Empty);
    }
    let required = min_runs.max(MIN_RUNS);
    let mut groups: BTreeMap<(String, u8, u32), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.browser_label.clone(), r.stage, r.n)).or_default().push(r);
    }
    let mut cells = Vec::with_capacity(groups.len());
    for ((browser_label, stage, n), group) in groups {
        if group.len() < required {
            return Err(BenchError::InsufficientRuns { browser_label, stage, n, runs: group.len(), required });
        }
        let mut per_element: Vec<f64> = group.iter().map(|r| r.per_element_ms).collect();
        per_element.sort_by(f64::total_cmp);
        cells.push(CellReport {
            browser_label,
            stage,
            n,
            runs: group.len(),
            mean_ms_per_element: mean(per_element.iter().copied()),
            p95_ms: percentile(&per_element, 95.0),
            total_ms: mean(group.iter().map(|r| r.total_ms)),
        });
    }
    let regressions = regressions(&cells);
    Ok(BenchReport { cells, regressions })
}

fn regressions(cells: &[CellReport]) -> Vec<String> {
    let mut flags = Vec::new();
    let mut static_by_browser: BTreeMap<&str, Vec<&CellReport>> = BTreeMap::new();
    for c in cells {
        if c.stage == 1 {
            static_by_browser.entry(&c.browser_label).or_default().push(c);
        }
        if c.stage == 2 && c.n == DYNAMIC_LIMIT_N && c.mean_ms_per_element > DYNAMIC_LIMIT_MS {
            flags.push(format!(
                "{}: dynamic mean {:.2} ms/element at n={} exceeds {DYNAMIC_LIMIT_MS} ms",
                c.browser_label, c.mean_ms_per_element, c.n
            ));
        }
    }
    for (browser, group) in static_by_browser {
        if group.len() < 2 {
            continue;
        }
        let lo = group.iter().map(|c| c.mean_ms_per_element).fold(f64::INFINITY, f64::min);
        let hi = group.iter().map(|c| c.mean_ms_per_element).fold(0.0, f64::max);
        let spread = if hi == 0.0 { 1.0 } else { hi / lo };
        if spread >= STATIC_SPREAD_LIMIT {
            flags.push(format!(
                "{browser}: static per-element mean varies {spread:.2}x across n (limit {STATIC_SPREAD_LIMIT}x)"
            ));
        }
    }
    flags
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("browser\tstage\tn\truns\tmean_ms/element\tp95_ms\ttotal_ms\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}",
                c.browser_label, c.stage, c.n, c.runs, c.mean_ms_per_element, c.p95_ms, c.total_ms
            );
        }
        if self.regressions.is_empty() {
            out.push_str("no regressions\n");
        }
        for r in &self.regressions {
            let _ = writeln!(out, "REGRESSION {r}");
        }
        out
    }
}
