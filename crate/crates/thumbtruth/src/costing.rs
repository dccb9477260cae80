//! Token- and media-level cost accounting with exact decimal arithmetic.
//!
//! Prices live in versioned config files (they drift too fast to hardcode);
//! every ledger entry is priced once, rounded half-up to six decimal places,
//! and totals are recomputed from entries on demand so they are independent
//! of accumulation order.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::TokenUsage;

/// Pipeline stage a cost was incurred in.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Describe,
    ThumbDescribe,
    Explain,
    Classify,
}

impl Stage {
    pub fn all() -> [Stage; 4] {
        [Stage::Describe, Stage::ThumbDescribe, Stage::Explain, Stage::Classify]
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Describe => "describe",
            Stage::ThumbDescribe => "thumb_describe",
            Stage::Explain => "explain",
            Stage::Classify => "classify",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-backend prices. Config files carry them as strings so no precision is
/// lost in transit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendPrices {
    #[serde(default = "Decimal::zero")]
    pub input_price_per_1k_tokens: Decimal,
    #[serde(default = "Decimal::zero")]
    pub output_price_per_1k_tokens: Decimal,
    #[serde(default = "Decimal::zero")]
    pub image_price_per_image: Decimal,
    #[serde(default = "Decimal::zero")]
    pub media_price_per_minute: Decimal,
    /// Flat price added per call, for subscription-style services priced per
    /// video rather than per token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat_per_call: Option<Decimal>,
}

trait DecimalZero {
    fn zero() -> Decimal;
}
impl DecimalZero for Decimal {
    fn zero() -> Decimal {
        Decimal::ZERO
    }
}

/// Price table keyed by backend name, with versioning metadata.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PriceTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_date: Option<String>,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendPrices>,
}

impl PriceTable {
    pub fn from_toml_str(text: &str) -> Result<Self, CostError> {
        toml::from_str(text).map_err(|e| CostError::Format(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, CostError> {
        let text = fs::read_to_string(path)
            .map_err(|source| CostError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Error)]
pub enum CostError {
    #[error("unknown backend in price table: {0}")]
    UnknownBackend(String),
    #[error("usage not priceable: {0}")]
    BadUsage(String),
    #[error("price table format error: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Unrounded price of a usage record under one backend's prices.
///
/// Multiplications happen before the single division per component, so the
/// only non-exact step is the divide (28 significant digits).
pub fn price_exact(usage: &TokenUsage, prices: &BackendPrices) -> Result<Decimal, CostError> {
    if !usage.media_seconds.is_finite() || usage.media_seconds < 0.0 {
        return Err(CostError::BadUsage(format!(
            "media_seconds must be a non-negative number, got {}",
            usage.media_seconds
        )));
    }
    let media_seconds = Decimal::from_f64_retain(usage.media_seconds)
        .ok_or_else(|| CostError::BadUsage("media_seconds not representable".into()))?;
    let input = Decimal::from(usage.input_tokens) * prices.input_price_per_1k_tokens
        / Decimal::from(1000);
    let output = Decimal::from(usage.output_tokens) * prices.output_price_per_1k_tokens
        / Decimal::from(1000);
    let images = Decimal::from(usage.image_count) * prices.image_price_per_image;
    let media = media_seconds * prices.media_price_per_minute / Decimal::from(60);
    let flat = prices.flat_per_call.unwrap_or(Decimal::ZERO);
    Ok(input + output + images + media + flat)
}

/// Entry-level price: [`price_exact`] rounded half-up to 6 decimal places.
pub fn price(usage: &TokenUsage, backend: &str, table: &PriceTable) -> Result<Decimal, CostError> {
    let prices = table
        .backends
        .get(backend)
        .ok_or_else(|| CostError::UnknownBackend(backend.to_string()))?;
    Ok(price_exact(usage, prices)?
        .round_dp_with_strategy(6, RoundingStrategy::MidpointAwayFromZero))
}

/// One priced ledger entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub stage: Stage,
    pub backend: String,
    pub video_id: String,
    pub usage: TokenUsage,
    pub cost: Decimal,
}

/// Append-only cost ledger. Totals are recomputed from the entries, so they
/// are identical for any accumulation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    entries: Vec<CostEntry>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, entry: CostEntry) {
        self.entries.push(entry);
    }

    /// Price a usage record against the table and append it.
    pub fn add(
        &mut self,
        stage: Stage,
        backend: &str,
        video_id: &str,
        usage: TokenUsage,
        table: &PriceTable,
    ) -> Result<(), CostError> {
        let cost = price(&usage, backend, table)?;
        self.accumulate(CostEntry {
            stage,
            backend: backend.to_string(),
            video_id: video_id.to_string(),
            usage,
            cost,
        });
        Ok(())
    }

    pub fn entries(&self) -> &[CostEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stage_totals(&self) -> BTreeMap<Stage, Decimal> {
        let mut totals = BTreeMap::new();
        for entry in &self.entries {
            *totals.entry(entry.stage).or_insert(Decimal::ZERO) += entry.cost;
        }
        totals
    }

    pub fn backend_totals(&self) -> BTreeMap<String, Decimal> {
        let mut totals = BTreeMap::new();
        for entry in &self.entries {
            *totals.entry(entry.backend.clone()).or_insert(Decimal::ZERO) += entry.cost;
        }
        totals
    }

    pub fn grand_total(&self) -> Decimal {
        self.entries.iter().map(|e| e.cost).sum()
    }

    /// CSV export with all entry fields.
    pub fn export_csv<W: std::io::Write>(&self, writer: W) -> Result<(), CostError> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record([
            "stage",
            "backend",
            "video_id",
            "input_tokens",
            "output_tokens",
            "image_count",
            "media_seconds",
            "cost",
        ])
        .and_then(|_| {
            for e in &self.entries {
                csv.write_record([
                    e.stage.name().to_string(),
                    e.backend.clone(),
                    e.video_id.clone(),
                    e.usage.input_tokens.to_string(),
                    e.usage.output_tokens.to_string(),
                    e.usage.image_count.to_string(),
                    e.usage.media_seconds.to_string(),
                    render_money(e.cost),
                ])?;
            }
            csv.flush()?;
            Ok(())
        })
        .map_err(|e| CostError::Format(e.to_string()))
    }
}

/// Total, count, and average for one slice of the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub total: Decimal,
    pub count: usize,
    /// `None` when the slice is empty (rendered as "n/a").
    pub average: Option<Decimal>,
}

fn summarize<'a>(entries: impl Iterator<Item = &'a CostEntry>) -> CostSummary {
    let mut total = Decimal::ZERO;
    let mut count = 0usize;
    for e in entries {
        total += e.cost;
        count += 1;
    }
    let average = if count == 0 { None } else { Some(total / Decimal::from(count as u64)) };
    CostSummary { total, count, average }
}

/// Per-stage and per-backend cost summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub stages: BTreeMap<Stage, CostSummary>,
    pub backends: BTreeMap<String, CostSummary>,
    pub grand_total: Decimal,
}

pub fn cost_report(ledger: &CostLedger) -> CostReport {
    let mut stages = BTreeMap::new();
    for stage in Stage::all() {
        stages.insert(stage, summarize(ledger.entries().iter().filter(|e| e.stage == stage)));
    }
    let mut backends = BTreeMap::new();
    for name in ledger.entries().iter().map(|e| e.backend.clone()).collect::<std::collections::BTreeSet<_>>() {
        backends.insert(
            name.clone(),
            summarize(ledger.entries().iter().filter(|e| e.backend == name)),
        );
    }
    CostReport { stages, backends, grand_total: ledger.grand_total() }
}

/// Render a currency amount at 6 decimal places.
pub fn render_money(amount: Decimal) -> String {
    format!("{:.6}", amount.round_dp_with_strategy(6, RoundingStrategy::MidpointAwayFromZero))
}

/// Render an optional average, "n/a" when undefined.
pub fn render_average(average: Option<Decimal>) -> String {
    match average {
        Some(a) => render_money(a),
        None => "n/a".to_string(),
    }
}

/// One raw usage observation, before pricing; persisted by pipeline runs so
/// cost accounting can happen later against any price table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub stage: Stage,
    pub backend: String,
    pub video_id: String,
    pub usage: TokenUsage,
}

/// Thread-safe usage accumulator for concurrent pipeline stages. Draining
/// sorts entries, so persisted logs are deterministic regardless of worker
/// scheduling.
#[derive(Debug, Default)]
pub struct UsageCollector {
    entries: Mutex<Vec<UsageEntry>>,
}

impl UsageCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, entry: UsageEntry) {
        self.entries.lock().expect("usage collector poisoned").push(entry);
    }

    pub fn drain_sorted(&self) -> Vec<UsageEntry> {
        let mut entries =
            std::mem::take(&mut *self.entries.lock().expect("usage collector poisoned"));
        entries.sort_by(|a, b| {
            (&a.video_id, a.stage, &a.backend).cmp(&(&b.video_id, b.stage, &b.backend))
        });
        entries
    }
}

/// Append usage entries to a line-delimited log file.
pub fn append_usage_log(path: &Path, entries: &[UsageEntry]) -> Result<(), CostError> {
    use std::io::Write;
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| CostError::Io { path: path.to_path_buf(), source })?;
    for entry in entries {
        let line = serde_json::to_string(entry).expect("usage entry serialization cannot fail");
        writeln!(file, "{line}")
            .map_err(|source| CostError::Io { path: path.to_path_buf(), source })?;
    }
    Ok(())
}

/// Read a usage log written by [`append_usage_log`].
pub fn read_usage_log(path: &Path) -> Result<Vec<UsageEntry>, CostError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CostError::Io { path: path.to_path_buf(), source })?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        entries.push(
            serde_json::from_str(line)
                .map_err(|e| CostError::Format(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::str::FromStr;

    fn table() -> PriceTable {
        PriceTable::from_toml_str(
            r#"
            version = "2024-10"
            effective_date = "2024-10-01"

            [backends.main]
            input_price_per_1k_tokens = "3"
            output_price_per_1k_tokens = "15"
            image_price_per_image = "0.01"
            media_price_per_minute = "0.05"

            [backends.flat]
            flat_per_call = "0.437"
            "#,
        )
        .unwrap()
    }

    fn usage(input: u64, output: u64, images: u64, media: f64) -> TokenUsage {
        TokenUsage { input_tokens: input, output_tokens: output, image_count: images, media_seconds: media }
    }

    #[test]
    fn price_hand_worked_tokens() {
        // 1000 in / 500 out at $3/$15 per 1k = 3 + 7.5.
        let got = price(&usage(1000, 500, 0, 0.0), "main", &table()).unwrap();
        assert_eq!(got, Decimal::from_str("10.50").unwrap());
    }

    #[test]
    fn price_zero_usage() {
        assert_eq!(price(&usage(0, 0, 0, 0.0), "main", &table()).unwrap(), Decimal::ZERO);
    }

    #[test]
    fn price_hand_worked_media() {
        // 600 seconds at $0.05/min = $0.50.
        let got = price(&usage(0, 0, 0, 600.0), "main", &table()).unwrap();
        assert_eq!(got, Decimal::from_str("0.50").unwrap());
    }

    #[test]
    fn price_flat_per_call() {
        let got = price(&usage(0, 0, 0, 0.0), "flat", &table()).unwrap();
        assert_eq!(got, Decimal::from_str("0.437").unwrap());
    }

    #[test]
    fn price_unknown_backend() {
        assert!(matches!(
            price(&usage(1, 1, 0, 0.0), "nope", &table()),
            Err(CostError::UnknownBackend(_))
        ));
    }

    #[test]
    fn accumulate_totals_per_stage() {
        let t = table();
        let mut ledger = CostLedger::new();
        ledger.add(Stage::Classify, "main", "v1", usage(1000, 0, 0, 0.0), &t).unwrap(); // $3
        ledger.add(Stage::Classify, "main", "v2", usage(2000, 0, 0, 0.0), &t).unwrap(); // $6
        ledger.add(Stage::Describe, "main", "v1", usage(0, 1000, 0, 0.0), &t).unwrap(); // $15
        let totals = ledger.stage_totals();
        assert_eq!(totals[&Stage::Classify], Decimal::from(9));
        assert_eq!(totals[&Stage::Describe], Decimal::from(15));
        assert_eq!(ledger.grand_total(), Decimal::from(24));
    }

    #[test]
    fn totals_are_order_independent() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut entries = Vec::new();
        for i in 0..200 {
            let u = usage(
                rng.gen_range(0..5000),
                rng.gen_range(0..2000),
                rng.gen_range(0..3),
                rng.gen_range(0..600) as f64,
            );
            let cost = price(&u, "main", &t).unwrap();
            entries.push(CostEntry {
                stage: if i % 2 == 0 { Stage::Classify } else { Stage::Explain },
                backend: "main".into(),
                video_id: format!("v{i}"),
                usage: u,
                cost,
            });
        }
        let mut forward = CostLedger::new();
        for e in &entries {
            forward.accumulate(e.clone());
        }
        let mut reversed = CostLedger::new();
        for e in entries.iter().rev() {
            reversed.accumulate(e.clone());
        }
        assert_eq!(forward.stage_totals(), reversed.stage_totals());
        assert_eq!(forward.grand_total(), reversed.grand_total());

        // Independent second-pass summation oracle.
        let oracle: Decimal = entries.iter().map(|e| e.cost).sum();
        assert_eq!(forward.grand_total(), oracle);
    }

    #[test]
    fn report_averages() {
        let mut ledger = CostLedger::new();
        for (id, cents) in [("v1", "0.01"), ("v2", "0.02"), ("v3", "0.03")] {
            ledger.accumulate(CostEntry {
                stage: Stage::Classify,
                backend: "main".into(),
                video_id: id.into(),
                usage: usage(0, 0, 0, 0.0),
                cost: Decimal::from_str(cents).unwrap(),
            });
        }
        let report = cost_report(&ledger);
        let classify = &report.stages[&Stage::Classify];
        assert_eq!(classify.count, 3);
        assert_eq!(classify.average, Some(Decimal::from_str("0.02").unwrap()));
        assert_eq!(render_average(report.stages[&Stage::Explain].average), "n/a");
    }

    #[test]
    fn report_backend_subtotals_sum_to_grand_total() {
        let t = table();
        let mut ledger = CostLedger::new();
        ledger.add(Stage::Classify, "main", "v1", usage(1000, 0, 0, 0.0), &t).unwrap();
        ledger.add(Stage::Describe, "flat", "v1", usage(0, 0, 0, 0.0), &t).unwrap();
        let report = cost_report(&ledger);
        let backend_sum: Decimal = report.backends.values().map(|s| s.total).sum();
        assert_eq!(backend_sum, report.grand_total);
    }

    #[test]
    fn linearity_before_rounding() {
        let t = table();
        let prices = &t.backends["main"];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let u1 = usage(
                rng.gen_range(0..100_000),
                rng.gen_range(0..50_000),
                rng.gen_range(0..10),
                rng.gen_range(0..3600) as f64,
            );
            let u2 = usage(
                rng.gen_range(0..100_000),
                rng.gen_range(0..50_000),
                rng.gen_range(0..10),
                rng.gen_range(0..3600) as f64,
            );
            let combined = price_exact(&(u1 + u2), prices).unwrap();
            let parts = price_exact(&u1, prices).unwrap() + price_exact(&u2, prices).unwrap();
            let delta = (combined - parts).abs();
            assert!(
                delta <= Decimal::from_str("1e-18").unwrap(),
                "linearity violated: {combined} vs {parts}"
            );
            // Post-rounding discrepancy stays within a rounding ulp per entry.
            let rounded_combined = price(&(u1 + u2), "main", &t).unwrap();
            let rounded_parts =
                price(&u1, "main", &t).unwrap() + price(&u2, "main", &t).unwrap();
            assert!((rounded_combined - rounded_parts).abs() <= Decimal::from_str("0.000002").unwrap());
        }
    }

    #[test]
    fn csv_export_has_all_fields() {
        let mut ledger = CostLedger::new();
        ledger.accumulate(CostEntry {
            stage: Stage::ThumbDescribe,
            backend: "main".into(),
            video_id: "v1".into(),
            usage: usage(10, 2, 1, 0.0),
            cost: Decimal::from_str("0.003805").unwrap(),
        });
        let mut buf = Vec::new();
        ledger.export_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("stage,backend,video_id,input_tokens,output_tokens,image_count,media_seconds,cost"));
        assert!(text.contains("thumb_describe,main,v1,10,2,1,0,0.003805"));
    }

    #[test]
    fn usage_log_round_trip_and_sorting() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("usage.jsonl");
        let collector = UsageCollector::new();
        collector.push(UsageEntry {
            stage: Stage::Classify,
            backend: "b".into(),
            video_id: "v2".into(),
            usage: usage(1, 1, 0, 0.0),
        });
        collector.push(UsageEntry {
            stage: Stage::Describe,
            backend: "b".into(),
            video_id: "v1".into(),
            usage: usage(2, 2, 0, 0.0),
        });
        let drained = collector.drain_sorted();
        assert_eq!(drained[0].video_id, "v1");
        append_usage_log(&path, &drained).unwrap();
        let read = read_usage_log(&path).unwrap();
        assert_eq!(read, drained);
    }
}
