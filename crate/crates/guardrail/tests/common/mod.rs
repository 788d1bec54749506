//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use guardrail::canonical::to_canonical_json;
use guardrail::cli::{parse_pipeline, run_pipeline};
use guardrail::dataset::{ingest_long_csv, ColumnMapping, TimeSeriesDataset, ValidationPolicy};
use guardrail::demo::{synthetic_covid_csv, synthetic_prices_csv};
use guardrail_core::Direction;

pub fn ingest(csv: &str, mapping: &ColumnMapping, id: &str, transforms: &str) -> TimeSeriesDataset {
    let raw = ingest_long_csv(csv.as_bytes(), mapping, id, Direction::HigherIsBetter).unwrap();
    let steps = parse_pipeline(transforms, 0.05).unwrap();
    run_pipeline(raw, &steps, &ValidationPolicy::default()).unwrap().0
}

pub fn stocks_demo(extra: usize) -> TimeSeriesDataset {
    let mapping = ColumnMapping { item_id: "ticker".into(), value: "close".into(), ..Default::default() };
    ingest(&synthetic_prices_csv(2024, 2024, extra), &mapping, "stocks", "resample_weekly,pct_change")
}

pub fn covid_demo() -> TimeSeriesDataset {
    let mapping = ColumnMapping {
        item_id: "iso_code".into(),
        value: "total_cases".into(),
        display_name: Some("location".into()),
        population: Some("population".into()),
        skip_item_prefix: Some("OWID_".into()),
        ..Default::default()
    };
    let (start, end) = (NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(), NaiveDate::from_ymd_opt(2021, 9, 30).unwrap());
    ingest(
        &synthetic_covid_csv(2020, start, end),
        &mapping,
        "covid",
        "per_million,window:2020-04-01..2021-08-31,resample_weekly:sun",
    )
}

/// Writes both demo datasets as `<dir>/{stocks,covid}.json`.
pub fn write_demo_dir(dir: &Path) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    [stocks_demo(30), covid_demo()]
        .iter()
        .map(|ds| {
            let path = dir.join(format!("{}.json", ds.dataset_id));
            std::fs::write(&path, to_canonical_json(ds).unwrap()).unwrap();
            path
        })
        .collect()
}

/// Path → SHA-256 of every file under `dir`.
pub fn tree_digest(dir: &Path) -> Vec<(PathBuf, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.clone(), guardrail::canonical::digest(&std::fs::read(&path).unwrap())));
            }
        }
    }
    out.sort();
    out
}
