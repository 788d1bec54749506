//! Deterministic synthetic inputs shaped like the two study scenarios: a
//! daily price table for one calendar year and a cumulative case-count
//! export with populations. The numbers are random walks and logistic
//! waves, not real observations.

use std::fmt::Write;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use guardrail_core::rng::SeededRng;

use crate::provider::{AliasFile, BUNDLED_ALIASES};

struct Normal(SeededRng);

impl Normal {
    fn sample(&mut self) -> f64 {
        let u1 = self.0.unit().max(f64::MIN_POSITIVE);
        let u2 = self.0.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn unit(&mut self) -> f64 {
        self.0.unit()
    }
}

fn named_ids(kind: &str) -> Vec<(String, String)> {
    let file: AliasFile = serde_json::from_str(BUNDLED_ALIASES).expect("bundled alias table is valid");
    file.entries.into_iter().filter(|e| e.kind.as_deref() == Some(kind)).map(|e| (e.id, e.name)).collect()
}

/// `ticker,date,close` rows for every weekday of `year`; `extra` generated
/// tickers join the named ones. Roughly 1% of cells are missing and one
/// ticker lists mid-year.
pub fn synthetic_prices_csv(seed: u64, year: i32, extra: usize) -> String {
    let mut rng = Normal(SeededRng::new(seed));
    let mut tickers: Vec<String> = named_ids("company").into_iter().map(|(id, _)| id).collect();
    tickers.extend((1..=extra).map(|i| format!("SYN{i:03}")));
    tickers.sort();
    let start = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
    let days: Vec<NaiveDate> = std::iter::successors(Some(start), |d| Some(*d + Days::new(1)))
        .take_while(|d| d.year() == year)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect();

    let mut out = String::from("ticker,date,close\n");
    for (n, ticker) in tickers.iter().enumerate() {
        let drift = 0.08 + 0.25 * rng.sample();
        let vol = 0.15 + 0.25 * rng.unit();
        let listed = if n == tickers.len() / 2 { days.len() / 2 } else { 0 };
        let mut price = 20.0 + 300.0 * rng.unit();
        let step = 1.0 / days.len() as f64;
        for (t, day) in days.iter().enumerate() {
            price *= (drift * step + vol * step.sqrt() * rng.sample()).exp();
            if t < listed || rng.unit() < 0.01 {
                continue;
            }
            let _ = writeln!(out, "{ticker},{day},{price:.2}");
        }
    }
    out
}

/// OWID-style rows (`iso_code,location,date,total_cases,population`) from
/// `start` to `end`, including one aggregate `OWID_WRL` row per day.
pub fn synthetic_covid_csv(seed: u64, start: NaiveDate, end: NaiveDate) -> String {
    let mut rng = Normal(SeededRng::new(seed));
    let countries = named_ids("country");
    let days: Vec<NaiveDate> =
        std::iter::successors(Some(start), |d| Some(*d + Days::new(1))).take_while(|d| *d <= end).collect();
    let mut out = String::from("iso_code,location,date,total_cases,population\n");
    let mut world = vec![0.0; days.len()];
    for (iso, name) in &countries {
        let population = (10f64).powf(5.5 + 3.0 * rng.unit()).round();
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                let center = days.len() as f64 * rng.unit();
                let width = 15.0 + 40.0 * rng.unit();
                let height = population * (0.01 + 0.08 * rng.unit());
                (center, width, height)
            })
            .collect();
        for (t, day) in days.iter().enumerate() {
            let cases: f64 =
                waves.iter().map(|&(c, w, h)| h / (1.0 + (-(t as f64 - c) / w).exp())).sum::<f64>().floor();
            world[t] += cases;
            let reported = if rng.unit() < 0.02 { String::new() } else { format!("{cases}") };
            let _ = writeln!(out, "{iso},{name},{day},{reported},{population}");
        }
    }
    for (t, day) in days.iter().enumerate() {
        let _ = writeln!(out, "OWID_WRL,World,{day},{},7900000000", world[t]);
    }
    out
}
