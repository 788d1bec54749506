//! Writes the synthetic demo CSVs used in the README walkthrough.
//!
//!     cargo run -p guardrail --example make_demo_data -- data/demo

use chrono::NaiveDate;
use guardrail::demo::{synthetic_covid_csv, synthetic_prices_csv};

fn main() -> std::io::Result<()> {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/demo".into()));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("prices_2024_synthetic.csv"), synthetic_prices_csv(2024, 2024, 70))?;
    let (start, end) = (NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(), NaiveDate::from_ymd_opt(2021, 9, 30).unwrap());
    std::fs::write(dir.join("covid_synthetic.csv"), synthetic_covid_csv(2020, start, end))?;
    eprintln!("wrote synthetic CSVs to {}", dir.display());
    Ok(())
}
