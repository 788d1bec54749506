//! Test-only data generators and brute-force oracles. Nothing here calls into
//! the selection code it is used to check.
#![allow(dead_code)]

pub mod checks;

use guardrail_core::{Direction, Item, Panel};

/// splitmix64, used only to generate test inputs.
pub struct Gen(u64);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

#[derive(Debug, Clone)]
pub struct Rows {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Rows {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        let ids = (0..values.len()).map(|i| format!("i{i:03}")).collect();
        Rows { ids, values }
    }

    pub fn with_ids(ids: &[&str], values: Vec<Vec<f64>>) -> Self {
        Rows { ids: ids.iter().map(|s| s.to_string()).collect(), values }
    }

    pub fn random(g: &mut Gen, items: usize, steps: usize) -> Self {
        let values = (0..items).map(|_| (0..steps).map(|_| g.range(-50.0, 150.0)).collect()).collect();
        Rows::new(values)
    }

    pub fn panel(&self, direction: Direction) -> Panel<'_> {
        Panel::new(
            "test",
            direction,
            self.ids.iter().zip(&self.values).map(|(id, v)| Item { id, name: id, values: v }).collect(),
        )
        .unwrap()
    }

    pub fn index(&self, id: &str) -> usize {
        self.ids.iter().position(|x| x == id).unwrap()
    }
}

/// Percentile by the inclusive definition, written from order statistics:
/// find the two neighbouring ranks around `p / 100 * (n - 1)` by scanning.
pub fn percentile_oracle(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    // insertion sort: deliberately not the library sort
    for i in 1..sorted.len() {
        let mut j = i;
        while j > 0 && sorted[j - 1] > sorted[j] {
            sorted.swap(j - 1, j);
            j -= 1;
        }
    }
    let pos = p / 100.0 * (sorted.len() as f64 - 1.0);
    let mut below = 0usize;
    while ((below + 1) as f64) <= pos {
        below += 1;
    }
    if below + 1 >= sorted.len() {
        return sorted[below];
    }
    let w = pos - below as f64;
    sorted[below] + w * (sorted[below + 1] - sorted[below])
}

pub fn sse_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in 0..a.len() {
        let d = a[t] - b[t];
        total += d * d;
    }
    total
}

/// Column-wise oracle percentile lines.
pub fn lines_oracle(rows: &Rows, percentiles: &[f64]) -> Vec<Vec<f64>> {
    let steps = rows.values[0].len();
    percentiles
        .iter()
        .map(|&p| {
            (0..steps)
                .map(|t| {
                    let column: Vec<f64> = rows.values.iter().map(|r| r[t]).collect();
                    percentile_oracle(&column, p)
                })
                .collect()
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}
