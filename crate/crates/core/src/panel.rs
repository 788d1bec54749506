//! Borrowed, fully aligned view over a dataset.
//!
//! Every strategy and evaluation routine works on a [`Panel`]: a list of items,
//! each with one finite value per timestep. Missing-data handling happens
//! before a panel is built.

use alloc::collections::BTreeSet;
use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{GuardrailError, Result};

/// Which end of the value axis is "good".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::HigherIsBetter => Direction::LowerIsBetter,
            Direction::LowerIsBetter => Direction::HigherIsBetter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Item<'a> {
    pub id: &'a str,
    pub name: &'a str,
    pub values: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel<'a> {
    dataset_id: &'a str,
    direction: Direction,
    len: usize,
    items: Vec<Item<'a>>,
}

impl<'a> Panel<'a> {
    /// Builds a panel, checking that ids are unique, every series has the same
    /// length and every value is finite.
    pub fn new(dataset_id: &'a str, direction: Direction, items: Vec<Item<'a>>) -> Result<Self> {
        let len = items.first().map_or(0, |item| item.values.len());
        let mut seen = BTreeSet::new();
        for item in &items {
            if !seen.insert(item.id) {
                return Err(GuardrailError::DuplicateItem(item.id.to_string()));
            }
            if item.values.len() != len {
                return Err(GuardrailError::LengthMismatch {
                    item: item.id.to_string(),
                    expected: len,
                    got: item.values.len(),
                });
            }
            if let Some(timestep) = item.values.iter().position(|v| !v.is_finite()) {
                return Err(GuardrailError::NonFinite { item: item.id.to_string(), timestep });
            }
        }
        Ok(Self { dataset_id, direction, len, items })
    }

    pub fn dataset_id(&self) -> &'a str {
        self.dataset_id
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Number of timesteps.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[Item<'a>] {
        &self.items
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|item| item.id == id)
    }

    pub fn item(&self, id: &str) -> Result<&Item<'a>> {
        self.items.iter().find(|item| item.id == id).ok_or_else(|| GuardrailError::UnknownItem(id.to_string()))
    }

    /// Same panel with the value direction flipped.
    pub fn with_direction(&self, direction: Direction) -> Self {
        Self { direction, ..self.clone() }
    }
}
