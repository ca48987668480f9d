//! Exact tabular regressor keyed on quantised features and the action.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

const QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LookupTable {
    pub width: usize,
    /// Mean target per `(quantised features, action)`.
    pub entries: BTreeMap<(Vec<i64>, u8), f64>,
}

pub(crate) fn quantise(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v / QUANTUM).round() as i64).collect()
}

impl LookupTable {
    pub fn fit(inputs: &[f64], width: usize, actions: &[u8], targets: &[f64]) -> Result<Self> {
        if inputs.len() != actions.len() * width || actions.len() != targets.len() {
            return Err(Error::Shape {
                expected: actions.len() * width,
                got: inputs.len(),
                context: "lookup table inputs",
            });
        }
        let mut acc: BTreeMap<(Vec<i64>, u8), (f64, usize)> = BTreeMap::new();
        for ((row, &a), &y) in inputs.chunks(width.max(1)).zip(actions).zip(targets) {
            let e = acc.entry((quantise(row), a)).or_insert((0.0, 0));
            e.0 += y;
            e.1 += 1;
        }
        Ok(LookupTable {
            width,
            entries: acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        })
    }

    pub fn get(&self, x: &[f64], action: u8) -> Result<f64> {
        self.entries
            .get(&(quantise(x), action))
            .copied()
            .ok_or_else(|| Error::invalid(format!("no table entry for {x:?} action {action}")))
    }
}
