//! Result tables over a resolution ladder with two-grid order estimates.

use std::collections::BTreeMap;

use anicap_core::numeric::convergence_order;
use serde::Serialize;

/// One CSV row: `quantity,value,resolution,order`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub quantity: String,
    pub value: f64,
    pub resolution: usize,
    /// Observed order of a residual against the previous rung of the ladder.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    rows: Vec<Row>,
    /// Previous `(spacing, |value|)` of every residual.
    last: BTreeMap<String, (f64, f64)>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    /// A plain value, reported without an order estimate.
    pub fn value(&mut self, quantity: &str, resolution: usize, value: f64) {
        self.rows.push(Row { quantity: quantity.to_string(), value, resolution, order: None });
    }

    /// A quantity that should vanish as the spacing `h` goes to zero. From
    /// the second rung on, the row carries the slope of `log |value|`
    /// against `log h` between this rung and the previous one.
    pub fn residual(&mut self, quantity: &str, resolution: usize, h: f64, value: f64) {
        let order = self
            .last
            .get(quantity)
            .map(|&(h0, v0)| convergence_order(&[h0, h], &[v0, value.abs()]))
            .filter(|o| o.is_finite());
        self.last.insert(quantity.to_string(), (h, value.abs()));
        self.rows.push(Row { quantity: quantity.to_string(), value, resolution, order });
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Last value recorded for `quantity`.
    pub fn latest(&self, quantity: &str) -> Option<&Row> {
        self.rows.iter().rev().find(|r| r.quantity == quantity)
    }
}
