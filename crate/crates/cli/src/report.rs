//! Metrics reports in JSON and as an aligned text table.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub split: String,
    pub samples: usize,
    /// Mean absolute error in Nm.
    pub mae: f64,
    pub mse: f64,
    pub complexity: usize,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub command: String,
    pub dataset: String,
    pub split: String,
    /// Meaning of `x0, x1, ...` in the formulas.
    pub variables: Vec<String>,
    pub rows: Vec<MetricRow>,
}

pub fn mae(pred: &[f64], target: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let last = cells.len() - 1;
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&width).enumerate() {
            if i == last {
                s.push_str(c);
            } else {
                s.push_str(&format!("{c:<w$}  "));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("command: {}\ndataset: {}\nsplit: {}\n", self.command, self.dataset, self.split);
        if !self.variables.is_empty() {
            let vars: Vec<String> = self.variables.iter().enumerate().map(|(i, v)| format!("x{i} = {v}")).collect();
            out.push_str(&format!("variables: {}\n", vars.join(", ")));
        }
        out.push('\n');
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.method.clone(),
                    r.split.clone(),
                    r.samples.to_string(),
                    format!("{:.6}", r.mae),
                    format!("{:.6e}", r.mse),
                    r.complexity.to_string(),
                    r.formula.clone(),
                ]
            })
            .collect();
        out.push_str(&table(&["Method", "Split", "Samples", "MAE [Nm]", "MSE [Nm^2]", "Complexity [-]", "Formula"], &rows));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalReport {
    pub command: String,
    pub dataset: String,
    pub method: String,
    pub samples: usize,
    /// Mean absolute error against the measured external torque, when the
    /// dataset carries it.
    pub mae: Option<f64>,
    pub mean_estimate: f64,
    pub max_abs_estimate: f64,
}

impl ExternalReport {
    pub fn to_text(&self) -> String {
        let mae = self.mae.map_or_else(|| "n/a".to_string(), |m| format!("{m:.6}"));
        let rows = vec![vec![
            self.method.clone(),
            self.samples.to_string(),
            mae,
            format!("{:.6}", self.mean_estimate),
            format!("{:.6}", self.max_abs_estimate),
        ]];
        format!(
            "command: {}\ndataset: {}\n\n{}",
            self.command,
            self.dataset,
            table(&["Method", "Samples", "MAE [Nm]", "Mean estimate [Nm]", "Max |estimate| [Nm]"], &rows)
        )
    }
}
