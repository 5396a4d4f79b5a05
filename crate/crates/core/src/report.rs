//! Bound-gap tables: the heuristic's certified objective next to the MICP
//! lower bound for a sweep of potential caps.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::OptimizeError;
use crate::micp::{solve_micp, BnbSettings, MicpStatus};
use crate::network::{Network, Scenario, SLACK};
use crate::throughput::{solve_throughput_energy, solve_throughput_energy_from, EnergySettings};

/// Potential caps of the standard sweep, all with floor [`SWEEP_FLOOR`].
pub const SWEEP_CAPS: [f64; 3] = [5.0, 4.25, 3.5];
pub const SWEEP_FLOOR: f64 = 0.5;

/// One column of a gap table. Missing values render as "—".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapColumn {
    pub label: String,
    #[serde(default)]
    pub heuristic: Option<f64>,
    #[serde(default)]
    pub reference: Option<f64>,
    #[serde(default)]
    pub lower_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

impl GapColumn {
    /// `upper − lower`, nonnegative when both bounds are valid.
    pub fn gap(&self) -> Option<f64> {
        Some(self.heuristic? - self.lower_bound?)
    }

    /// Gap relative to the magnitude of the upper bound, in percent.
    pub fn gap_percent(&self) -> Option<f64> {
        let upper = self.heuristic?;
        let gap = self.gap()?;
        (upper != 0.0).then(|| 100.0 * gap / upper.abs())
    }

    pub fn certified_optimal(&self) -> bool {
        match (self.gap(), self.heuristic) {
            (Some(g), Some(u)) => g.abs() <= OPTIMAL_TOL * u.abs().max(1.0),
            _ => false,
        }
    }
}

const OPTIMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapTable {
    pub title: String,
    pub columns: Vec<GapColumn>,
    /// Decimals for solver output; `None` prints values as given.
    #[serde(default)]
    pub decimals: Option<usize>,
}

const ROWS: [&str; 5] = ["Energy heuristic", "Reference", "MIQP lower bound", "Gap", "Gap %"];

impl GapTable {
    fn number(&self, v: f64) -> String {
        match self.decimals {
            Some(d) => format!("{v:.d$}"),
            None => format!("{v}"),
        }
    }

    fn cells(&self, col: &GapColumn) -> [String; 5] {
        let opt = |v: Option<f64>| v.map_or_else(|| "—".to_string(), |v| self.number(v));
        let gap = if col.certified_optimal() {
            "certified optimal".to_string()
        } else {
            opt(col.gap())
        };
        let pct = match col.gap_percent() {
            Some(_) if col.certified_optimal() => "0%".to_string(),
            Some(p) => format!("{p:.2}%"),
            None => "—".to_string(),
        };
        [opt(col.heuristic), opt(col.reference), opt(col.lower_bound), gap, pct]
    }

    fn has_reference(&self) -> bool {
        self.columns.iter().any(|c| c.reference.is_some())
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 5]> = self.columns.iter().map(|c| self.cells(c)).collect();
        let rows: Vec<usize> = (0..ROWS.len()).filter(|&r| r != 1 || self.has_reference()).collect();
        let head = ROWS.iter().map(|r| r.chars().count()).max().unwrap_or(0).max("status".len());
        let widths: Vec<usize> = self
            .columns
            .iter()
            .zip(&cells)
            .map(|(c, cs)| {
                cs.iter()
                    .map(|s| s.chars().count())
                    .chain([c.label.chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "{}", self.title);
        }
        let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
        let mut line = pad("", head);
        for (c, w) in self.columns.iter().zip(&widths) {
            line.push_str("  ");
            line.push_str(&pad(&c.label, *w));
        }
        let _ = writeln!(out, "{}", line.trim_end());
        for &r in &rows {
            let mut line = pad(ROWS[r], head);
            for (cs, w) in cells.iter().zip(&widths) {
                line.push_str("  ");
                line.push_str(&pad(&cs[r], *w));
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        let notes: Vec<String> = self
            .columns
            .iter()
            .filter_map(|c| c.status.as_ref().map(|s| format!("  {}: {s}", c.label)))
            .collect();
        if !notes.is_empty() {
            let _ = writeln!(out, "status");
            for n in notes {
                let _ = writeln!(out, "{n}");
            }
        }
        out
    }

    /// One row per column: label, heuristic, reference, lower bound, gap,
    /// gap percent, status. Missing values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("column,heuristic,reference,lower_bound,gap,gap_percent,status\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v}"));
        for c in &self.columns {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&c.label),
                opt(c.heuristic),
                opt(c.reference),
                opt(c.lower_bound),
                opt(c.gap()),
                opt(c.gap_percent()),
                csv_field(c.status.as_deref().unwrap_or(""))
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn column_label(floor: f64, cap: f64) -> String {
    format!("{floor:?}-{cap:?}")
}

/// The instance with every potential in `[floor, cap]` and the slack pinned
/// at `cap`.
pub fn with_potential_box(network: &Network, scenario: &Scenario, floor: f64, cap: f64) -> (Network, Scenario) {
    let net = network.with_slack_potential(cap);
    let mut sc = scenario.clone();
    sc.pi_lo.iter_mut().for_each(|v| *v = floor);
    sc.pi_hi.iter_mut().for_each(|v| *v = cap);
    sc.pi_lo[SLACK] = cap;
    (net, sc)
}

/// Runs both bounding methods on one instance. Solver failures are reported
/// in the column's status rather than aborting the sweep.
pub fn solve_column(
    label: String,
    network: &Network,
    scenario: &Scenario,
    energy: &EnergySettings,
    bnb: &BnbSettings,
) -> GapColumn {
    let start = Instant::now();
    let mut col = GapColumn {
        label,
        ..Default::default()
    };
    let mut notes = Vec::new();
    let heuristic = match solve_throughput_energy(network, scenario, energy) {
        Ok(s) => Some(s),
        Err(OptimizeError::NotConverged { best, .. }) => {
            notes.push(format!("heuristic found no certified point (violation {:.2e})", best.max_violation));
            None
        }
        Err(e) => {
            notes.push(format!("heuristic: {e}"));
            None
        }
    };
    col.heuristic = heuristic.as_ref().map(|s| s.objective);
    let mut bnb = *bnb;
    if bnb.seed_upper.is_none() {
        bnb.seed_upper = col.heuristic;
    }
    match solve_micp(network, scenario, &bnb) {
        Ok(m) => {
            match m.status {
                MicpStatus::Infeasible => notes.push("relaxation infeasible".into()),
                MicpStatus::NodeLimit => notes.push(format!("node limit after {} nodes", m.nodes_explored)),
                MicpStatus::Optimal => {}
            }
            if m.status != MicpStatus::Infeasible {
                col.lower_bound = Some(m.lower_bound);
            }
            if let Some(p) = &m.best_point {
                if let Ok(w) = solve_throughput_energy_from(network, scenario, energy, &p.x, &p.b) {
                    col.reference = Some(col.heuristic.map_or(w.objective, |h| h.min(w.objective)));
                }
            }
        }
        Err(e) => notes.push(format!("MIQP: {e}")),
    }
    if col.reference.is_none() {
        col.reference = col.heuristic;
    }
    if !notes.is_empty() {
        col.status = Some(notes.join("; "));
    }
    col.seconds = Some(start.elapsed().as_secs_f64());
    col
}

/// The standard three-column sweep over [`SWEEP_CAPS`].
pub fn sweep(
    network: &Network,
    scenario: &Scenario,
    compression: bool,
    energy: &EnergySettings,
    bnb: &BnbSettings,
) -> GapTable {
    let sc = scenario.with_compression(compression);
    let energy = EnergySettings {
        b_variable: compression,
        ..*energy
    };
    let columns = SWEEP_CAPS
        .iter()
        .map(|&cap| {
            let (net, sc) = with_potential_box(network, &sc, SWEEP_FLOOR, cap);
            solve_column(column_label(SWEEP_FLOOR, cap), &net, &sc, &energy, bnb)
        })
        .collect();
    GapTable {
        title: format!(
            "Max throughput, {}",
            if compression { "with compression" } else { "no compression" }
        ),
        columns,
        decimals: Some(4),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> GapTable {
        let col = |label: &str, h: f64, r: f64, l: f64| GapColumn {
            label: label.into(),
            heuristic: Some(h),
            reference: Some(r),
            lower_bound: Some(l),
            ..Default::default()
        };
        GapTable {
            title: String::new(),
            columns: vec![
                col("0.5-5.0", -651.0, -665.0, -685.0),
                col("0.5-4.25", -576.0, -579.0, -581.0),
                col("0.5-3.5", -491.0, -501.0, -501.0),
            ],
            decimals: None,
        }
    }

    #[test]
    fn fixture_renders_verbatim() {
        let text = fixture().to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].split_whitespace().collect::<Vec<_>>(), ["0.5-5.0", "0.5-4.25", "0.5-3.5"]);
        assert_eq!(lines[1], "Energy heuristic  -651     -576      -491");
        assert!(lines[3].starts_with("MIQP lower bound  -685     -581      -501"), "{text}");
        assert!(lines[4].starts_with("Gap               34       5         10"), "{text}");
        assert!(lines[5].contains("5.22%") && lines[5].contains("0.87%") && lines[5].contains("2.04%"));
    }

    #[test]
    fn csv_has_one_row_per_column() {
        let csv = fixture().to_csv();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 4);
        let fields: Vec<&str> = rows[1].split(',').collect();
        assert_eq!(&fields[..5], ["0.5-5.0", "-651", "-665", "-685", "34"]);
        assert!((fields[5].parse::<f64>().unwrap() - 100.0 * 34.0 / 651.0).abs() < 1e-12);
        assert_eq!(fields[6], "");
    }

    #[test]
    fn zero_gap_is_certified() {
        let t = GapTable {
            columns: vec![GapColumn {
                label: "x".into(),
                heuristic: Some(-2.0),
                lower_bound: Some(-2.0 - 1e-9),
                ..Default::default()
            }],
            ..Default::default()
        };
        assert!(t.to_text().contains("certified optimal"));
    }

    #[test]
    fn infeasible_heuristic_shows_dash() {
        let t = GapTable {
            columns: vec![GapColumn {
                label: "x".into(),
                heuristic: None,
                lower_bound: Some(-3.0),
                status: Some("heuristic: infeasible scenario".into()),
                ..Default::default()
            }],
            ..Default::default()
        };
        let text = t.to_text();
        assert!(text.lines().nth(1).unwrap().ends_with('—'));
        assert!(text.contains("x: heuristic: infeasible scenario"));
        assert!(t.to_csv().lines().nth(1).unwrap().starts_with("x,,,-3,,,"));
    }
}
