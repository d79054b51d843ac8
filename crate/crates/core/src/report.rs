//! Table aggregation (per-configuration averages across datasets) and the
//! aggregated-vs-individual LLM comparison.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::{SELECTOR_BM25, SELECTOR_CE};

const BUNDLED_TABLE1: &str = include_str!("../data/table1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowScores {
    /// Aligned with the file's `datasets` list.
    List(Vec<f64>),
    ByDataset(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellsRow {
    pub config: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub scores: RowScores,
    /// Average as published alongside the cells, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_avg: Option<f64>,
}

/// Input for `aggregate_table`: a (config × dataset) score matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub datasets: Vec<String>,
    pub rows: Vec<CellsRow>,
}

impl CellsFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(path, e.line(), e.to_string()))
    }

    /// The published table bundled with the crate.
    pub fn bundled_table1() -> Self {
        serde_json::from_str(BUNDLED_TABLE1).expect("bundled table parses")
    }

    /// `config → (dataset → score)`, in file order.
    pub fn cells(&self) -> Vec<(String, BTreeMap<String, f64>)> {
        self.rows
            .iter()
            .map(|row| {
                let map = match &row.scores {
                    RowScores::List(v) => self.datasets.iter().cloned().zip(v.iter().copied()).collect(),
                    RowScores::ByDataset(m) => m.clone(),
                };
                (row.config.clone(), map)
            })
            .collect()
    }

    pub fn reported_averages(&self) -> BTreeMap<String, f64> {
        self.rows
            .iter()
            .filter_map(|r| r.reported_avg.map(|a| (r.config.clone(), a)))
            .collect()
    }
}

/// Rounds to 3 decimals, half to even. The value is first snapped to the
/// nearest 1e-9 so binary noise (0.3655 stored as 0.36549999…) does not
/// decide the tie. Returns thousandths.
pub fn round_half_even_milli(x: f64) -> i64 {
    let nanos = (x * 1e9).round() as i64;
    let (q, r) = (nanos.div_euclid(1_000_000), nanos.rem_euclid(1_000_000));
    if r > 500_000 || (r == 500_000 && q % 2 != 0) {
        q + 1
    } else {
        q
    }
}

pub fn format_3(x: f64) -> String {
    let m = round_half_even_milli(x);
    let sign = if m < 0 { "-" } else { "" };
    format!("{sign}{}.{:03}", m.abs() / 1000, m.abs() % 1000)
}

/// `|a - b| ≤ 0.0005`, decided on 1e-9-snapped values so a difference of
/// exactly half a thousandth counts as within.
pub fn within_half_milli(a: f64, b: f64) -> bool {
    let diff = ((a * 1e9).round() as i64 - (b * 1e9).round() as i64).abs();
    diff <= 500_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub config: String,
    pub scores: Vec<f64>,
    pub average: f64,
    pub average_display: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_avg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub datasets: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Per-config arithmetic mean over the datasets. Every config must have a
/// score for every dataset.
pub fn aggregate_table(cells: &CellsFile) -> Result<AggregateTable> {
    let mut datasets: Vec<String> = cells.datasets.clone();
    let matrix = cells.cells();
    if datasets.is_empty() {
        for (_, m) in &matrix {
            for d in m.keys() {
                if !datasets.contains(d) {
                    datasets.push(d.clone());
                }
            }
        }
    }
    if datasets.is_empty() {
        return Err(Error::InvalidInput("no datasets in cell matrix".into()));
    }

    let mut missing = Vec::new();
    let mut seen = HashMap::new();
    for (i, row) in cells.rows.iter().enumerate() {
        if let Some(prev) = seen.insert(row.config.as_str(), i) {
            return Err(Error::InvalidInput(format!(
                "config {} appears in rows {} and {}",
                row.config,
                prev + 1,
                i + 1
            )));
        }
        if let RowScores::List(v) = &row.scores {
            if v.len() > datasets.len() {
                return Err(Error::InvalidInput(format!(
                    "config {} has {} scores for {} datasets",
                    row.config,
                    v.len(),
                    datasets.len()
                )));
            }
        }
    }
    for (config, m) in &matrix {
        for d in &datasets {
            if !m.contains_key(d) {
                missing.push(format!("({config}, {d})"));
            }
        }
        for d in m.keys() {
            if !datasets.contains(d) {
                return Err(Error::InvalidInput(format!("config {config}: unknown dataset {d}")));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!("ragged cell matrix; missing {}", missing.join(", "))));
    }

    let rows = matrix
        .into_iter()
        .zip(&cells.rows)
        .map(|((config, m), src)| {
            let scores: Vec<f64> = datasets.iter().map(|d| m[d]).collect();
            let average = scores.iter().sum::<f64>() / scores.len() as f64;
            TableRow {
                config,
                average_display: format_3(average),
                scores,
                average,
                reported_avg: src.reported_avg,
            }
        })
        .collect();
    Ok(AggregateTable { datasets, rows })
}

impl AggregateTable {
    pub fn averages(&self) -> BTreeMap<String, f64> {
        self.rows.iter().map(|r| (r.config.clone(), r.average)).collect()
    }

    /// Row indexes holding the best (rounded) value of each column; the
    /// last entry is the average column.
    pub fn best_per_column(&self) -> Vec<Vec<usize>> {
        let columns = self.datasets.len() + 1;
        (0..columns)
            .map(|c| {
                let value = |r: &TableRow| {
                    round_half_even_milli(if c < self.datasets.len() { r.scores[c] } else { r.average })
                };
                let best = self.rows.iter().map(value).max().unwrap_or(0);
                (0..self.rows.len()).filter(|&i| value(&self.rows[i]) == best).collect()
            })
            .collect()
    }

    /// Aligned plain-text table; `*` marks the best value in each column.
    pub fn render(&self) -> String {
        let best = self.best_per_column();
        let name_w = self.rows.iter().map(|r| r.config.len()).max().unwrap_or(6).max(6);
        let mut headers: Vec<String> = self.datasets.clone();
        headers.push("Avg".into());
        let widths: Vec<usize> = headers.iter().map(|h| h.len().max(6)).collect();

        let mut out = format!("{:<name_w$}", "config");
        for (h, w) in headers.iter().zip(&widths) {
            out.push_str(&format!("  {h:>w$}"));
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("{:<name_w$}", row.config));
            let values = row.scores.iter().chain(std::iter::once(&row.average));
            for (c, (v, w)) in values.zip(&widths).enumerate() {
                let mark = if best[c].contains(&i) { "*" } else { " " };
                let cell = format!("{}{mark}", format_3(*v));
                out.push_str(&format!("  {cell:>w$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// One aggregated configuration and the individual-LLM configurations it
/// is compared against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Family {
    pub name: String,
    pub aggregated: String,
    pub individuals: Vec<String>,
}

/// Families for the standard recipe names: standalone LLMs, +bm25, +ce
/// and +bm25+ce.
pub fn families(llm_labels: &[String]) -> Vec<Family> {
    let family = |name: &str, aggregated: &str, prefix: &str| Family {
        name: name.into(),
        aggregated: aggregated.into(),
        individuals: llm_labels.iter().map(|l| format!("{prefix}{l}")).collect(),
    };
    vec![
        family("llm", "all-llms", ""),
        family("llm+bm25", "all-llms+bm25", &format!("{SELECTOR_BM25}+")),
        family("llm+ce", "all-llms+ce", &format!("{SELECTOR_CE}+")),
        family("llm+bm25+ce", "all-llms+bm25+ce", &format!("{SELECTOR_BM25}+{SELECTOR_CE}+")),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub family: String,
    pub aggregated_config: String,
    pub aggregated: f64,
    pub individual_mean: f64,
    /// `aggregated - individual_mean`.
    pub difference: f64,
}

/// For each family: the aggregated configuration's score, the mean of its
/// individual configurations, and the difference. The first family is
/// required; later ones are reported when their aggregated config exists.
pub fn compare_aggregated_vs_individual(
    scores: &BTreeMap<String, f64>,
    families: &[Family],
) -> Result<Vec<Comparison>> {
    let mut out = Vec::new();
    for (i, family) in families.iter().enumerate() {
        let Some(&aggregated) = scores.get(&family.aggregated) else {
            if i == 0 {
                return Err(Error::InvalidInput(format!("missing config {}", family.aggregated)));
            }
            continue;
        };
        if family.individuals.is_empty() {
            return Err(Error::InvalidInput(format!("family {} has no individual configs", family.name)));
        }
        let mut sum = 0.0;
        for config in &family.individuals {
            sum += scores
                .get(config)
                .ok_or_else(|| Error::InvalidInput(format!("missing config {config}")))?;
        }
        let individual_mean = sum / family.individuals.len() as f64;
        out.push(Comparison {
            family: family.name.clone(),
            aggregated_config: family.aggregated.clone(),
            aggregated,
            individual_mean,
            difference: aggregated - individual_mean,
        });
    }
    Ok(out)
}

pub fn render_comparisons(title: &str, comparisons: &[Comparison]) -> String {
    let mut out = format!("{title}\n");
    for c in comparisons {
        out.push_str(&format!(
            "  {:<12} {:<18} aggregated {:.5}  individual mean {:.5}  diff {:+.5}\n",
            c.family, c.aggregated_config, c.aggregated, c.individual_mean, c.difference
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(rows: &[(&str, &[f64])]) -> CellsFile {
        CellsFile {
            title: None,
            datasets: vec!["a".into(), "b".into()],
            rows: rows
                .iter()
                .map(|(c, s)| CellsRow {
                    config: c.to_string(),
                    label: None,
                    scores: RowScores::List(s.to_vec()),
                    reported_avg: None,
                })
                .collect(),
        }
    }

    #[test]
    fn half_even_rounding() {
        assert_eq!(format_3(0.3655), "0.366");
        assert_eq!(format_3(0.3645), "0.364");
        assert_eq!(format_3(0.3375), "0.338");
        assert_eq!(format_3(0.28940), "0.289");
        assert_eq!(format_3(0.0004), "0.000");
        assert_eq!(format_3(-0.0125), "-0.012");
        assert!(within_half_milli(0.3655, 0.366));
        assert!(!within_half_milli(0.2894, 0.290));
    }

    #[test]
    fn averages_and_best_marks() {
        let t = aggregate_table(&cells(&[("x", &[0.2, 0.4]), ("y", &[0.5, 0.1])])).unwrap();
        assert!((t.rows[0].average - 0.3).abs() < 1e-12);
        assert_eq!(t.best_per_column(), vec![vec![1], vec![0], vec![0, 1]]);
        let text = t.render();
        assert!(text.contains("0.500*"));
        assert!(text.lines().count() == 3);
    }

    #[test]
    fn ragged_matrix_lists_missing_cells() {
        let mut c = cells(&[("x", &[0.2, 0.4])]);
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), 0.1);
        c.rows.push(CellsRow {
            config: "y".into(),
            label: None,
            scores: RowScores::ByDataset(m),
            reported_avg: None,
        });
        let err = aggregate_table(&c).unwrap_err().to_string();
        assert!(err.contains("(y, b)"), "{err}");
        let short = cells(&[("x", &[0.2])]);
        assert!(aggregate_table(&short).unwrap_err().to_string().contains("(x, b)"));
    }

    #[test]
    fn identical_scores_give_zero_difference() {
        let labels: Vec<String> = ["m1", "m2"].iter().map(|s| s.to_string()).collect();
        let scores: BTreeMap<String, f64> =
            [("all-llms", 0.3), ("m1", 0.3), ("m2", 0.3)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let cmp = compare_aggregated_vs_individual(&scores, &families(&labels)).unwrap();
        assert_eq!(cmp.len(), 1);
        assert_eq!(cmp[0].difference, 0.0);

        let mut missing = scores.clone();
        missing.remove("m2");
        assert!(compare_aggregated_vs_individual(&missing, &families(&labels)).is_err());
        let mut no_agg = scores.clone();
        no_agg.remove("all-llms");
        assert!(compare_aggregated_vs_individual(&no_agg, &families(&labels)).is_err());
    }

    #[test]
    fn bundled_table_loads() {
        let t = CellsFile::bundled_table1();
        assert_eq!(t.datasets.len(), 10);
        assert_eq!(t.rows.len(), 22);
        assert_eq!(t.reported_averages().len(), 22);
    }
}
