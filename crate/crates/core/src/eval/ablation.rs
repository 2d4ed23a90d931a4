//! Ablation grid: one benchmark run per configuration cell.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{RetrievalConfig, RetrievalMode, Stage1K};
use crate::scoring::{NormVariant, Signal};

use super::bench::{run_benchmark, BenchOptions, Benchmark, EvalReport, Summary};
use super::reader::Reader;

/// One configuration. `None` fields inherit from the base options.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed: Option<Signal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<Stage1K>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<NormVariant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<RetrievalMode>,
}

impl AblationCell {
    pub fn labelled(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }

    /// The base retrieval config with this cell's overrides applied.
    /// Removing a signal zeroes its weight and renormalises the rest.
    pub fn apply(&self, base: &RetrievalConfig) -> Result<RetrievalConfig> {
        let mut cfg = base.clone();
        if let Some(s) = self.removed {
            cfg.weights = cfg.weights.without(s)?;
        }
        if let Some(k) = self.k {
            cfg.stage2_k = k;
        }
        if let Some(b) = self.budget {
            cfg.token_budget = b;
        }
        if let Some(k1) = self.k1 {
            cfg.stage1_k1 = k1;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub cells: Vec<AblationCell>,
}

impl AblationGrid {
    /// Full system, then one factor changed at a time: each signal removed,
    /// `k`, budget, `k1`, normalisation variant.
    pub fn default_plan() -> Self {
        let mut cells = vec![AblationCell::labelled("full")];
        for s in [Signal::Bm25, Signal::Decay, Signal::Cw, Signal::Tier] {
            cells.push(AblationCell {
                removed: Some(s),
                ..AblationCell::labelled(format!("-{s}"))
            });
        }
        for k in [1, 2, 4, 8] {
            cells.push(AblationCell {
                k: Some(k),
                ..AblationCell::labelled(format!("k={k}"))
            });
        }
        for b in [150, 300, 600] {
            cells.push(AblationCell {
                budget: Some(b),
                ..AblationCell::labelled(format!("budget={b}"))
            });
        }
        for k1 in [
            Stage1K::Finite(1),
            Stage1K::Finite(3),
            Stage1K::Finite(5),
            Stage1K::Finite(10),
            Stage1K::Unbounded,
        ] {
            cells.push(AblationCell {
                k1: Some(k1),
                ..AblationCell::labelled(format!("k1={k1}"))
            });
        }
        for v in NormVariant::ALL {
            cells.push(AblationCell {
                variant: Some(v),
                ..AblationCell::labelled(format!("variant={v}"))
            });
        }
        Self { cells }
    }

    /// Cartesian product of the given axes. Empty axes are not varied.
    pub fn cartesian(
        removed: &[Option<Signal>],
        ks: &[usize],
        budgets: &[u64],
        k1s: &[Stage1K],
        variants: &[NormVariant],
        modes: &[RetrievalMode],
    ) -> Self {
        fn axis<T: Copy>(xs: &[T]) -> Vec<Option<T>> {
            if xs.is_empty() {
                vec![None]
            } else {
                xs.iter().copied().map(Some).collect()
            }
        }
        let removed: Vec<Option<Signal>> = if removed.is_empty() { vec![None] } else { removed.to_vec() };
        let mut cells = Vec::new();
        for r in &removed {
            for k in axis(ks) {
                for b in axis(budgets) {
                    for k1 in axis(k1s) {
                        for v in axis(variants) {
                            for m in axis(modes) {
                                let mut parts = Vec::new();
                                if let Some(s) = r {
                                    parts.push(format!("-{s}"));
                                }
                                if let Some(k) = k {
                                    parts.push(format!("k={k}"));
                                }
                                if let Some(b) = b {
                                    parts.push(format!("budget={b}"));
                                }
                                if let Some(k1) = k1 {
                                    parts.push(format!("k1={k1}"));
                                }
                                if let Some(v) = v {
                                    parts.push(format!("variant={v}"));
                                }
                                if let Some(m) = m {
                                    parts.push(format!("mode={m}"));
                                }
                                let label = if parts.is_empty() { "full".to_string() } else { parts.join(",") };
                                cells.push(AblationCell {
                                    label,
                                    removed: *r,
                                    k,
                                    budget: b,
                                    k1,
                                    variant: v,
                                    mode: m,
                                });
                            }
                        }
                    }
                }
            }
        }
        Self { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub config: RetrievalConfig,
    pub overall: Summary,
    pub recall_at_4: Option<f64>,
    pub ndcg_at_4: Option<f64>,
    pub mean_sessions_ratio: Option<f64>,
    #[serde(skip)]
    pub report: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("row serialises") + "\n")
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>5} {:>7} {:>7} {:>9} {:>7} {:>7}",
            "cell", "n", "acc", "f1", "recall@4", "ndcg@4", "ratio"
        );
        let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<28} {:>5} {:>7.3} {:>7.3} {:>9} {:>7} {:>7}",
                r.cell.label,
                r.overall.n,
                r.overall.accuracy,
                r.overall.f1,
                opt(r.recall_at_4),
                opt(r.ndcg_at_4),
                opt(r.mean_sessions_ratio)
            );
        }
        out
    }
}

/// One benchmark run per cell, in grid order. Cells run one after another;
/// each run parallelises over questions per `base.execution`.
pub fn run_ablation(
    bench: &Benchmark,
    reader: &dyn Reader,
    grid: &AblationGrid,
    base: &BenchOptions,
) -> Result<AblationTable> {
    if grid.is_empty() {
        return Err(Error::validation("ablation grid is empty"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for cell in &grid.cells {
        let config = cell.apply(&base.retrieval)?;
        let opts = BenchOptions {
            retrieval: config.clone(),
            ..base.clone()
        };
        let report = run_benchmark(bench, reader, &opts)?;
        rows.push(AblationRow {
            cell: cell.clone(),
            config,
            overall: report.overall.clone(),
            recall_at_4: report.retrieval.as_ref().map(|r| r.recall_at_4),
            ndcg_at_4: report.retrieval.as_ref().map(|r| r.ndcg_at_4),
            mean_sessions_ratio: report.retrieval.as_ref().map(|r| r.mean_sessions_ratio),
            report: Some(report),
        });
    }
    Ok(AblationTable { rows })
}
