use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{PlrsError, Result};
use crate::inference::{bh_qvalues, lm_test, plrs_test, TestResult};
use crate::knots::{estimate_knots, StateMerge};
use crate::pipeline::config::Config;
use crate::pipeline::ingest::Dataset;
use crate::seed::mix_seed;
use crate::selection::{select, Criterion, SelectOptions, Selection};
use crate::spline::{GeneRecord, KnotSet, ModelClass};

/// Everything computed for one gene.
#[derive(Debug, Clone)]
pub struct GeneAnalysis {
    pub model_knots: KnotSet,
    pub model_merge: StateMerge,
    pub selection: Selection,
    pub test_knots: KnotSet,
    pub test_merge: StateMerge,
    pub test: TestResult,
    pub lm_pvalue: Option<f64>,
}

/// Seed of the gene at position `index` of the input.
pub fn gene_seed(cfg: &Config, index: usize) -> u64 {
    mix_seed(cfg.seed, index as u64)
}

/// Knots, model selection, PLRS test and LM test for one gene.
pub fn analyze_gene(record: &GeneRecord, cfg: &Config, index: usize) -> Result<GeneAnalysis> {
    let seed = gene_seed(cfg, index);
    let (model_knots, model_merge) = estimate_knots(record, cfg.knot_method, cfg.min_obs_per_state_model)?;
    let opts = SelectOptions { mc_draws: cfg.mc_draws, seed: mix_seed(seed, 0) };
    let selection = select(record, &model_knots, cfg.criterion, &opts)?;
    let (test_knots, test_merge) = estimate_knots(record, cfg.knot_method, cfg.min_obs_per_state_test)?;
    let test = plrs_test(record, &test_knots, cfg.mc_draws, mix_seed(seed, 1))?;
    let lm_pvalue = lm_test(&record.x, &record.y).ok();
    Ok(GeneAnalysis { model_knots, model_merge, selection, test_knots, test_merge, test, lm_pvalue })
}

/// One line of the screening table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenRow {
    pub gene_id: String,
    pub n: usize,
    /// Number of states after merging, for the selection step.
    pub n_states: usize,
    pub knots: Vec<f64>,
    pub class: ModelClass,
    pub mask: String,
    pub osaic: f64,
    pub aic: f64,
    pub bic: f64,
    /// Classes chosen by OSAIC, AIC and BIC.
    pub class_by_criterion: [ModelClass; 3],
    pub coefficients: Vec<(String, f64)>,
    pub ebar: f64,
    pub lr: f64,
    pub pvalue: f64,
    pub qvalue: f64,
    pub lm_pvalue: Option<f64>,
    pub lm_qvalue: Option<f64>,
    pub merged: bool,
    pub mc_weights: bool,
}

impl ScreenRow {
    fn from_analysis(record: &GeneRecord, a: &GeneAnalysis) -> Self {
        let (spec, scored) = a.selection.best();
        let class_of = |c: Criterion| {
            a.selection
                .winner_for(c)
                .map(|i| a.selection.submodels[i].spec.class())
                .unwrap_or(spec.class())
        };
        ScreenRow {
            gene_id: record.id.clone(),
            n: record.n(),
            n_states: a.model_knots.n_states(),
            knots: a.model_knots.knots().to_vec(),
            class: spec.class(),
            mask: spec.mask_string(),
            osaic: scored.osaic,
            aic: scored.aic,
            bic: scored.bic,
            class_by_criterion: Criterion::ALL.map(class_of),
            coefficients: spec.coefficient_labels().into_iter().zip(scored.fit.theta.iter().copied()).collect(),
            ebar: a.test.ebar,
            lr: a.test.lr,
            pvalue: a.test.pvalue,
            qvalue: f64::NAN,
            lm_pvalue: a.lm_pvalue,
            lm_qvalue: None,
            merged: a.model_merge.merged || a.test_merge.merged,
            mc_weights: !a.test.weights_used.exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    pub gene_id: String,
    pub stage: &'static str,
    pub message: String,
}

/// Counts in the layout of a model-selection table and a discovery table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScreenSummary {
    pub genes: usize,
    pub screened: usize,
    pub rejected: usize,
    pub dropped_at_ingest: usize,
    /// `selected[criterion][class]`, criteria ordered OSAIC, AIC, BIC.
    pub selected: [[usize; 4]; 3],
    pub fdr_threshold: f64,
    /// Intercept vs linear.
    pub lm_discoveries: usize,
    /// Intercept vs full.
    pub plrs_discoveries: usize,
    /// Whether the counts agree with a recount from the rows.
    pub consistent: bool,
}

fn class_index(c: ModelClass) -> usize {
    ModelClass::ALL.iter().position(|&m| m == c).expect("known class")
}

/// Summary recomputed from rows alone.
pub fn summarize_rows(rows: &[ScreenRow], fdr_threshold: f64) -> ScreenSummary {
    let mut s = ScreenSummary { screened: rows.len(), fdr_threshold, ..ScreenSummary::default() };
    for r in rows {
        for (ci, class) in r.class_by_criterion.iter().enumerate() {
            s.selected[ci][class_index(*class)] += 1;
        }
        if r.qvalue < fdr_threshold {
            s.plrs_discoveries += 1;
        }
        if r.lm_qvalue.is_some_and(|q| q < fdr_threshold) {
            s.lm_discoveries += 1;
        }
    }
    s
}

#[derive(Debug, Clone)]
pub struct ScreenOutput {
    pub rows: Vec<ScreenRow>,
    pub rejects: Vec<Reject>,
    pub summary: ScreenSummary,
}

/// Runs every gene through the pipeline. Output follows input order.
pub fn screen(dataset: &Dataset, cfg: &Config) -> Result<ScreenOutput> {
    cfg.validate()?;
    let results: Vec<std::result::Result<ScreenRow, PlrsError>> = dataset
        .genes
        .par_iter()
        .enumerate()
        .map(|(i, g)| analyze_gene(g, cfg, i).map(|a| ScreenRow::from_analysis(g, &a)))
        .collect();
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (g, r) in dataset.genes.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => rejects.push(Reject { gene_id: g.id.clone(), stage: "screen", message: e.to_string() }),
        }
    }
    let q = bh_qvalues(&rows.iter().map(|r| r.pvalue).collect::<Vec<_>>());
    for (r, qv) in rows.iter_mut().zip(q) {
        r.qvalue = qv;
    }
    let lm_tested: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].lm_pvalue.is_some()).collect();
    let lm_q = bh_qvalues(&lm_tested.iter().map(|&i| rows[i].lm_pvalue.unwrap()).collect::<Vec<_>>());
    for (&i, qv) in lm_tested.iter().zip(lm_q) {
        rows[i].lm_qvalue = Some(qv);
    }

    let mut summary = ScreenSummary {
        genes: dataset.genes.len(),
        rejected: rejects.len(),
        dropped_at_ingest: dataset.dropped.len(),
        ..summarize_rows(&rows, cfg.fdr_threshold)
    };
    let direct_plrs = rows.iter().filter(|r| r.qvalue < cfg.fdr_threshold).count();
    summary.consistent = summary.screened + summary.rejected == summary.genes
        && summary.plrs_discoveries == direct_plrs
        && summary.selected.iter().all(|c| c.iter().sum::<usize>() == summary.screened);
    rejects.extend(
        dataset
            .dropped
            .iter()
            .map(|d| Reject { gene_id: d.gene_id.clone(), stage: "ingest", message: d.reason.clone() }),
    );
    Ok(ScreenOutput { rows, rejects, summary })
}

/// Number formatting shared by all tables: shortest round-trip form, `NA`
/// for missing or non-finite values.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_num)
}

pub const ROW_COLUMNS: [&str; 22] = [
    "gene_id",
    "n",
    "n_states",
    "knots",
    "model_class",
    "mask",
    "osaic",
    "aic",
    "bic",
    "class_osaic",
    "class_aic",
    "class_bic",
    "coefficients",
    "ebar",
    "lr",
    "pvalue",
    "qvalue",
    "lm_pvalue",
    "lm_qvalue",
    "merged",
    "mc_weights",
    "flags",
];

pub fn rows_tsv(rows: &[ScreenRow]) -> String {
    let mut out = ROW_COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        let knots = if r.knots.is_empty() {
            "NA".to_string()
        } else {
            r.knots.iter().map(|k| fmt_num(*k)).collect::<Vec<_>>().join(",")
        };
        let coefs = r.coefficients.iter().map(|(l, v)| format!("{l}={}", fmt_num(*v))).collect::<Vec<_>>().join(";");
        let mut flags = Vec::new();
        if r.merged {
            flags.push("state-merge");
        }
        if r.mc_weights {
            flags.push("mc-weights");
        }
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.gene_id,
            r.n,
            r.n_states,
            knots,
            r.class,
            r.mask,
            fmt_num(r.osaic),
            fmt_num(r.aic),
            fmt_num(r.bic),
            r.class_by_criterion[0],
            r.class_by_criterion[1],
            r.class_by_criterion[2],
            coefs,
            fmt_num(r.ebar),
            fmt_num(r.lr),
            fmt_num(r.pvalue),
            fmt_num(r.qvalue),
            fmt_opt(r.lm_pvalue),
            fmt_opt(r.lm_qvalue),
            u8::from(r.merged),
            u8::from(r.mc_weights),
            if flags.is_empty() { "NA".to_string() } else { flags.join(",") },
        );
    }
    out
}

pub fn rejects_tsv(rejects: &[Reject]) -> String {
    let mut out = String::from("gene_id\tstage\tmessage\n");
    for r in rejects {
        let _ = writeln!(out, "{}\t{}\t{}", r.gene_id, r.stage, r.message.replace(['\t', '\n'], " "));
    }
    out
}

pub fn summary_text(s: &ScreenSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# genes\t{}", s.genes);
    let _ = writeln!(out, "# screened\t{}", s.screened);
    let _ = writeln!(out, "# rejected\t{}", s.rejected);
    let _ = writeln!(out, "# dropped_at_ingest\t{}", s.dropped_at_ingest);
    let _ = writeln!(out, "# consistent\t{}", s.consistent);
    out.push_str("\nmodel_type\tOSAIC\tAIC\tBIC\n");
    for (k, class) in ModelClass::ALL.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", class.title(), s.selected[0][k], s.selected[1][k], s.selected[2][k]);
    }
    let _ = writeln!(out, "\nH0\tHa\tq<{}", fmt_num(s.fdr_threshold));
    let _ = writeln!(out, "Intercept\tlinear\t{}", s.lm_discoveries);
    let _ = writeln!(out, "Intercept\tfull\t{}", s.plrs_discoveries);
    out
}
