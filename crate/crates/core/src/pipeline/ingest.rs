//! Reading matched expression, segmented copy number and calls from
//! tab-separated matrices (features in rows, samples in columns).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{PlrsError, Result};
use crate::spline::GeneRecord;

const MISSING: [&str; 5] = ["", "NA", "NaN", "nan", "null"];

/// A feature-by-sample matrix of raw cells.
#[derive(Debug, Clone)]
pub struct Table {
    pub source: String,
    pub samples: Vec<String>,
    pub ids: Vec<String>,
    /// Cells per feature; `None` when missing.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn index(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }
}

fn parse_cell(source: &str, line: usize, column: usize, token: &str) -> Result<Option<f64>> {
    let t = token.trim();
    if MISSING.contains(&t) {
        return Ok(None);
    }
    t.parse::<f64>().map(Some).map_err(|_| PlrsError::Parse {
        path: source.to_string(),
        line,
        column,
        message: format!("not a number: {t:?}"),
    })
}

/// Parses a matrix with a header row; the first column holds feature ids.
pub fn parse_table(source: &str, text: &str) -> Result<Table> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| PlrsError::Parse {
        path: source.to_string(),
        line: 1,
        column: 1,
        message: "empty file".into(),
    })?;
    let samples: Vec<String> = header.split('\t').skip(1).map(|s| s.trim().to_string()).collect();
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != samples.len() + 1 {
            return Err(PlrsError::Parse {
                path: source.to_string(),
                line: i + 1,
                column: fields.len(),
                message: format!("expected {} fields, found {}", samples.len() + 1, fields.len()),
            });
        }
        ids.push(fields[0].trim().to_string());
        cells.push(
            fields[1..]
                .iter()
                .enumerate()
                .map(|(j, tok)| parse_cell(source, i + 1, j + 2, tok))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(Table { source: source.to_string(), samples, ids, cells })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| PlrsError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn read_table(path: &Path) -> Result<Table> {
    parse_table(&path.display().to_string(), &read_text(path)?)
}

/// Membership probabilities keyed by `(feature, sample)`.
#[derive(Debug, Clone, Default)]
pub struct ProbTable {
    pub entries: HashMap<(String, String), [Option<f64>; 4]>,
}

/// Combines four matrices ordered loss / normal / gain / amplification.
pub fn probs_from_wide(tables: &[Table; 4]) -> Result<ProbTable> {
    let mut entries: HashMap<(String, String), [Option<f64>; 4]> = HashMap::new();
    for (col, table) in tables.iter().enumerate() {
        if table.samples != tables[0].samples {
            return Err(PlrsError::SampleMismatch { path: table.source.clone(), reference: tables[0].source.clone() });
        }
        for (id, row) in table.ids.iter().zip(&table.cells) {
            for (sample, v) in table.samples.iter().zip(row) {
                entries.entry((id.clone(), sample.clone())).or_insert([None; 4])[col] = *v;
            }
        }
    }
    Ok(ProbTable { entries })
}

/// Long format: `feature, sample, p_loss, p_normal, p_gain, p_amp` with a header.
pub fn parse_long_probs(source: &str, text: &str) -> Result<ProbTable> {
    let mut entries = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(PlrsError::Parse {
                path: source.to_string(),
                line: i + 1,
                column: f.len(),
                message: format!("expected 6 fields, found {}", f.len()),
            });
        }
        let mut p = [None; 4];
        for (j, slot) in p.iter_mut().enumerate() {
            *slot = parse_cell(source, i + 1, j + 3, f[j + 2])?;
        }
        entries.insert((f[0].trim().to_string(), f[1].trim().to_string()), p);
    }
    Ok(ProbTable { entries })
}

#[derive(Debug, Clone)]
pub enum ProbInput {
    /// Loss, normal, gain and amplification matrices.
    Wide([PathBuf; 4]),
    Long(PathBuf),
}

#[derive(Debug, Clone)]
pub struct InputPaths {
    pub expression: PathBuf,
    pub segmented: PathBuf,
    pub calls: PathBuf,
    pub probs: Option<ProbInput>,
}

/// A gene left out at ingest, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Dropped {
    pub gene_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<String>,
    pub genes: Vec<GeneRecord>,
    pub dropped: Vec<Dropped>,
}

impl Dataset {
    pub fn find(&self, gene_id: &str) -> Result<(usize, &GeneRecord)> {
        self.genes
            .iter()
            .enumerate()
            .find(|(_, g)| g.id == gene_id)
            .ok_or_else(|| PlrsError::UnknownGene(gene_id.to_string()))
    }
}

fn to_state(v: f64) -> Option<i8> {
    [-1i8, 0, 1, 2].into_iter().find(|&s| v == s as f64)
}

/// Assembles gene records from already parsed tables. Genes follow the order
/// of the expression table; genes with missing cells, absent from a file, or
/// failing validation are dropped.
pub fn assemble(expr: &Table, seg: &Table, calls: &Table, probs: Option<&ProbTable>) -> Result<Dataset> {
    for t in [seg, calls] {
        if t.samples != expr.samples {
            return Err(PlrsError::SampleMismatch { path: t.source.clone(), reference: expr.source.clone() });
        }
    }
    for (r, row) in calls.cells.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if let Some(v) = v.filter(|v| to_state(*v).is_none()) {
                return Err(PlrsError::Parse {
                    path: calls.source.clone(),
                    line: r + 2,
                    column: c + 2,
                    message: format!("call {v} is not one of -1, 0, 1, 2"),
                });
            }
        }
    }
    let seg_idx = seg.index();
    let call_idx = calls.index();
    let mut out = Dataset { samples: expr.samples.clone(), ..Dataset::default() };
    let drop = |out: &mut Dataset, id: &str, reason: String| out.dropped.push(Dropped { gene_id: id.to_string(), reason });

    for (gi, id) in expr.ids.iter().enumerate() {
        let (Some(&si), Some(&ci)) = (seg_idx.get(id.as_str()), call_idx.get(id.as_str())) else {
            drop(&mut out, id, "absent from segmented or calls file".into());
            continue;
        };
        let y = &expr.cells[gi];
        let x = &seg.cells[si];
        let s = &calls.cells[ci];
        if y.iter().chain(x).chain(s).any(Option::is_none) {
            drop(&mut out, id, "missing value".into());
            continue;
        }
        let callprobs = match probs {
            None => None,
            Some(p) => {
                let rows: Option<Vec<[f64; 4]>> = expr
                    .samples
                    .iter()
                    .map(|sample| {
                        let e = p.entries.get(&(id.clone(), sample.clone()))?;
                        Some([e[0]?, e[1]?, e[2]?, e[3]?])
                    })
                    .collect();
                match rows {
                    Some(r) => Some(r),
                    None => {
                        drop(&mut out, id, "missing membership probability".into());
                        continue;
                    }
                }
            }
        };
        let record = GeneRecord::new(
            id.clone(),
            expr.samples.clone(),
            y.iter().map(|v| v.unwrap()).collect(),
            x.iter().map(|v| v.unwrap()).collect(),
            s.iter().map(|v| to_state(v.unwrap()).unwrap()).collect(),
            callprobs,
        );
        match record {
            Ok(r) => out.genes.push(r),
            Err(e) => drop(&mut out, id, e.to_string()),
        }
    }
    let expr_idx = expr.index();
    for t in [seg, calls] {
        for id in &t.ids {
            if !expr_idx.contains_key(id.as_str()) && !out.dropped.iter().any(|d| &d.gene_id == id) {
                drop(&mut out, id, "absent from expression file".into());
            }
        }
    }
    Ok(out)
}

pub fn ingest(paths: &InputPaths) -> Result<Dataset> {
    let expr = read_table(&paths.expression)?;
    let seg = read_table(&paths.segmented)?;
    let calls = read_table(&paths.calls)?;
    let probs = match &paths.probs {
        None => None,
        Some(ProbInput::Long(p)) => Some(parse_long_probs(&p.display().to_string(), &read_text(p)?)?),
        Some(ProbInput::Wide(ps)) => {
            let tables = [read_table(&ps[0])?, read_table(&ps[1])?, read_table(&ps[2])?, read_table(&ps[3])?];
            for t in &tables {
                if t.samples != expr.samples {
                    return Err(PlrsError::SampleMismatch { path: t.source.clone(), reference: expr.source.clone() });
                }
            }
            Some(probs_from_wide(&tables)?)
        }
    };
    assemble(&expr, &seg, &calls, probs.as_ref())
}

/// Expression, segmented and calls matrices of a dataset, in the input format.
pub fn dataset_tables(ds: &Dataset) -> [String; 3] {
    let header = std::iter::once("id".to_string()).chain(ds.samples.iter().cloned()).collect::<Vec<_>>().join("\t");
    let mut out = [header.clone(), header.clone(), header];
    for t in out.iter_mut() {
        t.push('\n');
    }
    for g in &ds.genes {
        let row = |vals: Vec<String>| format!("{}\t{}\n", g.id, vals.join("\t"));
        out[0].push_str(&row(g.y.iter().map(|v| format!("{v}")).collect()));
        out[1].push_str(&row(g.x.iter().map(|v| format!("{v}")).collect()));
        out[2].push_str(&row(g.s.iter().map(|v| format!("{v}")).collect()));
    }
    out
}
