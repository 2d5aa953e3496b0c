use std::fmt::Write as _;

use crate::bands::{band_grid, BandGrid};
use crate::chibar::weights_for;
use crate::error::Result;
use crate::knots::estimate_knots;
use crate::pipeline::config::Config;
use crate::pipeline::screen::{fmt_num, gene_seed, GeneAnalysis};
use crate::seed::mix_seed;
use crate::selection::{select, SelectOptions};
use crate::spline::{build_design, predict, state_name, GeneRecord, KnotSet, SplineSpec};

pub const DEFAULT_GRID_SIZE: usize = 100;

/// Band of the full model for one gene, with the selected fit for display.
#[derive(Debug, Clone)]
pub struct GeneBands {
    pub gene_id: String,
    pub knots: KnotSet,
    pub grid: BandGrid,
    /// State label of each grid point.
    pub states: Vec<i8>,
    pub selected_spec: SplineSpec,
    pub selected_fit: Vec<f64>,
}

pub fn gene_bands(record: &GeneRecord, cfg: &Config, index: usize, alpha: f64, grid_size: usize) -> Result<GeneBands> {
    let seed = gene_seed(cfg, index);
    let (knots, _) = estimate_knots(record, cfg.knot_method, cfg.min_obs_per_state_model)?;
    let full = SplineSpec::full(knots.clone());
    let d = build_design(record, &full)?;
    let weights = weights_for(&d.c, &d.gram, cfg.mc_draws, mix_seed(seed, 2))?;
    let grid = band_grid(&full, &record.x, &record.y, &weights, alpha, grid_size)?;
    let selection = select(record, &knots, cfg.criterion, &SelectOptions { mc_draws: cfg.mc_draws, seed: mix_seed(seed, 0) })?;
    let (spec, scored) = selection.best();
    let selected_fit = predict(spec, scored.fit.theta.as_slice(), &grid.xs)?;
    let states = grid.xs.iter().map(|&x| knots.states()[knots.segment_of(x)]).collect();
    Ok(GeneBands { gene_id: record.id.clone(), knots, grid, states, selected_spec: spec.clone(), selected_fit })
}

pub fn bands_tsv(b: &GeneBands) -> String {
    let mut out = String::from("x\tfitted\tlower\tupper\tstate\tselected\n");
    for i in 0..b.grid.xs.len() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            fmt_num(b.grid.xs[i]),
            fmt_num(b.grid.fitted[i]),
            fmt_num(b.grid.lower[i]),
            fmt_num(b.grid.upper[i]),
            state_name(b.states[i]),
            fmt_num(b.selected_fit[i]),
        );
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;

fn marker(state: i8, px: f64, py: f64) -> String {
    let r = 4.0;
    match state {
        -1 => format!(
            "<polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"none\" stroke=\"#1f4e79\"/>",
            px - r, py - r, px + r, py - r, px, py + r
        ),
        1 => format!(
            "<polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"none\" stroke=\"#9c2a00\"/>",
            px - r, py + r, px + r, py + r, px, py - r
        ),
        2 => format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#6b1d6b\"/>",
            px - r, py - r, 2.0 * r, 2.0 * r
        ),
        _ => format!("<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"{r}\" fill=\"none\" stroke=\"#333333\"/>"),
    }
}

/// Scatter of the gene's observations with the grey band, the full-model fit
/// and the selected fit (dashed).
pub fn bands_svg(record: &GeneRecord, b: &GeneBands) -> String {
    let fold = |it: &mut dyn Iterator<Item = f64>| it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (x0, x1) = fold(&mut record.x.iter().copied().chain(b.grid.xs.iter().copied()));
    let (y0, y1) = fold(
        &mut record
            .y
            .iter()
            .chain(&b.grid.lower)
            .chain(&b.grid.upper)
            .copied()
            .filter(|v| v.is_finite()),
    );
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (xs, ys) = (span(x0, x1), span(y0, y1));
    let px = |x: f64| MARGIN + (x - x0) / xs * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / ys * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">");
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let mut band = String::new();
    for (x, u) in b.grid.xs.iter().zip(&b.grid.upper) {
        let _ = write!(band, "{:.2},{:.2} ", px(*x), py(*u));
    }
    for (x, l) in b.grid.xs.iter().zip(&b.grid.lower).rev() {
        let _ = write!(band, "{:.2},{:.2} ", px(*x), py(*l));
    }
    let _ = writeln!(s, "<polygon points=\"{}\" fill=\"#c8c8c8\" stroke=\"none\"/>", band.trim_end());
    let line = |vals: &[f64]| {
        b.grid.xs.iter().zip(vals).map(|(x, v)| format!("{:.2},{:.2}", px(*x), py(*v))).collect::<Vec<_>>().join(" ")
    };
    let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>", line(&b.grid.fitted));
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-dasharray=\"5,4\"/>",
        line(&b.selected_fit)
    );
    for ((x, y), st) in record.x.iter().zip(&record.y).zip(&record.s) {
        let _ = writeln!(s, "{}", marker(*st, px(*x), py(*y)));
    }
    for k in b.knots.knots() {
        let _ = writeln!(
            s,
            "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" stroke=\"#888888\" stroke-dasharray=\"2,3\"/>",
            px(*k),
            MARGIN,
            H - MARGIN
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let tick = |v: f64| format!("{v:.2}");
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"11\">{}</text>", H - MARGIN + 16.0, tick(x0));
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
        W - MARGIN,
        H - MARGIN + 16.0,
        tick(x1)
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>", MARGIN - 4.0, H - MARGIN, tick(y0));
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>", MARGIN - 4.0, MARGIN + 10.0, tick(y1));
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">segmented copy number</text>", W / 2.0, H - 16.0);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">expression</text>",
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">{} ({:.0}% uniform band)</text>",
        W / 2.0,
        xml_escape(&b.gene_id),
        100.0 * b.grid.level
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Human-readable report of one gene's analysis.
pub fn fit_report(record: &GeneRecord, a: &GeneAnalysis) -> String {
    let mut out = String::new();
    let (spec, scored) = a.selection.best();
    let _ = writeln!(out, "gene\t{}", record.id);
    let _ = writeln!(out, "n\t{}", record.n());
    let states: Vec<&str> = a.model_knots.states().iter().map(|s| state_name(*s)).collect();
    let _ = writeln!(out, "states\t{}", states.join(","));
    let knots: Vec<String> = a.model_knots.knots().iter().map(|k| fmt_num(*k)).collect();
    let _ = writeln!(out, "knots\t{}", if knots.is_empty() { "NA".into() } else { knots.join(",") });
    let _ = writeln!(out, "criterion\t{}", a.selection.criterion);
    let _ = writeln!(out, "selected\t{} ({})", spec.class(), spec.mask_string());
    let _ = writeln!(out, "osaic\t{}\naic\t{}\nbic\t{}", fmt_num(scored.osaic), fmt_num(scored.aic), fmt_num(scored.bic));
    out.push_str("\ncoefficient\testimate\n");
    for (label, v) in spec.coefficient_labels().iter().zip(scored.fit.theta.iter()) {
        let _ = writeln!(out, "{label}\t{}", fmt_num(*v));
    }
    let _ = writeln!(
        out,
        "\nplrs_ebar\t{}\nplrs_pvalue\t{}\nlm_pvalue\t{}",
        fmt_num(a.test.ebar),
        fmt_num(a.test.pvalue),
        a.lm_pvalue.map_or("NA".into(), fmt_num)
    );
    out
}
