//! Genome-wide screening: ingest, per-gene analysis, FDR control, and the
//! tables and plots written by the command line tool.

pub mod config;
pub mod emit;
pub mod ingest;
pub mod screen;

pub use config::Config;
pub use emit::{bands_svg, bands_tsv, fit_report, gene_bands, GeneBands};
pub use ingest::{assemble, ingest, Dataset, InputPaths, ProbInput};
pub use screen::{analyze_gene, rejects_tsv, rows_tsv, screen, summary_text, ScreenOutput, ScreenRow, ScreenSummary};
