use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use plrs::pipeline::emit::DEFAULT_GRID_SIZE;
use plrs::pipeline::ingest::dataset_tables;
use plrs::pipeline::{
    analyze_gene, bands_svg, bands_tsv, fit_report, gene_bands, ingest, rejects_tsv, rows_tsv, screen, summary_text,
    Config, InputPaths, ProbInput,
};
use plrs::simbench::{
    coverage_tsv, point_estimation_tsv, shapes_tsv, sim_coverage, sim_point_estimation, sim_test_shapes,
    simulate_corpus, CoverageConfig, PointEstimationConfig, ShapeConfig, ShapeFamily,
};
use plrs::PlrsError;

const AFTER_HELP: &str = "\
Settings are resolved in order: defaults, --config file, PLRS_* environment
variables, then command line flags. Config keys: knot_method (1|2), criterion
(osaic|aic|bic), min_obs_per_state_model, min_obs_per_state_test, alpha,
fdr_threshold, mc_draws, seed, threads.

Exit codes: 0 success (warnings allowed), 2 input error, 3 solver failure
affecting every gene.";

#[derive(Parser, Debug)]
#[command(name = "plrs", version, about = "Constrained piecewise linear regression splines for copy number and expression")]
#[command(after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Settings {
    /// Flat key = value configuration file.
    #[arg(long, global = true, env = "PLRS_CONFIG")]
    config: Option<PathBuf>,
    /// Knot placement: 1 (midpoints of hard calls) or 2 (membership probabilities).
    #[arg(long, global = true, env = "PLRS_KNOT_METHOD")]
    knot_method: Option<String>,
    /// Model selection criterion: osaic, aic or bic.
    #[arg(long, global = true, env = "PLRS_CRITERION")]
    criterion: Option<String>,
    #[arg(long, global = true, env = "PLRS_MIN_OBS_MODEL")]
    min_obs_per_state_model: Option<usize>,
    #[arg(long, global = true, env = "PLRS_MIN_OBS_TEST")]
    min_obs_per_state_test: Option<usize>,
    /// Significance level of the confidence bands.
    #[arg(long, global = true, env = "PLRS_ALPHA")]
    alpha: Option<f64>,
    #[arg(long, global = true, env = "PLRS_FDR_THRESHOLD")]
    fdr_threshold: Option<f64>,
    /// Monte Carlo draws for level probabilities.
    #[arg(long, global = true, env = "PLRS_MC_DRAWS")]
    mc_draws: Option<usize>,
    #[arg(long, global = true, env = "PLRS_SEED")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "PLRS_THREADS")]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct Inputs {
    /// Expression matrix (features x samples, tab separated, header row).
    #[arg(long)]
    expression: PathBuf,
    /// Segmented copy number matrix.
    #[arg(long)]
    segmented: PathBuf,
    /// Called states (-1 loss, 0 normal, 1 gain, 2 amplification).
    #[arg(long)]
    calls: PathBuf,
    /// Four probability matrices in the order loss, normal, gain, amplification.
    #[arg(long, num_args = 4, value_names = ["LOSS", "NORMAL", "GAIN", "AMP"], conflicts_with = "probs_long")]
    probs: Option<Vec<PathBuf>>,
    /// Long-format probabilities: feature, sample, p_loss, p_normal, p_gain, p_amp.
    #[arg(long)]
    probs_long: Option<PathBuf>,
}

impl Inputs {
    fn paths(&self) -> InputPaths {
        let probs = match (&self.probs, &self.probs_long) {
            (Some(p), _) => Some(ProbInput::Wide([p[0].clone(), p[1].clone(), p[2].clone(), p[3].clone()])),
            (None, Some(p)) => Some(ProbInput::Long(p.clone())),
            (None, None) => None,
        };
        InputPaths {
            expression: self.expression.clone(),
            segmented: self.segmented.clone(),
            calls: self.calls.clone(),
            probs,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Screen every gene: knots, model selection, PLRS and LM tests, FDR.
    Screen {
        #[command(flatten)]
        inputs: Inputs,
        /// Directory for screen.tsv, rejects.tsv and summary.tsv.
        #[arg(long, default_value = "plrs_out")]
        out_dir: PathBuf,
    },
    /// Fit one gene and print coefficients and criteria.
    Fit {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        gene: String,
    },
    /// Uniform confidence band for one gene as TSV and SVG.
    Bands {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        gene: String,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
        /// Output prefix; writes PREFIX.tsv and PREFIX.svg.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulation studies.
    Simulate {
        #[arg(value_enum)]
        study: Study,
        /// Replicates per cell (study default when omitted).
        #[arg(long)]
        reps: Option<usize>,
        /// Use 10,000 coverage replicates.
        #[arg(long)]
        full_scale: bool,
        /// Shape family for the power study.
        #[arg(long, default_value = "null")]
        shape: String,
        /// Effect sizes for the power study.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        effect: Vec<f64>,
        /// Genes and samples of the corpus study.
        #[arg(long, default_value_t = 500)]
        genes: usize,
        #[arg(long, default_value_t = 60)]
        samples: usize,
        /// Output file (tables) or directory (corpus); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Study {
    /// Slope bias and variance of linear and piecewise fits.
    Point,
    /// Simultaneous coverage of the uniform bands.
    Coverage,
    /// PLRS and LM rejection rates by association shape.
    Shapes,
    /// A matched expression / copy number dataset for screening.
    Corpus,
}

/// Error with its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn input(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn classify(e: PlrsError) -> Failure {
    let code = if e.is_input_error() { 2 } else { 3 };
    Failure { code, error: e.into() }
}

fn config_from(s: &Settings) -> Result<Config, Failure> {
    let mut cfg = match &s.config {
        Some(p) => Config::from_file(p).map_err(classify)?,
        None => Config::default(),
    };
    let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
    set("knot_method", s.knot_method.clone()).map_err(classify)?;
    set("criterion", s.criterion.clone()).map_err(classify)?;
    set("min_obs_per_state_model", s.min_obs_per_state_model.map(|v| v.to_string())).map_err(classify)?;
    set("min_obs_per_state_test", s.min_obs_per_state_test.map(|v| v.to_string())).map_err(classify)?;
    set("alpha", s.alpha.map(|v| v.to_string())).map_err(classify)?;
    set("fdr_threshold", s.fdr_threshold.map(|v| v.to_string())).map_err(classify)?;
    set("mc_draws", s.mc_draws.map(|v| v.to_string())).map_err(classify)?;
    set("seed", s.seed.map(|v| v.to_string())).map_err(classify)?;
    set("threads", s.threads.map(|v| v.to_string())).map_err(classify)?;
    cfg.validate().map_err(classify)?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(input)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = config_from(&cli.settings)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global().map_err(|e| input(anyhow!(e)))?;
    }
    match cli.command {
        Command::Screen { inputs, out_dir } => {
            let ds = ingest(&inputs.paths()).map_err(classify)?;
            let out = screen(&ds, &cfg).map_err(classify)?;
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display())).map_err(input)?;
            write(&out_dir.join("screen.tsv"), &rows_tsv(&out.rows))?;
            write(&out_dir.join("rejects.tsv"), &rejects_tsv(&out.rejects))?;
            let summary = summary_text(&out.summary);
            write(&out_dir.join("summary.tsv"), &summary)?;
            print!("{summary}");
            if !out.rejects.is_empty() {
                eprintln!("warning: {} gene(s) rejected, see rejects.tsv", out.rejects.len());
            }
            if out.rows.is_empty() && out.summary.rejected > 0 {
                return Err(Failure { code: 3, error: anyhow!("every gene failed in the solver stage") });
            }
            Ok(())
        }
        Command::Fit { inputs, gene } => {
            let ds = ingest(&inputs.paths()).map_err(classify)?;
            let (index, record) = ds.find(&gene).map_err(classify)?;
            let analysis = analyze_gene(record, &cfg, index).map_err(classify)?;
            print!("{}", fit_report(record, &analysis));
            Ok(())
        }
        Command::Bands { inputs, gene, grid_size, out } => {
            let ds = ingest(&inputs.paths()).map_err(classify)?;
            let (index, record) = ds.find(&gene).map_err(classify)?;
            let bands = gene_bands(record, &cfg, index, cfg.alpha, grid_size).map_err(classify)?;
            write(&out.with_extension("tsv"), &bands_tsv(&bands))?;
            write(&out.with_extension("svg"), &bands_svg(record, &bands))?;
            Ok(())
        }
        Command::Simulate { study, reps, full_scale, shape, effect, genes, samples, out } => match study {
            Study::Point => {
                let mut c = PointEstimationConfig { seed: cfg.seed, ..Default::default() };
                c.reps = reps.unwrap_or(c.reps);
                emit(&out, &point_estimation_tsv(&sim_point_estimation(&c).map_err(classify)?))
            }
            Study::Coverage => {
                let mut c = CoverageConfig { seed: cfg.seed, mc_draws: cfg.mc_draws, ..Default::default() };
                c.reps = reps.unwrap_or(if full_scale { 10_000 } else { c.reps });
                emit(&out, &coverage_tsv(&sim_coverage(&c).map_err(classify)?))
            }
            Study::Shapes => {
                let family: ShapeFamily = shape.parse().map_err(classify)?;
                let runs = effect
                    .iter()
                    .map(|&e| {
                        let mut c = ShapeConfig { shape: family, effect: e, seed: cfg.seed, mc_draws: cfg.mc_draws, ..Default::default() };
                        c.reps = reps.unwrap_or(c.reps);
                        sim_test_shapes(&c)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(classify)?;
                emit(&out, &shapes_tsv(&runs))
            }
            Study::Corpus => {
                let ds = simulate_corpus(genes, samples, cfg.seed).map_err(classify)?;
                let dir = out.unwrap_or_else(|| PathBuf::from("plrs_corpus"));
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(input)?;
                let [expr, seg, calls] = dataset_tables(&ds);
                write(&dir.join("expression.tsv"), &expr)?;
                write(&dir.join("segmented.tsv"), &seg)?;
                write(&dir.join("calls.tsv"), &calls)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
