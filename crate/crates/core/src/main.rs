use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use motifreg::dictionary::Dictionary;
use motifreg::expression::BasisSelection;
use motifreg::io::{parse_expression_tsv, write_expression, write_fasta};
use motifreg::model::ForwardModel;
use motifreg::pipeline::{
    compute_basis, run_pipeline, Analysis, FlankEngine, Inputs, PipelineConfig, Staging,
};
use motifreg::pruning::{LofCurve, LofKind, TauSum};
use motifreg::report;
use motifreg::synth::{generate, SynthConfig};
use motifreg::{Error, Result};

#[derive(Parser)]
#[command(name = "motifreg", version, about = "Regression-based promoter motif discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Standardize expression and write the SVD basis.
    Basis(StageArgs),
    /// Select motif words per basis component.
    Dict(StageArgs),
    /// Forward selection of words and composite elements.
    Build {
        #[command(flatten)]
        stage: StageArgs,
        /// Reuse an existing dictionary.tsv instead of rebuilding it.
        #[arg(long)]
        dictionary: Option<PathBuf>,
    },
    /// Backward pruning of a forward model.
    Prune {
        #[command(flatten)]
        stage: StageArgs,
        /// Reuse an existing forward_trajectory.tsv.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Enrichment, flank and alignment statistics for the pruned model.
    Validate {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Requires --trajectory.
        #[arg(long, requires = "trajectory")]
        lof_curve: Option<PathBuf>,
    },
    /// Every stage, reports, plot data and the manifest.
    Run(StageArgs),
    /// Write the planted-pair synthetic dataset.
    Synth(SynthArgs),
    /// Regenerate plot CSVs from the artifacts in a run directory.
    Plot {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LofArg {
    Wgcv,
    Wmbic,
}

#[derive(Clone, Copy, ValueEnum)]
enum TauSumArg {
    PerElement,
    Global,
    Bracketed,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Chisq,
    Lattice,
}

#[derive(Args)]
struct StageArgs {
    /// JSON configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    expression: PathBuf,
    /// Promoter FASTA (not needed by `basis`).
    #[arg(long)]
    fasta: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    word_lengths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<u32>>,
    #[arg(long)]
    dict_batch: Option<usize>,
    #[arg(long)]
    model_budget: Option<usize>,
    #[arg(long)]
    max_order: Option<usize>,
    /// 1-based component indices.
    #[arg(long, value_delimiter = ',', conflicts_with = "top")]
    components: Option<Vec<usize>>,
    #[arg(long)]
    top: Option<usize>,
    #[arg(long, value_enum)]
    lof: Option<LofArg>,
    #[arg(long, value_enum)]
    tau_sum: Option<TauSumArg>,
    #[arg(long)]
    flank: Option<usize>,
    #[arg(long, value_enum)]
    flank_engine: Option<EngineArg>,
    #[arg(long)]
    lattice_step: Option<f64>,
    #[arg(long)]
    n_permutations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gene_list: Option<PathBuf>,
    #[arg(long)]
    promoter_len: Option<usize>,
}

impl StageArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_json_file(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = &self.$f { c.$f = v.clone().into(); })* };
        }
        set!(word_lengths, deltas, dict_batch, model_budget, max_order, flank, lattice_step);
        set!(n_permutations, seed);
        if let Some(p) = &self.gene_list {
            c.gene_list = Some(p.clone());
        }
        if let Some(r) = self.promoter_len {
            c.promoter_len = Some(r);
        }
        if let Some(v) = &self.components {
            c.basis = BasisSelection::Components(v.clone());
        } else if let Some(k) = self.top {
            c.basis = BasisSelection::Top(k);
        }
        if let Some(l) = self.lof {
            c.lof = match l {
                LofArg::Wgcv => LofKind::Wgcv,
                LofArg::Wmbic => LofKind::Wmbic,
            };
        }
        if let Some(t) = self.tau_sum {
            c.tau_sum = match t {
                TauSumArg::PerElement => TauSum::PerElement,
                TauSumArg::Global => TauSum::Global,
                TauSumArg::Bracketed => TauSum::Bracketed,
            };
        }
        if let Some(e) = self.flank_engine {
            c.flank_engine = match e {
                EngineArg::Chisq => FlankEngine::Chisq,
                EngineArg::Lattice => FlankEngine::Lattice,
            };
        }
        c.validate()?;
        Ok(c)
    }

    fn inputs(&self, config: &PipelineConfig) -> Result<Inputs> {
        let fasta = self
            .fasta
            .as_deref()
            .ok_or_else(|| Error::Input("--fasta is required for this subcommand".into()))?;
        Inputs::load(&self.expression, fasta, config.gene_list.as_deref())
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    genes: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    planted: Option<usize>,
    #[arg(long)]
    delta: Option<u32>,
    #[arg(long)]
    word_len: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    effect: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
}

fn read_artifact(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|_| Error::MissingArtifact(p.to_path_buf()))
}

/// Runs one stage into `out` through a staging directory.
fn staged(out: &Path, f: impl FnOnce(&mut Staging) -> Result<()>) -> Result<()> {
    let mut s = Staging::new(out)?;
    f(&mut s)?;
    for p in s.commit()? {
        info!("wrote {}", p.display());
    }
    Ok(())
}

fn trajectory_model(a: &Analysis, path: Option<&Path>) -> Result<ForwardModel> {
    match path {
        Some(p) => {
            let elements = ForwardModel::parse_trajectory(&read_artifact(p)?, p)?;
            Ok(a.model_from_elements(&elements))
        }
        None => {
            let dict = a.dictionary()?;
            a.forward(&dict)
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Basis(args) => {
            let c = args.config()?;
            let y = parse_expression_tsv(&args.expression)?;
            let basis = compute_basis(&y, &c.basis)?;
            staged(&args.out, |s| {
                s.write("scree.tsv", &report::scree_tsv(&basis))?;
                s.write("loadings.tsv", &report::loadings_tsv(&basis, &y))
            })
        }
        Command::Dict(args) => {
            let c = args.config()?;
            let inputs = args.inputs(&c)?;
            let basis = compute_basis(&inputs.expression, &c.basis)?;
            let a = Analysis::new(&c, &basis, inputs.promoters)?;
            let dict = a.dictionary()?;
            staged(&args.out, |s| s.write("dictionary.tsv", &dict.to_tsv()))
        }
        Command::Build { stage, dictionary } => {
            let c = stage.config()?;
            let inputs = stage.inputs(&c)?;
            let basis = compute_basis(&inputs.expression, &c.basis)?;
            let a = Analysis::new(&c, &basis, inputs.promoters)?;
            let dict = match &dictionary {
                Some(p) => Dictionary::from_tsv(&read_artifact(p)?, p)?,
                None => a.dictionary()?,
            };
            let model = a.forward(&dict)?;
            staged(&stage.out, |s| {
                if dictionary.is_none() {
                    s.write("dictionary.tsv", &dict.to_tsv())?;
                }
                s.write("forward_trajectory.tsv", &model.trajectory_tsv())
            })
        }
        Command::Prune { stage, trajectory } => {
            let c = stage.config()?;
            let inputs = stage.inputs(&c)?;
            let basis = compute_basis(&inputs.expression, &c.basis)?;
            let a = Analysis::new(&c, &basis, inputs.promoters)?;
            let model = trajectory_model(&a, trajectory.as_deref())?;
            let curve = a.prune(&model)?;
            staged(&stage.out, |s| {
                if trajectory.is_none() {
                    s.write("forward_trajectory.tsv", &model.trajectory_tsv())?;
                }
                s.write("lof_curve.tsv", &curve.to_tsv())
            })
        }
        Command::Validate {
            stage,
            trajectory,
            lof_curve,
        } => {
            let c = stage.config()?;
            let inputs = stage.inputs(&c)?;
            let basis = compute_basis(&inputs.expression, &c.basis)?;
            let a = Analysis::new(&c, &basis, inputs.promoters)?;
            let model = trajectory_model(&a, trajectory.as_deref())?;
            let curve = match &lof_curve {
                Some(p) => LofCurve::from_tsv(&read_artifact(p)?, &model.elements(), p)?,
                None => a.prune(&model)?,
            };
            let (_, tsv) = a.report(&inputs.expression, &curve, inputs.gene_list.as_ref())?;
            let effects = report::effect_curves_tsv(&a, &inputs.expression, curve.selected())?;
            staged(&stage.out, |s| {
                s.write("model_report.tsv", &tsv)?;
                s.write("effect_curves.tsv", &effects)
            })
        }
        Command::Run(args) => {
            let c = args.config()?;
            let inputs = args.inputs(&c)?;
            let summary = run_pipeline(&c, &inputs, &args.out)?;
            for e in &summary.final_model {
                println!("{e}");
            }
            Ok(())
        }
        Command::Synth(a) => {
            let mut c = SynthConfig {
                seed: a.seed,
                ..SynthConfig::default()
            };
            macro_rules! set {
                ($($f:ident),*) => { $(if let Some(v) = a.$f { c.$f = v; })* };
            }
            set!(genes, length, planted, delta, word_len, samples, effect, noise);
            let data = generate(&c)?;
            let suggested = PipelineConfig {
                deltas: vec![50, 200, 1000],
                max_order: 2,
                seed: c.seed,
                ..PipelineConfig::default()
            };
            staged(&a.out, |s| {
                s.write("promoters.fa", &write_fasta(&data.promoters))?;
                s.write("expression.tsv", &write_expression(&data.expression))?;
                s.write("truth.json", &data.truth_json(&c))?;
                s.write("config.json", &(serde_json::to_string_pretty(&suggested)? + "\n"))
            })
        }
        Command::Plot { dir } => {
            for p in report::emit_plot_data(&dir)? {
                info!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
