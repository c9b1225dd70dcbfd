//! Stage orchestration: basis, dictionary, forward build, pruning, reports,
//! permutation study, artifact staging and the run manifest.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionary::{build_component_dictionary, merge_dictionaries, Dictionary};
use crate::error::{Error, Result};
use crate::expression::{compute_svd_basis, standardize_samples, BasisSelection, BasisSet, ExpressionMatrix};
use crate::io::{parse_expression_tsv, parse_fasta, parse_gene_list};
use crate::model::{build_model, ForwardModel, ModelConfig};
use crate::pruning::{prune_backward, LofCurve, LofKind, PenaltySpec, PruningProblem, TauSum};
use crate::report::{self, ReportRow};
use crate::sequence::{enumerate_words, MotifWord, PromoterSet, Scale, WordIndex};
use crate::validation::{decouple, split_seeds};

pub const MAX_WORD_LEN: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlankEngine {
    #[default]
    Chisq,
    Lattice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub word_lengths: Vec<usize>,
    pub deltas: Vec<u32>,
    pub dict_batch: usize,
    pub model_budget: usize,
    pub max_order: usize,
    pub basis: BasisSelection,
    pub lof: LofKind,
    pub tau_sum: TauSum,
    pub flank: usize,
    pub flank_engine: FlankEngine,
    pub lattice_step: f64,
    pub n_permutations: usize,
    pub seed: u64,
    pub gene_list: Option<PathBuf>,
    /// Promoter length used in the knot penalty; defaults to the longest promoter.
    pub promoter_len: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            word_lengths: vec![5, 6, 7],
            deltas: vec![30, 100, 400, 1000],
            dict_batch: 16,
            model_budget: 50,
            max_order: 2,
            basis: BasisSelection::Top(1),
            lof: LofKind::Wmbic,
            tau_sum: TauSum::Global,
            flank: 10,
            flank_engine: FlankEngine::Chisq,
            lattice_step: 0.01,
            n_permutations: 0,
            seed: 0,
            gene_list: None,
            promoter_len: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_lengths.is_empty() {
            return Err(Error::Config("at least one word length is required".into()));
        }
        if let Some(&l) = self
            .word_lengths
            .iter()
            .find(|&&l| l == 0 || l > MAX_WORD_LEN)
        {
            return Err(Error::Config(format!("word length {l} outside 1..={MAX_WORD_LEN}")));
        }
        if self.dict_batch == 0 {
            return Err(Error::Config("dict_batch must be positive".into()));
        }
        if self.flank == 0 {
            return Err(Error::Config("flank must be positive".into()));
        }
        if self.lattice_step.is_nan() || self.lattice_step <= 0.0 {
            return Err(Error::Config("lattice_step must be positive".into()));
        }
        if self.promoter_len.is_some_and(|r| r < 2) {
            return Err(Error::Config("promoter_len must exceed 1".into()));
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            deltas: self.deltas.clone(),
            budget: self.model_budget,
            max_order: self.max_order,
        }
    }

    fn sorted_lengths(&self) -> Vec<usize> {
        let mut l = self.word_lengths.clone();
        l.sort_unstable();
        l.dedup();
        l
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Raw inputs with promoters reordered to the expression gene order.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub expression: ExpressionMatrix,
    pub promoters: PromoterSet,
    pub gene_list: Option<HashSet<String>>,
    pub hashes: BTreeMap<String, String>,
}

impl Inputs {
    pub fn load(expression: &Path, fasta: &Path, gene_list: Option<&Path>) -> Result<Self> {
        let mut hashes = BTreeMap::new();
        let mut hash = |name: &str, p: &Path| -> Result<()> {
            let bytes = fs::read(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
            hashes.insert(name.to_string(), sha256_hex(&bytes));
            Ok(())
        };
        hash("expression", expression)?;
        hash("promoters", fasta)?;
        if let Some(g) = gene_list {
            hash("gene_list", g)?;
        }
        let y = parse_expression_tsv(expression)?;
        let ps = parse_fasta(fasta)?.aligned_to(&y.gene_ids)?;
        let gene_list = gene_list.map(parse_gene_list).transpose()?;
        Ok(Inputs {
            expression: y,
            promoters: ps,
            gene_list,
            hashes,
        })
    }

    pub fn from_parts(expression: ExpressionMatrix, promoters: PromoterSet) -> Result<Self> {
        let promoters = promoters.aligned_to(&expression.gene_ids)?;
        Ok(Inputs {
            expression,
            promoters,
            gene_list: None,
            hashes: BTreeMap::new(),
        })
    }
}

pub fn compute_basis(y: &ExpressionMatrix, selection: &BasisSelection) -> Result<BasisSet> {
    standardize_samples(y)
        .and_then(|z| compute_svd_basis(&z, selection))
        .map_err(|e| e.in_stage("basis"))
}

/// Everything downstream of the basis for one promoter set.
pub struct Analysis<'a> {
    pub config: &'a PipelineConfig,
    pub basis: &'a BasisSet,
    pub promoters: PromoterSet,
    pub index: WordIndex,
}

impl<'a> Analysis<'a> {
    pub fn new(config: &'a PipelineConfig, basis: &'a BasisSet, promoters: PromoterSet) -> Result<Self> {
        config.validate()?;
        if basis.components.iter().any(|c| c.scores.len() != promoters.len()) {
            return Err(Error::Input("basis and promoter set disagree on gene count".into()));
        }
        let index = WordIndex::build(
            &promoters,
            &config.sorted_lengths(),
            Scale::new(config.max_order as u32),
        );
        Ok(Analysis {
            config,
            basis,
            promoters,
            index,
        })
    }

    pub fn genes(&self) -> usize {
        self.promoters.len()
    }

    pub fn promoter_len(&self) -> usize {
        self.config.promoter_len.unwrap_or_else(|| self.promoters.max_len())
    }

    pub fn penalty(&self) -> PenaltySpec {
        PenaltySpec {
            kind: self.config.lof,
            promoter_len: self.promoter_len(),
            genes: self.genes(),
            tau_sum: self.config.tau_sum,
        }
    }

    pub fn dictionary(&self) -> Result<Dictionary> {
        let run = || -> Result<Dictionary> {
            let mut candidates: Vec<MotifWord> = Vec::new();
            for l in self.config.sorted_lengths() {
                candidates.extend(enumerate_words(l as i64)?);
            }
            let mut lists = Vec::new();
            for c in &self.basis.components {
                let words =
                    build_component_dictionary(&c.scores, &candidates, self.config.dict_batch, &self.index)?;
                lists.push((c.index, words));
            }
            Ok(merge_dictionaries(&lists))
        };
        run().map_err(|e| e.in_stage("dictionary"))
    }

    pub fn forward(&self, dict: &Dictionary) -> Result<ForwardModel> {
        build_model(
            dict,
            &self.config.model_config(),
            &self.basis.scores(),
            &self.basis.weights(),
            &self.index,
        )
        .map_err(|e| e.in_stage("build"))
    }

    pub fn model_from_elements(&self, elements: &[crate::sequence::PromoterElement]) -> ForwardModel {
        ForwardModel::from_elements(elements, &self.index, &self.basis.scores(), &self.basis.weights())
    }

    pub fn prune(&self, model: &ForwardModel) -> Result<LofCurve> {
        let problem = PruningProblem::from_model(
            model,
            &self.index,
            &self.basis.scores(),
            &self.basis.weights(),
        );
        prune_backward(&problem, &self.penalty()).map_err(|e| e.in_stage("prune"))
    }

    /// Steps A to C.
    pub fn run(&self) -> Result<(Dictionary, ForwardModel, LofCurve)> {
        let dict = self.dictionary()?;
        info!("dictionary: {} words", dict.len());
        let model = self.forward(&dict)?;
        info!("forward model: {} elements", model.len());
        let curve = self.prune(&model)?;
        info!("pruned model: {} elements", curve.m_star);
        Ok((dict, model, curve))
    }

    pub fn report(
        &self,
        expression: &ExpressionMatrix,
        curve: &LofCurve,
        gene_list: Option<&HashSet<String>>,
    ) -> Result<(Vec<ReportRow>, String)> {
        report::build_report(self, expression, curve, gene_list).map_err(|e| e.in_stage("validate"))
    }
}

/// Outcome of one decoupled replicate.
pub struct Replicate {
    pub label: String,
    pub seed: u64,
    pub curve: Result<LofCurve>,
}

/// Steps A to C on `n` decoupled promoter sets with seeds split from the
/// master seed, run in parallel. Failures are kept per replicate.
pub fn permutation_study(
    config: &PipelineConfig,
    basis: &BasisSet,
    promoters: &PromoterSet,
    n: usize,
) -> Vec<Replicate> {
    split_seeds(config.seed, n)
        .into_par_iter()
        .enumerate()
        .map(|(i, seed)| {
            let label = format!("perm{}", i + 1);
            let curve = Analysis::new(config, basis, decouple(promoters, seed))
                .and_then(|a| a.run().map(|(_, _, c)| c));
            if let Err(e) = &curve {
                warn!("{label} failed: {e}");
            }
            Replicate { label, seed, curve }
        })
        .collect()
}

pub fn permutation_tsv(real: &LofCurve, replicates: &[Replicate]) -> String {
    let mut out = String::from("run\tm\tlof\n");
    let mut push = |label: &str, c: &LofCurve| {
        for p in &c.points {
            out.push_str(&format!("{label}\t{}\t{}\n", p.m, p.lof));
        }
    };
    push("real", real);
    for r in replicates {
        if let Ok(c) = &r.curve {
            push(&r.label, c);
        }
    }
    out
}

/// Files collected in a private staging directory and moved into place only
/// when every stage succeeded.
pub struct Staging {
    dir: tempfile::TempDir,
    out: PathBuf,
    files: BTreeMap<String, String>,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        if out.exists() && !out.is_dir() {
            return Err(Error::Input(format!("{} is not a directory", out.display())));
        }
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let dir = tempfile::Builder::new()
            .prefix(".motifreg-staging-")
            .tempdir_in(&parent)?;
        Ok(Staging {
            dir,
            out: out.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<()> {
        fs::write(self.dir.path().join(name), content)?;
        self.files.insert(name.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Moves every staged file into the output directory.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.out)?;
        let mut written = Vec::new();
        for name in self.files.keys() {
            let dst = self.out.join(name);
            fs::rename(self.dir.path().join(name), &dst)?;
            written.push(dst);
        }
        Ok(written)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a PipelineConfig,
    inputs: &'a BTreeMap<String, String>,
    replicate_seeds: Vec<u64>,
    failed_replicates: Vec<String>,
    artifacts: &'a BTreeMap<String, String>,
}

pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub final_model: Vec<crate::sequence::PromoterElement>,
    pub curve: LofCurve,
    pub replicates: Vec<(String, Option<LofCurve>)>,
}

/// Full pipeline into `out`. Nothing is written unless every stage succeeds.
pub fn run_pipeline(config: &PipelineConfig, inputs: &Inputs, out: &Path) -> Result<RunSummary> {
    config.validate()?;
    let mut staging = Staging::new(out)?;
    let basis = compute_basis(&inputs.expression, &config.basis)?;
    staging.write("scree.tsv", &report::scree_tsv(&basis))?;
    staging.write("loadings.tsv", &report::loadings_tsv(&basis, &inputs.expression))?;

    let analysis = Analysis::new(config, &basis, inputs.promoters.clone())?;
    let (dict, model, curve) = analysis.run()?;
    staging.write("dictionary.tsv", &dict.to_tsv())?;
    staging.write("forward_trajectory.tsv", &model.trajectory_tsv())?;
    staging.write("lof_curve.tsv", &curve.to_tsv())?;

    let (_, report_tsv) = analysis.report(&inputs.expression, &curve, inputs.gene_list.as_ref())?;
    staging.write("model_report.tsv", &report_tsv)?;
    staging.write(
        "effect_curves.tsv",
        &report::effect_curves_tsv(&analysis, &inputs.expression, curve.selected())?,
    )?;

    let replicates = if config.n_permutations > 0 {
        let reps = permutation_study(config, &basis, &inputs.promoters, config.n_permutations);
        staging.write("permutation_curves.tsv", &permutation_tsv(&curve, &reps))?;
        reps
    } else {
        Vec::new()
    };
    for (name, content) in report::plot_data(staging.path())? {
        staging.write(&name, &content)?;
    }

    let artifacts = staging.hashes().clone();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
        inputs: &inputs.hashes,
        replicate_seeds: replicates.iter().map(|r| r.seed).collect(),
        failed_replicates: replicates
            .iter()
            .filter(|r| r.curve.is_err())
            .map(|r| r.label.clone())
            .collect(),
        artifacts: &artifacts,
    };
    staging.write("manifest.json", &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    let files = staging.commit()?;
    Ok(RunSummary {
        files,
        final_model: curve.selected().to_vec(),
        replicates: replicates
            .into_iter()
            .map(|r| (r.label, r.curve.ok()))
            .collect(),
        curve,
    })
}
