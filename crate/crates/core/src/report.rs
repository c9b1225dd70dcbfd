//! Tabular artifacts and plot data.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};
use crate::expression::{variance_explained, BasisSet, ExpressionMatrix};
use crate::pipeline::{Analysis, FlankEngine};
use crate::pruning::LofCurve;
use crate::regression::effect_curve;
use crate::sequence::{MotifWord, PromoterElement};
use crate::validation::{
    build_flank_alignment, component_alignment, fisher_enrichment, flank_pvalue_chisq,
    flank_pvalue_lattice, information_content, EnrichmentTable, DEFAULT_LATTICE_BUDGET,
};

pub fn scree_tsv(basis: &BasisSet) -> String {
    let selected = basis.selected();
    let frac = variance_explained(basis);
    let mut out = String::from("component\tsingular_value\tweight\tvariance_fraction\tselected\n");
    for (i, (s, f)) in basis.singular_values.iter().zip(&frac).enumerate() {
        let sel = if selected.contains(&(i + 1)) { "yes" } else { "no" };
        writeln!(out, "{}\t{}\t{}\t{}\t{sel}", i + 1, s, s * s, f).unwrap();
    }
    out
}

pub fn loadings_tsv(basis: &BasisSet, y: &ExpressionMatrix) -> String {
    let mut out = String::from("component\tsample\tloading\n");
    for c in &basis.components {
        for (label, v) in y.sample_labels.iter().zip(&c.loading) {
            writeln!(out, "{}\t{label}\t{v}", c.index).unwrap();
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlankStat {
    pub word: MotifWord,
    pub n: usize,
    pub info: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    /// Reverse pruning order.
    pub rank: usize,
    pub element: PromoterElement,
    pub order: usize,
    pub tau: usize,
    pub overlap: Option<u64>,
    pub fisher_p: Option<f64>,
    /// `None` for words without a complete flanking window.
    pub flank: Vec<(MotifWord, Option<FlankStat>)>,
    /// (component, z, p) per basis component.
    pub alignment: Vec<(usize, Option<(f64, f64)>)>,
}

impl ReportRow {
    pub fn strong_components(&self) -> Vec<usize> {
        self.alignment
            .iter()
            .filter_map(|(c, t)| t.filter(|(_, p)| *p < 1e-3).map(|_| *c))
            .collect()
    }
}

fn distinct_words(e: &PromoterElement) -> Vec<MotifWord> {
    let mut out: Vec<MotifWord> = Vec::new();
    for w in e.words() {
        if !out.iter().any(|x| x.canonical() == w.canonical()) {
            out.push(w.clone());
        }
    }
    out
}

fn flank_stat(a: &Analysis, e: &PromoterElement, w: &MotifWord) -> Result<Option<FlankStat>> {
    let fa = match build_flank_alignment(e, w, &a.promoters, a.config.flank) {
        Ok(fa) => fa,
        Err(Error::NoFlankInstances(_)) => return Ok(None),
        Err(err) => return Err(err),
    };
    let info = information_content(&fa)?;
    let p = match a.config.flank_engine {
        FlankEngine::Chisq => flank_pvalue_chisq(fa.n(), info, fa.columns()),
        FlankEngine::Lattice => {
            match flank_pvalue_lattice(&fa, a.config.lattice_step, DEFAULT_LATTICE_BUDGET) {
                Ok(p) => p,
                Err(Error::LatticeBudget { work, budget }) => {
                    warn!("lattice for {e}/{w} needs {work} > {budget}; using chi-square");
                    flank_pvalue_chisq(fa.n(), info, fa.columns())
                }
                Err(err) => return Err(err),
            }
        }
    };
    Ok(Some(FlankStat {
        word: w.clone(),
        n: fa.n(),
        info,
        p,
    }))
}

fn fmt_p(p: f64) -> String {
    format!("{p:.3e}")
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    if items.is_empty() {
        return "-".into();
    }
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

/// One row per element of the pruned model, ranked by reverse pruning order.
pub fn build_report(
    a: &Analysis,
    expression: &ExpressionMatrix,
    curve: &LofCurve,
    gene_list: Option<&HashSet<String>>,
) -> Result<(Vec<ReportRow>, String)> {
    let _ = expression;
    let listed: Option<HashSet<usize>> = gene_list.map(|l| {
        a.promoters
            .iter()
            .enumerate()
            .filter(|(_, p)| l.contains(&p.gene_id))
            .map(|(g, _)| g)
            .collect()
    });
    let mut rows = Vec::new();
    for (rank, e) in curve.ranking().into_iter().take(curve.m_star) {
        let sites = a.index.element_sites(&e);
        let column = sites.feature_f64(e.is_simple());
        let (overlap, fisher_p) = match &listed {
            Some(l) => {
                let m = sites
                    .entries()
                    .iter()
                    .filter(|(g, _)| l.contains(&(*g as usize)))
                    .count() as u64;
                let t = EnrichmentTable::new(a.genes() as u64, l.len() as u64, sites.tau() as u64, m)?;
                (Some(m), Some(fisher_enrichment(&t)))
            }
            None => (None, None),
        };
        let flank = distinct_words(&e)
            .into_iter()
            .map(|w| flank_stat(a, &e, &w).map(|s| (w, s)))
            .collect::<Result<Vec<_>>>()?;
        let alignment = a
            .basis
            .components
            .iter()
            .map(|c| {
                (
                    c.index,
                    component_alignment(&column, &c.scores).ok().map(|t| (t.z, t.p)),
                )
            })
            .collect();
        rows.push(ReportRow {
            rank,
            order: e.order(),
            tau: sites.tau(),
            element: e,
            overlap,
            fisher_p,
            flank,
            alignment,
        });
    }
    let with_list = listed.is_some();
    let mut out = String::from("rank\telement\torder\ttau");
    if with_list {
        out.push_str("\tlist_overlap\tfisher_p");
    }
    out.push_str("\tflank_words\tflank_n\tflank_info\tflank_p\twilcoxon_p\tstrong_components\n");
    for r in &rows {
        write!(out, "{}\t{}\t{}\t{}", r.rank, r.element, r.order, r.tau).unwrap();
        if with_list {
            write!(
                out,
                "\t{}\t{}",
                r.overlap.expect("list given"),
                fmt_p(r.fisher_p.expect("list given"))
            )
            .unwrap();
        }
        let stat = |f: &dyn Fn(&FlankStat) -> String| {
            join(&r.flank, |(_, s)| s.as_ref().map_or("NA".into(), f))
        };
        writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}",
            join(&r.flank, |(w, _)| w.to_string()),
            stat(&|s| s.n.to_string()),
            stat(&|s| format!("{:.4}", s.info)),
            stat(&|s| fmt_p(s.p)),
            join(&r.alignment, |(c, t)| match t {
                Some((_, p)) => format!("{c}:{}", fmt_p(*p)),
                None => format!("{c}:NA"),
            }),
            join(&r.strong_components(), |c| c.to_string()),
        )
        .unwrap();
    }
    Ok((rows, out))
}

/// Per-sample correlation of each element's feature column with expression.
pub fn effect_curves_tsv(
    a: &Analysis,
    expression: &ExpressionMatrix,
    elements: &[PromoterElement],
) -> Result<String> {
    let mut out = String::from("element\tsample\tcorrelation\n");
    for e in elements {
        let column = a.index.element_sites(e).feature_f64(e.is_simple());
        let curve = match effect_curve(&column, expression) {
            Ok(c) => c,
            Err(Error::ConstantFeature) => {
                warn!("{e} is constant across genes; no effect curve");
                continue;
            }
            Err(err) => return Err(err),
        };
        for (label, r) in expression.sample_labels.iter().zip(curve) {
            writeln!(out, "{e}\t{label}\t{r}").unwrap();
        }
    }
    Ok(out)
}

fn read_artifact(dir: &Path, name: &str) -> Result<String> {
    let p = dir.join(name);
    fs::read_to_string(&p).map_err(|_| Error::MissingArtifact(p))
}

fn tsv_to_csv(text: &str, header: &[&str]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        w.write_record(line.split('\t')).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("UTF-8 input"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Long-format CSVs behind the basis, effect-curve and lack-of-fit plots.
pub fn plot_data(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = vec![
        (
            "plot_basis.csv".to_string(),
            tsv_to_csv(&read_artifact(dir, "loadings.tsv")?, &["component", "sample", "loading"])?,
        ),
        (
            "plot_effects.csv".to_string(),
            tsv_to_csv(
                &read_artifact(dir, "effect_curves.tsv")?,
                &["element", "sample", "correlation"],
            )?,
        ),
    ];
    let lof = if dir.join("permutation_curves.tsv").exists() {
        read_artifact(dir, "permutation_curves.tsv")?
    } else {
        let curve = read_artifact(dir, "lof_curve.tsv")?;
        let mut t = String::from("run\tm\tlof\n");
        for line in curve.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() == 3 {
                writeln!(t, "real\t{}\t{}", f[0], f[2]).unwrap();
            }
        }
        t
    };
    out.push(("plot_lof.csv".to_string(), tsv_to_csv(&lof, &["run", "m", "lof"])?));
    Ok(out)
}

pub fn emit_plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, content) in plot_data(dir)? {
        let p = dir.join(name);
        fs::write(&p, content)?;
        written.push(p);
    }
    Ok(written)
}
