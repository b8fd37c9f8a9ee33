use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ath_core::data::{generate_synthetic_gitr, load_dataset, save_dataset, DomainId, MatrixFormat};
use ath_core::diagnostics::trace_transfer;
use ath_core::graph::{build_semantic_bipartite, AffinityGraph};
use ath_core::model::{load_model, save_model};
use ath_core::optimizer::domain_graphs;
use ath_core::retrieval::{
    mean_average_precision, per_query_average_precision, precision_recall_curve, run_gitr_retrieval,
};
use ath_core::{
    Direction, DomainDataset, GitrTask, SplitTask, Subtask, SynthSpec, TrainOptions, TrainState,
};
use nalgebra::DMatrix;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn load(
    path: Option<&PathBuf>,
    which: &str,
    domain: DomainId,
    standardize: bool,
) -> CliResult<DomainDataset> {
    let path = path
        .ok_or_else(|| CliError::usage(format!("no {which} dataset given (set {which}=PATH)")))?;
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "{which} dataset file not found: {}",
            path.display()
        )));
    }
    let ds = load_dataset(path, MatrixFormat::from_path(path), domain)?;
    Ok(if standardize { ds.standardized() } else { ds })
}

/// Loads both domains and wraps them into a task with the configured query
/// hold-out.
pub fn load_task(cfg: &RunConfig) -> CliResult<GitrTask> {
    let source = load(
        cfg.source.as_ref(),
        "source",
        DomainId::Source,
        cfg.standardize,
    )?;
    let target = load(
        cfg.target.as_ref(),
        "target",
        DomainId::Target,
        cfg.standardize,
    )?;
    let subtask = cfg.subtask.unwrap_or(if source.dim() == target.dim() {
        Subtask::HoCDR
    } else {
        Subtask::HeCDR
    });
    let q = cfg.query_count.unwrap_or((target.len() / 10).max(1));
    Ok(GitrTask::new(subtask, source, target, q)?)
}

fn options(cfg: &RunConfig) -> TrainOptions {
    TrainOptions {
        seed: cfg.seed,
        gamma_schedule: cfg.gamma_schedule,
        kernel: cfg.kernel,
    }
}

fn graph_text(graph: &AffinityGraph) -> String {
    let mut out = String::new();
    for (i, j, w) in graph.triplets() {
        let _ = writeln!(out, "{i} {j} {w}");
    }
    out
}

fn dense_text(w: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            if w[(i, j)] != 0.0 {
                let _ = writeln!(out, "{i} {j} {}", w[(i, j)]);
            }
        }
    }
    out
}

fn trace_csv(state: &TrainState) -> String {
    let mut out = String::from("iter,J,T1,T2,T3,gamma\n");
    for (i, (j, t)) in state
        .objective_trace
        .iter()
        .zip(&state.terms_trace)
        .enumerate()
    {
        let _ = writeln!(
            out,
            "{i},{j},{},{},{},{}",
            t.fit, t.cross, t.structure, t.gamma
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct SynthArgs {
    pub spec: SynthSpec,
    pub format: MatrixFormat,
    pub out: PathBuf,
}

/// Writes a synthetic task as two dataset files plus a `task.cfg` pointing
/// at them.
pub fn gen_synth(args: &SynthArgs) -> CliResult<()> {
    let task = generate_synthetic_gitr(&args.spec)?;
    let ext = match args.format {
        MatrixFormat::Text => "txt",
        MatrixFormat::Binary => "athm",
    };
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let source = args.out.join(format!("source.{ext}"));
    let target = args.out.join(format!("target.{ext}"));
    save_dataset(task.source(), &source, args.format)?;
    save_dataset(task.target(), &target, args.format)?;
    let cfg = format!(
        "source=source.{ext}\ntarget=target.{ext}\nsubtask={}\nquery_count={}\n",
        task.subtask(),
        task.query_count()
    );
    write_file(&args.out.join("task.cfg"), cfg)?;
    println!(
        "wrote {} ({} x {}) and {} ({} x {})",
        source.display(),
        task.source().dim(),
        task.source().len(),
        target.display(),
        task.target().dim(),
        task.target().len()
    );
    Ok(())
}

/// Trains on the source set and the non-query part of the target set, then
/// writes the model, the manifest and the requested exports.
pub fn train(cfg: &RunConfig) -> CliResult<()> {
    let task = load_task(cfg)?;
    let split = task.split(cfg.split_seed)?;
    let state = ath_core::train(
        &split.source,
        &split.target,
        &cfg.hp,
        cfg.variant,
        &options(cfg),
    )?;

    let out = &cfg.output;
    let model_path = out.join("model.athf");
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    save_model(&state.model, &model_path)?;
    write_file(&out.join("manifest.cfg"), cfg.to_manifest())?;
    if cfg.export_trace {
        write_file(&out.join("trace.csv"), trace_csv(&state))?;
    }
    if cfg.export_graph {
        write_file(&out.join("graph_source.txt"), graph_text(&state.graph_s))?;
        write_file(&out.join("graph_target.txt"), graph_text(&state.graph_t))?;
        write_file(
            &out.join("graph_bipartite.txt"),
            dense_text(state.bipartite.weights()),
        )?;
    }
    println!(
        "iterations={} converged={} J={}",
        state.iterations(),
        state.converged,
        state.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct EvalArgs {
    pub model: PathBuf,
    pub direction: Option<Direction>,
    pub pr_csv: Option<PathBuf>,
    pub per_query_csv: Option<PathBuf>,
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> CliResult<()> {
    if !args.model.is_file() {
        return Err(CliError::usage(format!(
            "model file not found: {}",
            args.model.display()
        )));
    }
    let model = load_model(&args.model)?;
    let task = load_task(cfg)?;
    let split: SplitTask = task.split(cfg.split_seed)?;
    if split.query.labels().is_none() {
        return Err(CliError::usage(
            "evaluation needs labelled queries (target labels)",
        ));
    }
    let direction = args
        .direction
        .unwrap_or(Direction::default_for(split.subtask));
    let result = run_gitr_retrieval(&model, &split, direction)?;
    let map = mean_average_precision(&result)?;
    println!("MAP={map:.4}");

    let pr_path = args
        .pr_csv
        .clone()
        .or_else(|| cfg.export_pr.then(|| cfg.output.join("pr.csv")));
    if let Some(path) = pr_path {
        let mut csv = String::from("recall,precision\n");
        for (r, p) in precision_recall_curve(&result, cfg.pr_points)? {
            let _ = writeln!(csv, "{r},{p}");
        }
        write_file(&path, csv)?;
    }
    if let Some(path) = &args.per_query_csv {
        let mut csv = String::from("query_index,ap\n");
        for (i, ap) in per_query_average_precision(&result)?.iter().enumerate() {
            let _ = writeln!(csv, "{i},{ap}");
        }
        write_file(path, csv)?;
    }
    Ok(())
}

/// Pseudo-label accuracy and objective per iteration, on the whole task.
pub fn diagnose(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let task = load_task(cfg)?;
    let (trace, _) = trace_transfer(
        task.source(),
        task.target(),
        &cfg.hp,
        cfg.variant,
        &options(cfg),
    )?;
    let mut csv = String::from("iter,accuracy,objective\n");
    for (i, (a, j)) in trace
        .accuracy_per_iter
        .iter()
        .zip(&trace.objective_per_iter)
        .enumerate()
    {
        let _ = writeln!(csv, "{i},{a},{j}");
    }
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.join("diagnose.csv"));
    write_file(&path, csv)?;
    if let Some(last) = trace.accuracy_per_iter.last() {
        println!(
            "accuracy initial={:.4} final={last:.4}",
            trace.accuracy_per_iter[0]
        );
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphWhich {
    Source,
    Target,
    Bipartite,
}

/// Writes one graph as `i j w` lines. Domain graphs are built directly from
/// the data; the bipartite graph is the semantic mask for S/K and the
/// trained `W_st` for U/M.
pub fn dump_graph(cfg: &RunConfig, which: GraphWhich, out: &Path) -> CliResult<()> {
    let task = load_task(cfg)?;
    let split = task.split(cfg.split_seed)?;
    let text = match which {
        GraphWhich::Source | GraphWhich::Target => {
            let (gs, gt) = domain_graphs(&split.source, &split.target, &cfg.hp, cfg.variant)?;
            graph_text(if which == GraphWhich::Source {
                &gs
            } else {
                &gt
            })
        }
        GraphWhich::Bipartite if cfg.variant.learns_bipartite() => {
            let state = ath_core::train(
                &split.source,
                &split.target,
                &cfg.hp,
                cfg.variant,
                &options(cfg),
            )?;
            dense_text(state.bipartite.weights())
        }
        GraphWhich::Bipartite => {
            dense_text(&build_semantic_bipartite(&split.source, &split.target)?.row_normalized())
        }
    };
    write_file(out, text)
}
