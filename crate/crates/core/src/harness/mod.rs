//! Experiment orchestration: configuration, snapshot cache, offline and
//! online runs, and the convergence study behind the figure CSVs.

mod cache;
mod config;

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use cache::{payload_floats, snapshot_digest, SnapshotCache};
pub use config::{ExperimentConfig, Profile};

use crate::construction::{
    mc_abs_output_error, mc_rms_solution_error, pod_greedy, pod_projection_error, pod_reference, Density, GreedyConfig,
    GreedyMode, GreedyOutcome, PodResult, SolutionProducer, Weighting,
};
use crate::error::{Error, Result};
use crate::mesh::{build_benchmark_mesh, TriMesh};
use crate::rom::{OnlineReport, ReducedModel};
use crate::solvers::{build_affine_model, AffineModel};
use crate::stochastics::{kl_eigenpairs, seeded_rng, KlField, ParameterSample};

pub const CACHE_FILE: &str = "snapshots.cache";
/// Points of the `ξ_in` density curve in `fig2.csv`.
pub const FIG2_POINTS: usize = 200;

impl Error {
    /// Short class name printed by the command line tool.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::InvalidMesh(_) | Error::InvalidInput(_) | Error::DimensionMismatch { .. } => "input",
            Error::CacheMismatch(_) => "cache",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::NotPositiveDefinite
            | Error::NotSymmetric(_)
            | Error::NoConvergence { .. }
            | Error::SingularReducedSystem
            | Error::NegativeQuadraticForm(_) => "numerics",
            Error::BasisDegenerate(_) | Error::ZeroTrajectory | Error::MissingDual => "construction",
        }
    }
}

/// Mesh, KL field and detailed model for a configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub mesh: TriMesh,
    pub kl: KlField,
    pub model: AffineModel,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mesh = build_benchmark_mesh(config.mesh_h)?;
        let mut kl = kl_eigenpairs(&mesh, config.correlation_length, config.kl_terms)?;
        kl.mean_value = config.kl_mean;
        let mut model = build_affine_model(&mesh, &kl, config.time_step(), config.steps)?;
        model.alpha_bar = config.alpha_bar;
        model.density = config.density;
        Ok(Self {
            config: config.clone(),
            mesh,
            kl,
            model,
        })
    }
}

/// `Ξ_train`: independent draws, uniform on `Γ`. Sample `i` comes from its
/// own stream, so the set does not depend on evaluation order.
pub fn training_set(config: &ExperimentConfig) -> Vec<ParameterSample> {
    (0..config.training_size)
        .map(|i| {
            let mut rng = seeded_rng(config.seed_train, i as u64);
            config.density.sample_uniform_on_gamma(&mut rng, config.kl_terms)
        })
        .collect()
}

/// Monte Carlo samples drawn from the joint density.
pub fn mc_samples(config: &ExperimentConfig) -> Vec<ParameterSample> {
    (0..config.mc_samples)
        .map(|i| {
            let mut rng = seeded_rng(config.seed_mc, i as u64);
            config.density.sample(&mut rng, config.kl_terms)
        })
        .collect()
}

pub fn greedy_config(
    config: &ExperimentConfig,
    mode: GreedyMode,
    weighting: Weighting,
    training: Vec<ParameterSample>,
) -> GreedyConfig {
    GreedyConfig {
        policy: config.policy,
        tolerance: config.tolerance,
        max_basis: Some(config.max_basis),
        density: Density::Model(config.density),
        ..GreedyConfig::new(mode, weighting, training)
    }
}

fn mode_name(mode: GreedyMode) -> &'static str {
    match mode {
        GreedyMode::Primal => "primal",
        GreedyMode::Output => "output",
    }
}

fn weighting_name(weighting: Weighting) -> &'static str {
    match weighting {
        Weighting::Uniform => "uniform",
        Weighting::Pdf => "pdf",
    }
}

pub fn run_label(mode: GreedyMode, weighting: Weighting) -> String {
    format!("{}_{}", mode_name(mode), weighting_name(weighting))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct OfflineRun {
    pub outcome: GreedyOutcome,
    pub rom_path: PathBuf,
    pub trace_path: PathBuf,
}

/// Runs the configured greedy and writes `rom_<mode>_<weighting>.wrb` and
/// `trace_<mode>_<weighting>.csv` into the output directory.
pub fn cli_offline(config: &ExperimentConfig) -> Result<OfflineRun> {
    let exp = Experiment::new(config)?;
    let greedy = greedy_config(config, config.mode, config.weighting, training_set(config));
    let outcome = pod_greedy(&exp.model, &greedy)?;
    fs::create_dir_all(&config.output_dir)?;
    let label = run_label(config.mode, config.weighting);
    let rom_path = config.output_dir.join(format!("rom_{label}.wrb"));
    let trace_path = config.output_dir.join(format!("trace_{label}.csv"));
    outcome
        .rom
        .save_with_bases(&rom_path, &outcome.primal, outcome.dual.as_ref())?;
    write_file(&trace_path, |w| outcome.trace.write_csv(w, config.record_timings))?;
    Ok(OfflineRun {
        outcome,
        rom_path,
        trace_path,
    })
}

/// Evaluates a stored reduced model at `ξ` (the reference parameter if
/// `None`). Only reduced quantities are read.
pub fn cli_online(rom_path: &Path, xi: Option<&ParameterSample>) -> Result<(ParameterSample, OnlineReport)> {
    let rom = ReducedModel::load(rom_path)?;
    let q = rom.ops.theta.num_terms();
    let xi = xi.cloned().unwrap_or_else(|| ParameterSample::reference(q));
    if xi.xi_out.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q + 1,
            found: xi.dim(),
        });
    }
    let report = rom.report(&xi)?;
    Ok((xi, report))
}

/// `key = value` lines; absent dual quantities are printed as `none`.
pub fn report_text(report: &OnlineReport) -> String {
    let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:e}"));
    let e = &report.estimates;
    let mut s = String::new();
    let mut line = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a String");
    line("in_gamma", report.in_gamma.to_string());
    line("output", format!("{:e}", report.output));
    line("corrected_output", opt(report.corrected_output));
    line("estimate_primal", format!("{:e}", e.primal));
    line("estimate_dual", opt(e.dual));
    line("estimate_final_condition", opt(e.final_condition));
    line("estimate_output", opt(e.output));
    line("density", format!("{:e}", e.density));
    line("weighted_primal", format!("{:e}", e.weighted_primal));
    line("weighted_output", opt(e.weighted_output));
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionErrorRow {
    pub n: usize,
    pub nonweighted: f64,
    pub weighted: f64,
    pub pod_projection: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputErrorRow {
    pub n: usize,
    pub nonweighted: f64,
    pub weighted: f64,
}

/// Everything behind the figure files.
#[derive(Debug)]
pub struct Convergence {
    pub density_curve: Vec<(f64, f64)>,
    pub solution_errors: Vec<SolutionErrorRow>,
    pub output_errors: Vec<OutputErrorRow>,
    pub pod: PodResult,
    pub primal_uniform: GreedyOutcome,
    pub primal_pdf: GreedyOutcome,
    pub output_uniform: GreedyOutcome,
    pub output_pdf: GreedyOutcome,
}

/// `ξ_in` density sampled on the closed support.
pub fn density_curve(config: &ExperimentConfig, points: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = config.density.beta_support;
    (0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            (x, config.density.beta_pdf(x))
        })
        .collect()
}

impl Convergence {
    pub fn write_fig2<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "xi_in,pdf")?;
        for (x, p) in &self.density_curve {
            writeln!(w, "{x:e},{p:e}")?;
        }
        Ok(())
    }

    pub fn write_fig3a<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,rms_nonweighted,rms_weighted,rms_pod_projection")?;
        for r in &self.solution_errors {
            writeln!(w, "{},{:e},{:e},{:e}", r.n, r.nonweighted, r.weighted, r.pod_projection)?;
        }
        Ok(())
    }

    pub fn write_fig3b<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,out_nonweighted,out_weighted")?;
        for r in &self.output_errors {
            writeln!(w, "{},{:e},{:e}", r.n, r.nonweighted, r.weighted)?;
        }
        Ok(())
    }

    /// Writes `fig2.csv`, `fig3a.csv`, `fig3b.csv`, `pod_sigma.csv` and one
    /// trace per greedy run.
    pub fn write_all(&self, dir: &Path, timings: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_file(&dir.join("fig2.csv"), |w| self.write_fig2(w))?;
        write_file(&dir.join("fig3a.csv"), |w| self.write_fig3a(w))?;
        write_file(&dir.join("fig3b.csv"), |w| self.write_fig3b(w))?;
        write_file(&dir.join("pod_sigma.csv"), |w| self.pod.write_csv(w))?;
        let runs = [
            (GreedyMode::Primal, Weighting::Uniform, &self.primal_uniform),
            (GreedyMode::Primal, Weighting::Pdf, &self.primal_pdf),
            (GreedyMode::Output, Weighting::Uniform, &self.output_uniform),
            (GreedyMode::Output, Weighting::Pdf, &self.output_pdf),
        ];
        for (mode, weighting, run) in runs {
            let path = dir.join(format!("trace_{}.csv", run_label(mode, weighting)));
            write_file(&path, |w| run.trace.write_csv(w, timings))?;
        }
        Ok(())
    }
}

/// Non-weighted and weighted greedies in both modes plus the reference POD,
/// all evaluated on the cached Monte Carlo snapshots.
pub fn convergence_study(exp: &Experiment, cache: &SnapshotCache) -> Result<Convergence> {
    let config = &exp.config;
    let model = &exp.model;
    let snaps = &cache.snapshots;
    if cache.digest != snapshot_digest(config, cache.has_dual()) {
        return Err(Error::CacheMismatch(
            "snapshot cache was built for another configuration".into(),
        ));
    }
    snaps.check(model)?;
    let training = training_set(config);
    let run = |mode, weighting| pod_greedy(model, &greedy_config(config, mode, weighting, training.clone()));
    let primal_uniform = run(GreedyMode::Primal, Weighting::Uniform)?;
    let primal_pdf = run(GreedyMode::Primal, Weighting::Pdf)?;
    let output_uniform = run(GreedyMode::Output, Weighting::Uniform)?;
    let output_pdf = run(GreedyMode::Output, Weighting::Pdf)?;
    let pod = pod_reference(model, snaps, config.max_basis)?;

    let galerkin = |o: &GreedyOutcome, n| {
        let producer = SolutionProducer::Galerkin {
            basis: &o.primal,
            ops: &o.rom.ops,
        };
        mc_rms_solution_error(model, producer, snaps, n)
    };
    let rows = config
        .max_basis
        .min(primal_uniform.primal.len())
        .min(primal_pdf.primal.len())
        .min(pod.num_modes());
    let solution_errors = (1..=rows)
        .map(|n| {
            Ok(SolutionErrorRow {
                n,
                nonweighted: galerkin(&primal_uniform, n)?,
                weighted: galerkin(&primal_pdf, n)?,
                pod_projection: pod_projection_error(model, &pod, snaps, n)?.max(0.0).sqrt(),
            })
        })
        .collect::<Result<_>>()?;

    let output_error = |o: &GreedyOutcome, n: usize| mc_abs_output_error(&o.rom, snaps, n, n.min(o.rom.num_dual()));
    let rows = config
        .max_basis
        .min(output_uniform.rom.num_primal())
        .min(output_pdf.rom.num_primal());
    let output_errors = (1..=rows)
        .map(|n| {
            Ok(OutputErrorRow {
                n,
                nonweighted: output_error(&output_uniform, n)?,
                weighted: output_error(&output_pdf, n)?,
            })
        })
        .collect::<Result<_>>()?;

    Ok(Convergence {
        density_curve: density_curve(config, FIG2_POINTS),
        solution_errors,
        output_errors,
        pod,
        primal_uniform,
        primal_pdf,
        output_uniform,
        output_pdf,
    })
}

/// Builds or reuses `snapshots.cache` in the output directory, runs
/// [`convergence_study`] and writes the figure CSVs.
pub fn cli_convergence(config: &ExperimentConfig) -> Result<Convergence> {
    let exp = Experiment::new(config)?;
    fs::create_dir_all(&config.output_dir)?;
    let (cache, _) = SnapshotCache::load_or_build(config, &exp.model, &config.output_dir.join(CACHE_FILE), false)?;
    let study = convergence_study(&exp, &cache)?;
    study.write_all(&config.output_dir, config.record_timings)?;
    Ok(study)
}
