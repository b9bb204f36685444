use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use weighted_rb::harness::{
    cli_convergence, cli_offline, cli_online, report_text, snapshot_digest, Experiment, ExperimentConfig, Profile,
    SnapshotCache, CACHE_FILE,
};
use weighted_rb::mesh::BoundaryTag;
use weighted_rb::stochastics::ParameterSample;
use weighted_rb::Error;

/// Weighted and non-weighted POD-greedy reduced basis experiments for the
/// heat conduction benchmark with random boundary data.
#[derive(Parser, Debug)]
#[command(name = "wrb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the mesh and KL field, print a summary and write both as text.
    Mesh,
    /// Run the configured greedy and store the reduced model and its trace.
    Offline,
    /// Evaluate a stored reduced model at one parameter.
    Online {
        /// Reduced model written by `offline`.
        #[arg(long)]
        rom: PathBuf,
        /// Comma-separated `ξ_out…,ξ_in`; the reference parameter if omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        xi: Option<Vec<f64>>,
    },
    /// Reproduce the convergence study and write the figure CSVs.
    Convergence,
    /// Build or verify the Monte Carlo snapshot cache.
    Cache {
        /// Store dual trajectories as well.
        #[arg(long)]
        with_dual: bool,
    },
}

/// Every setting can come from the profile, a file, or a flag named after
/// its configuration key (flags win).
#[derive(Args, Debug)]
struct ConfigArgs {
    /// Base settings: `coarse` (desk scale) or `paper`.
    #[arg(long, global = true, default_value = "coarse")]
    profile: String,
    /// `key = value` file applied on top of the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    mesh_h: Option<String>,
    #[arg(long, global = true)]
    final_time: Option<String>,
    #[arg(long, global = true)]
    steps: Option<String>,
    #[arg(long, global = true)]
    dt: Option<String>,
    #[arg(long, global = true)]
    kl_terms: Option<String>,
    #[arg(long, global = true)]
    correlation_length: Option<String>,
    #[arg(long, global = true)]
    kl_mean: Option<String>,
    #[arg(long, global = true)]
    uniform_half_width: Option<String>,
    #[arg(long, global = true)]
    beta_lower: Option<String>,
    #[arg(long, global = true)]
    beta_upper: Option<String>,
    #[arg(long, global = true)]
    beta_shape_a: Option<String>,
    #[arg(long, global = true)]
    beta_shape_b: Option<String>,
    #[arg(long, global = true)]
    alpha_bar: Option<String>,
    #[arg(long, global = true)]
    training_size: Option<String>,
    #[arg(long, global = true)]
    mc_samples: Option<String>,
    #[arg(long, global = true)]
    max_basis: Option<String>,
    /// Greedy stopping tolerance, or `none`.
    #[arg(long, global = true)]
    tolerance: Option<String>,
    #[arg(long, global = true)]
    seed_train: Option<String>,
    #[arg(long, global = true)]
    seed_mc: Option<String>,
    /// `primal` or `output`.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// `uniform` or `pdf`.
    #[arg(long, global = true)]
    weighting: Option<String>,
    /// `both` or `alternate`.
    #[arg(long, global = true)]
    policy: Option<String>,
    #[arg(long, global = true)]
    output_dir: Option<String>,
    #[arg(long, global = true)]
    record_timings: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let profile: Profile = self.profile.parse()?;
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path, profile)?,
            None => ExperimentConfig::profile(profile),
        };
        let flags = [
            ("mesh_h", &self.mesh_h),
            ("final_time", &self.final_time),
            ("steps", &self.steps),
            ("dt", &self.dt),
            ("kl_terms", &self.kl_terms),
            ("correlation_length", &self.correlation_length),
            ("kl_mean", &self.kl_mean),
            ("uniform_half_width", &self.uniform_half_width),
            ("beta_lower", &self.beta_lower),
            ("beta_upper", &self.beta_upper),
            ("beta_shape_a", &self.beta_shape_a),
            ("beta_shape_b", &self.beta_shape_b),
            ("alpha_bar", &self.alpha_bar),
            ("training_size", &self.training_size),
            ("mc_samples", &self.mc_samples),
            ("max_basis", &self.max_basis),
            ("tolerance", &self.tolerance),
            ("seed_train", &self.seed_train),
            ("seed_mc", &self.seed_mc),
            ("mode", &self.mode),
            ("weighting", &self.weighting),
            ("policy", &self.policy),
            ("output_dir", &self.output_dir),
            ("record_timings", &self.record_timings),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config
                    .apply(key, v)
                    .map_err(|m| Error::InvalidInput(format!("--{}: {m}", key.replace('_', "-"))))?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.config.resolve()?;
    match cli.command {
        Command::Mesh => {
            let exp = Experiment::new(&config)?;
            let mesh = &exp.mesh;
            println!("nodes = {}", mesh.num_nodes());
            println!("triangles = {}", mesh.triangles.len());
            println!("area = {}", mesh.area());
            println!("length_out = {}", mesh.boundary_length(BoundaryTag::Out));
            println!("length_in = {}", mesh.boundary_length(BoundaryTag::In));
            let lambda: Vec<String> = exp.kl.eigenvalues.iter().map(|l| format!("{l:e}")).collect();
            println!("kl_eigenvalues = {}", lambda.join(","));
            std::fs::create_dir_all(&config.output_dir)?;
            let mesh_path = config.output_dir.join("mesh.txt");
            let kl_path = config.output_dir.join("kl.txt");
            mesh.write_text(BufWriter::new(File::create(&mesh_path)?))?;
            exp.kl.write_text(BufWriter::new(File::create(&kl_path)?))?;
            println!("wrote {} and {}", mesh_path.display(), kl_path.display());
        }
        Command::Offline => {
            let run = cli_offline(&config)?;
            let last = run
                .outcome
                .trace
                .steps
                .last()
                .context("greedy produced no iterations")?;
            println!("primal_dim = {}", run.outcome.rom.num_primal());
            println!("dual_dim = {}", run.outcome.rom.num_dual());
            println!("estimator_max = {:e}", last.estimator_max);
            println!("wrote {} and {}", run.rom_path.display(), run.trace_path.display());
        }
        Command::Online { rom, xi } => {
            let xi = xi.as_deref().map(ParameterSample::from_slice).transpose()?;
            let (xi, report) = cli_online(&rom, xi.as_ref())?;
            if !report.in_gamma {
                eprintln!("warning: parameter lies outside the support; weighted estimators are zero");
            }
            let values: Vec<String> = xi.to_vec().iter().map(|x| format!("{x:?}")).collect();
            println!("xi = {}", values.join(","));
            print!("{}", report_text(&report));
        }
        Command::Convergence => {
            let study = cli_convergence(&config)?;
            println!("N  rms_nonweighted  rms_weighted  rms_pod_projection");
            for r in &study.solution_errors {
                println!(
                    "{:<2} {:.4e}  {:.4e}  {:.4e}",
                    r.n, r.nonweighted, r.weighted, r.pod_projection
                );
            }
            println!("N  out_nonweighted  out_weighted");
            for r in &study.output_errors {
                println!("{:<2} {:.4e}  {:.4e}", r.n, r.nonweighted, r.weighted);
            }
            println!("wrote figure data to {}", config.output_dir.display());
        }
        Command::Cache { with_dual } => {
            let exp = Experiment::new(&config)?;
            std::fs::create_dir_all(&config.output_dir)?;
            let path = config.output_dir.join(CACHE_FILE);
            let (cache, built) = SnapshotCache::load_or_build(&config, &exp.model, &path, with_dual)?;
            debug_assert_eq!(cache.digest, snapshot_digest(&config, with_dual));
            println!("digest = {}", cache.digest);
            println!("samples = {}", cache.snapshots.len());
            println!("status = {}", if built { "built" } else { "reused" });
            println!("bytes = {}", std::fs::metadata(&path)?.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let category = err.downcast_ref::<Error>().map_or("other", Error::category);
            eprintln!("error[{category}]: {err:#}");
            ExitCode::FAILURE
        }
    }
}
