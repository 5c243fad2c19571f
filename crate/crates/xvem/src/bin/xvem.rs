//! Convergence-study CLI: pick a domain, a mesh family, a degree and an
//! enrichment mode, then solve the manufactured problem on a refinement
//! sequence and write one CSV row per mesh.

use clap::Parser;
use std::path::PathBuf;
use xvem::config::RunConfig;
use xvem::driver::{emit_report, run_convergence_study};

#[derive(Parser, Debug)]
#[command(
    name = "xvem",
    about = "Enriched virtual element convergence studies for singular Poisson problems"
)]
struct Cli {
    /// Configuration file (key = value); flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,

    /// Problem domain: fracture, lshape-tr, lshape-br
    #[arg(long)]
    domain: Option<String>,

    /// Mesh family: cartesian, hexagonal, file
    #[arg(long)]
    mesh_family: Option<String>,

    /// Mesh file(s) for --mesh-family file (repeatable or comma separated)
    #[arg(long)]
    mesh_file: Vec<String>,

    /// Polynomial degree k (1..=4)
    #[arg(short, long)]
    k: Option<usize>,

    /// Enrichment mode: none, global, local
    #[arg(long)]
    enrichment: Option<String>,

    /// Local enrichment radius
    #[arg(long)]
    gamma: Option<f64>,

    /// Refinement sequence: subdivisions per axis (cartesian) or levels
    /// (hexagonal), comma separated, e.g. 8,16,32
    #[arg(long)]
    refine: Option<String>,

    /// Linear solver: direct, krylov
    #[arg(long)]
    solver: Option<String>,

    /// Solver relative-residual tolerance
    #[arg(long)]
    tol: Option<f64>,

    /// Output CSV path
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Geometric grading levels toward the singularity
    #[arg(long)]
    grading_levels: Option<usize>,

    /// Relative rank threshold for dropping numerically polynomial enrichment
    #[arg(long)]
    tau_rank: Option<f64>,

    /// Seed for the condition-estimate start vector
    #[arg(long)]
    seed: Option<u64>,
}

fn build_config(cli: &Cli) -> xvem::Result<RunConfig<f64>> {
    let mut cfg = RunConfig::<f64>::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    let mut set = |key: &str, value: Option<String>| -> xvem::Result<()> {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
        Ok(())
    };
    set("domain", cli.domain.clone())?;
    set("mesh-family", cli.mesh_family.clone())?;
    set("k", cli.k.map(|v| v.to_string()))?;
    set("enrichment", cli.enrichment.clone())?;
    set("gamma", cli.gamma.map(|v| v.to_string()))?;
    set("refine", cli.refine.clone())?;
    set("solver", cli.solver.clone())?;
    set("tol", cli.tol.map(|v| v.to_string()))?;
    set("grading-levels", cli.grading_levels.map(|v| v.to_string()))?;
    set("tau-rank", cli.tau_rank.map(|v| v.to_string()))?;
    set("seed", cli.seed.map(|v| v.to_string()))?;
    for f in &cli.mesh_file {
        cfg.set("mesh-file", f)?;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    match run_convergence_study(&cfg) {
        Ok(result) => {
            match emit_report(cfg.k, &result.reports) {
                Ok(summary) => print!("{summary}"),
                Err(e) => eprintln!("rate summary unavailable: {e}"),
            }
            match &cfg.out {
                None => print!("{}", result.csv),
                Some(path) => eprintln!("wrote {}", path.display()),
            }
            let all_failed = result.reports.iter().all(|r| r.failed);
            if all_failed {
                std::process::exit(1);
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
