use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use latent_safety::conformal::{calibrate, ScoreCache};
use latent_safety::config::Config;
use latent_safety::eval::{
    emit_report, eval_classification, eval_filtered_driver, eval_safe_rate, run_ablation, AblationArtifacts,
    FilterEntry, ReportFormat, Suite,
};
use latent_safety::grid::{sample_margin, solve_disc, verify_theorem1, GridSpec, SolverConfig};
use latent_safety::hj_rl::{train_filter, Conditioning};
use latent_safety::latent::{heading_invariance, train_projector, Encoder, SimilarityModel};
use latent_safety::pipeline::*;
use latent_safety::sim::{generate_dataset, signed_distance_margin, FailureDisc};
use latent_safety::teleop::{serve, ServiceArtifacts, Transport};
use latent_safety::Result;

#[derive(Parser)]
#[command(name = "latent-safety", version, about = "Latent safety filter toolkit for a Dubins car")]
struct Cli {
    /// Flat key = value config; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Random-action trajectories in the ASD1 format.
    GenData {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    TrainProjector {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Origin-disc reachability oracle in the ASVG format.
    SolveGrid {
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
        #[arg(long)]
        ntheta: Option<usize>,
        #[arg(long)]
        nactions: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    Verify {
        #[command(subcommand)]
        what: VerifyCmd,
    },
    /// Threshold file, plus a score cache over several ε for runtime retuning.
    Calibrate {
        /// Held-out dataset, disjoint from the training episodes.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Omit to calibrate cosine on raw latents.
        #[arg(long)]
        projector: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    TrainFilter {
        #[arg(long)]
        conditioning: Option<Conditioning>,
        #[arg(long)]
        no_projector: bool,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, required_unless_present = "no_projector")]
        projector: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Eval {
        #[command(subcommand)]
        what: EvalCmd,
    },
    /// Teleoperation service speaking NDJSON over TCP (or WebSocket with --ws).
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        nets: PathBuf,
        #[arg(long)]
        projector: Option<PathBuf>,
        #[arg(long)]
        calib_cache: PathBuf,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        ws: bool,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Shifted-margin solve against the shifted value.
    Theorem1 {
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        #[arg(long, default_value_t = 41)]
        n: usize,
        #[arg(long, default_value_t = 0.999)]
        gamma: f64,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
    },
}

#[derive(Args)]
struct ReportOut {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Subcommand)]
enum EvalCmd {
    Classify {
        #[arg(long)]
        nets: PathBuf,
        #[arg(long)]
        projector: Option<PathBuf>,
        #[arg(long)]
        threshold: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        constraints: Option<usize>,
        #[command(flatten)]
        report: ReportOut,
    },
    Rollout {
        #[arg(long)]
        nets: PathBuf,
        #[arg(long)]
        projector: Option<PathBuf>,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        /// Filter a straight-line driver at this threshold instead of rolling the fallback.
        #[arg(long)]
        threshold: Option<PathBuf>,
        #[command(flatten)]
        report: ReportOut,
    },
    Ablation {
        #[arg(long)]
        suite: Suite,
        /// `LABEL=PATH`, repeatable; the first entry drives table3.
        #[arg(long = "entry", required = true)]
        entries: Vec<String>,
        #[arg(long)]
        projector: Option<PathBuf>,
        /// Score caches; each filter uses the one matching its projector.
        #[arg(long = "calib-cache", required = true)]
        caches: Vec<PathBuf>,
        /// Origin solves, one per ε.
        #[arg(long = "grid", required = true)]
        grids: Vec<PathBuf>,
        #[command(flatten)]
        report: ReportOut,
    },
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let encoder = |cfg: &Config| Arc::new(Encoder::new(cfg.encoder()));
    let projector = |p: &Option<PathBuf>| p.as_deref().map(load_projector).transpose();
    match cli.cmd {
        Cmd::GenData { episodes, horizon, seed, out } => {
            cfg.episodes = episodes.unwrap_or(cfg.episodes);
            cfg.horizon = horizon.unwrap_or(cfg.horizon);
            let data = generate_dataset(cfg.episodes, &cfg.params(), seed.unwrap_or(cfg.data_seed))?;
            save_dataset(&out, &data)?;
            log::info!("{} episodes written to {}", data.len(), out.display());
        }
        Cmd::TrainProjector { data, pairs, epochs, seed, out } => {
            cfg.projector_pairs = pairs.unwrap_or(cfg.projector_pairs);
            cfg.projector_epochs = epochs.unwrap_or(cfg.projector_epochs);
            cfg.projector_seed = seed.unwrap_or(cfg.projector_seed);
            let enc = encoder(&cfg);
            let (proj, mut report) = train_projector(&load_dataset(&data)?, &enc, &cfg.projector())?;
            save_projector(&out, &proj)?;
            report.epoch_losses.clear();
            let inv = heading_invariance(&SimilarityModel::Projected(proj), &enc, 10_000, 0.05, 5);
            println!("{}", serde_json::json!({ "report": report, "heading_invariance": inv }));
        }
        Cmd::SolveGrid { nx, ny, ntheta, nactions, gamma, epsilon, tol, out } => {
            cfg.grid_nx = nx.unwrap_or(cfg.grid_nx);
            cfg.grid_ny = ny.unwrap_or(cfg.grid_ny);
            cfg.grid_ntheta = ntheta.unwrap_or(cfg.grid_ntheta);
            cfg.grid_actions = nactions.unwrap_or(cfg.grid_actions);
            cfg.grid_gamma = gamma.unwrap_or(cfg.grid_gamma);
            cfg.grid_tol = tol.unwrap_or(cfg.grid_tol);
            let g = solve_disc(epsilon.unwrap_or(cfg.epsilon), &cfg.params(), &cfg.grid_spec(), &cfg.solver())?;
            g.ensure_converged()?;
            save_grid(&out, &g)?;
            log::info!("{} iterations, residual {:e}", g.iterations, g.residual);
        }
        Cmd::Verify { what: VerifyCmd::Theorem1 { delta, n, gamma, epsilon } } => {
            let spec = GridSpec::cube(n, cfg.bound);
            let disc = FailureDisc::new(0.0, 0.0, epsilon, cfg.bound)?;
            let ell = sample_margin(&spec, |s| signed_distance_margin(s, &disc));
            let solver = SolverConfig {
                gamma,
                tol: 1e-9,
                max_iter: 100_000,
                n_actions: cfg.grid_actions,
            };
            let r = verify_theorem1(&ell, delta, &cfg.params(), &spec, &solver)?;
            print!("{}", json(&r)?);
            let pass = r.max_abs_diff < 1e-5 && r.symmetric_difference_off_band == 0;
            println!("{}", if pass { "PASS" } else { "FAIL" });
        }
        Cmd::Calibrate { data, epsilon, alpha, projector: proj, out, cache } => {
            let epsilon = epsilon.unwrap_or(cfg.epsilon);
            let alpha = alpha.unwrap_or(cfg.alpha);
            let enc = encoder(&cfg);
            let model = similarity_model(proj.as_deref())?;
            let heldout = load_dataset(&data)?;
            let pool_eps = cfg.cache_epsilons.iter().copied().fold(epsilon, f64::max);
            let pairs = calibration_pairs(&heldout, &enc, cfg.calibration_pairs, pool_eps, cfg.calibration_seed)?;
            let t = calibrate(
                &latent_safety::conformal::relabel(&pairs, epsilon),
                &model,
                alpha,
                epsilon,
            )?
            .with_runtime_margin(cfg.runtime_margin);
            t.save(&out)?;
            print!("{}", t.to_text());
            if let Some(cache) = cache {
                let mut eps = cfg.cache_epsilons.clone();
                eps.push(epsilon);
                ScoreCache::build(&pairs, &model, &eps)?.save(&cache)?;
            }
        }
        Cmd::TrainFilter { conditioning, no_projector, steps, seed, projector: proj, data, out } => {
            cfg.conditioning = conditioning.unwrap_or(cfg.conditioning);
            cfg.filter_steps = steps.unwrap_or(cfg.filter_steps);
            cfg.filter_seed = seed.unwrap_or(cfg.filter_seed);
            let model = if no_projector { SimilarityModel::Raw } else { similarity_model(proj.as_deref())? };
            let (nets, log) = train_filter(&load_dataset(&data)?, encoder(&cfg), cfg.params(), model, &cfg.filter())?;
            save_filter(&out, &nets)?;
            print!("{}", json(&log)?);
        }
        Cmd::Eval { what } => eval(cfg, what)?,
        Cmd::Serve { port, host, nets, projector: proj, calib_cache, grid, ws } => {
            let proj = projector(&proj)?;
            let nets = load_filter(&nets, proj.as_ref())?;
            let cache = ScoreCache::load(&calib_cache)?;
            let mut shared = ServiceArtifacts::new(encoder(&cfg), cfg.params(), nets, cache);
            shared.grid = grid.map(|g| load_grid(&g, cfg.grid_tol)).transpose()?;
            shared.alpha = cfg.alpha;
            shared.epsilon = cfg.epsilon;
            shared.runtime_margin = cfg.runtime_margin;
            let listener = TcpListener::bind((host.as_str(), port))?;
            eprintln!("listening on {}", listener.local_addr()?);
            let transport = if ws { Transport::WebSocket } else { Transport::Ndjson };
            serve(listener, Arc::new(shared), transport)?;
        }
    }
    Ok(())
}

fn eval(mut cfg: Config, what: EvalCmd) -> Result<()> {
    let enc = Arc::new(Encoder::new(cfg.encoder()));
    let load_proj = |p: &Option<PathBuf>| p.as_deref().map(load_projector).transpose();
    match what {
        EvalCmd::Classify { nets, projector, threshold, grid, constraints, report } => {
            cfg.eval_constraints = constraints.unwrap_or(cfg.eval_constraints);
            let nets = load_filter(&nets, load_proj(&projector)?.as_ref())?;
            let t = latent_safety::conformal::Threshold::load(&threshold)?;
            let g = load_grid(&grid, cfg.grid_tol)?;
            let r = eval_classification(&nets, &enc, &t, &g, &cfg.classify(), cfg.bound)?;
            write_out(&report.out, &json(&r)?)?;
        }
        EvalCmd::Rollout { nets, projector, grid, n, threshold, report } => {
            cfg.rollouts = n.unwrap_or(cfg.rollouts);
            let nets = load_filter(&nets, load_proj(&projector)?.as_ref())?;
            let g = load_grid(&grid, cfg.grid_tol)?;
            let r = match threshold {
                Some(t) => {
                    let t = latent_safety::conformal::Threshold::load(&t)?;
                    eval_filtered_driver(&nets, &enc, &t, &g, &cfg.params(), &cfg.rollout())?
                }
                None => eval_safe_rate(&nets, &enc, &g, &cfg.params(), &cfg.rollout())?,
            };
            write_out(&report.out, &json(&r)?)?;
        }
        EvalCmd::Ablation { suite, entries, projector, caches, grids, report } => {
            let proj = load_proj(&projector)?;
            let caches = caches.iter().map(|p| ScoreCache::load(p)).collect::<Result<Vec<_>>>()?;
            let entries = entries
                .iter()
                .map(|e| {
                    let (label, path) = e.split_once('=').unwrap_or((e.as_str(), e.as_str()));
                    let nets = load_filter(Path::new(path), proj.as_ref())?;
                    let thresholds = thresholds_for(&nets, &caches, cfg.alpha, cfg.runtime_margin)?;
                    Ok(FilterEntry { label: label.to_string(), nets, thresholds })
                })
                .collect::<Result<Vec<_>>>()?;
            let artifacts = AblationArtifacts {
                encoder: enc,
                params: cfg.params(),
                grids: grids.iter().map(|g| load_grid(g, cfg.grid_tol)).collect::<Result<_>>()?,
                entries,
                classify: cfg.classify(),
                rollout: cfg.rollout(),
                epsilon: cfg.epsilon,
            };
            let r = run_ablation(suite, &artifacts)?;
            write_out(&report.out, &emit_report(&[r], report.format)?)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
