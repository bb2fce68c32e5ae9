//! Seeded experiment harness around the `sdptomo` library.
//!
//! Subcommands sweep deterministic grids and write CSV files whose `#`
//! header embeds the resolved configuration, so any output can be reproduced
//! bitwise from its own header. Exit codes: 0 success, 1 bad input, 2
//! infeasible problem, 3 iteration limit (the latter two from `solve`).

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sdptomo::bounds::{energy_bounds_at, variational_lower_bound, BoundsError, ConstraintLevel};
use sdptomo::cooling::{run_cooling, CoolingConfig, CoolingMode, InitialState};
use sdptomo::hamiltonian::build_xy_chain;
use sdptomo::rng::{substream, StreamKind};
use sdptomo::sdp::{kkt_residuals, solve, SdpProblem, SolveStatus, SolverOptions};
use sdptomo::sim::{ground_state, xy_exact_energy};
use sdptomo::tomography::{
    collect_random_pauli_shots, energy_estimate_with_ci, estimate_local_bloch,
};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sdptomo", about = "RDM tomography with semidefinite refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// JSON experiment config; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (default: <subcommand>.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid points (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-energy interval experiment over an (n, shots, seed, level) grid.
    GroundBounds {
        #[command(flatten)]
        common: CommonFlags,
        /// Use the full-size grid instead of the desk-scale default.
        #[arg(long)]
        full_grid: bool,
    },
    /// Algorithmic-cooling experiment over an (n, shots, seed, mode) grid.
    Cool {
        #[command(flatten)]
        common: CommonFlags,
        /// Use the full-size grid instead of the desk-scale default.
        #[arg(long)]
        full_grid: bool,
    },
    /// Solve one problem file and report status, objective, and residuals.
    Solve {
        #[command(flatten)]
        common: CommonFlags,
        /// Problem JSON path.
        problem: PathBuf,
    },
    /// Cross-checks: closed-form energy vs diagonalization vs bounds.
    Oracle {
        #[command(flatten)]
        common: CommonFlags,
        /// Single register size (default: sweep 2..=8).
        #[arg(long)]
        n: Option<usize>,
        /// Chain coupling.
        #[arg(long, default_value_t = 1.0)]
        j: f64,
    },
}

/// One flat config drives every subcommand; unused fields are ignored by the
/// others, so a single archived file documents a whole study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentConfig {
    /// Optional tag naming the subcommand this config was written for;
    /// rejected when it names a different one.
    #[serde(skip_serializing_if = "Option::is_none")]
    experiment: Option<String>,
    ns: Vec<usize>,
    j: f64,
    shots: Vec<usize>,
    seeds: Vec<u64>,
    levels: Vec<ConstraintLevel>,
    /// Bisection resolution for the interval minimum (coarse).
    delta_min: f64,
    /// Bisection resolution for the interval maximum (fine).
    delta_max: f64,
    modes: Vec<CoolingMode>,
    initial: InitialState,
    max_layers: usize,
    bootstrap_resamples: usize,
    confidence: f64,
    tol: f64,
    threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            ns: vec![3, 4],
            j: 1.0,
            shots: vec![100, 1000, 10000],
            seeds: (0..10).collect(),
            levels: vec![ConstraintLevel::OcEc],
            delta_min: 0.1,
            delta_max: 0.001,
            modes: vec![CoolingMode::Tomography, CoolingMode::TomographySdp],
            initial: InitialState::PlusProduct,
            max_layers: 15,
            bootstrap_resamples: 200,
            confidence: 0.99,
            tol: 1e-6,
            threads: 1,
        }
    }
}

impl ExperimentConfig {
    fn load(common: &CommonFlags, subcommand: &str) -> Result<Self, String> {
        let mut cfg = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| format!("config {}: {e}", path.display()))?
            }
            None => Self::default(),
        };
        if let Some(tag) = &cfg.experiment {
            if tag != subcommand {
                return Err(format!("config is tagged for `{tag}`, not `{subcommand}`"));
            }
        }
        if let Some(seed) = common.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(tol) = common.tol {
            cfg.tol = tol;
        }
        if let Some(threads) = common.threads {
            cfg.threads = threads;
        }
        if cfg.seeds.is_empty() {
            return Err("config needs at least one seed".into());
        }
        if cfg.tol <= 0.0 || !(0.0..1.0).contains(&cfg.confidence) {
            return Err("tol must be positive and confidence in (0, 1)".into());
        }
        if cfg.delta_min <= 0.0 || cfg.delta_max <= 0.0 {
            return Err("delta_min and delta_max must be positive".into());
        }
        Ok(cfg)
    }

    /// Full-size grid; expect hours of sequential runtime.
    fn widen_to_full_grid(&mut self) {
        self.ns = (3..=8).collect();
        self.shots = vec![10, 100, 1000, 10000];
        self.seeds = (0..25).collect();
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, ..SolverOptions::default() }
    }

    /// Runs `work(index)` for the grid indices, in parallel when configured,
    /// returning results in grid order regardless of scheduling.
    fn run_grid<F>(&self, count: usize, work: F) -> Vec<String>
    where
        F: Fn(usize) -> String + Sync + Send,
    {
        if self.threads == 1 {
            (0..count).map(work).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build()
                .expect("thread pool");
            pool.install(|| (0..count).into_par_iter().map(work).collect())
        }
    }
}

fn out_path(common: &CommonFlags, default_name: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default_name))
}

fn csv_header(subcommand: &str, cfg: &ExperimentConfig, columns: &str) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    format!("# sdptomo {subcommand}\n# config: {json}\n{columns}\n")
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

fn run_ground_bounds(common: &CommonFlags, full_grid: bool) -> Result<(), String> {
    let mut cfg = ExperimentConfig::load(common, "ground_bounds")?;
    if full_grid {
        cfg.widen_to_full_grid();
    }
    let solver = cfg.solver();

    // The data-free bound depends only on (n, level); compute each once.
    let mut lb: BTreeMap<(usize, String), f64> = BTreeMap::new();
    for &n in &cfg.ns {
        for &level in &cfg.levels {
            let h = build_xy_chain::<f64>(n, cfg.j);
            let b = variational_lower_bound(&h, level, &solver)
                .map_err(|e| format!("variational bound n={n}: {e}"))?;
            lb.insert((n, level.to_string()), b.bound);
        }
    }

    struct Cell {
        n: usize,
        n_s: usize,
        seed: u64,
        level: ConstraintLevel,
    }
    let mut grid = Vec::new();
    for &n in &cfg.ns {
        for &n_s in &cfg.shots {
            for &seed in &cfg.seeds {
                for &level in &cfg.levels {
                    grid.push(Cell { n, n_s, seed, level });
                }
            }
        }
    }

    let rows = cfg.run_grid(grid.len(), |i| {
        let Cell { n, n_s, seed, level } = grid[i];
        let h = build_xy_chain::<f64>(n, cfg.j);
        let gs = ground_state(&h).expect("chain diagonalizes");
        let mut shot_rng = substream(seed, StreamKind::Shots, 0, 0);
        let dataset = collect_random_pauli_shots(&gs.state, n_s, &mut shot_rng)
            .expect("sampling cannot fail on a valid state");
        let sets: Vec<_> = h
            .hypergraph()
            .edges()
            .iter()
            .map(|e| estimate_local_bloch(&dataset, e).expect("edges are valid subsets"))
            .collect();
        let mut boot_rng = substream(seed, StreamKind::Bootstrap, 0, 0);
        let naive = energy_estimate_with_ci(
            &h,
            &dataset,
            cfg.bootstrap_resamples,
            cfg.confidence,
            &mut boot_rng,
        )
        .expect("bootstrap on a nonempty dataset");
        let (alpha0, alpha1, e_min, e_max, flag) =
            match energy_bounds_at(&h, &sets, level, cfg.delta_min, cfg.delta_max, &solver) {
                Ok(b) => (b.alpha_wide, b.alpha_tight, b.e_min, b.e_max, "ok"),
                Err(BoundsError::Diverged { .. }) => {
                    (f64::NAN, f64::NAN, f64::NAN, f64::NAN, "diverged")
                }
                Err(e) => panic!("bound computation failed: {e}"),
            };
        let lbv = lb[&(n, level.to_string())];
        format!(
            "{n},{n_s},{seed},{level},{},{},{},{},{},{},{},{},{},{flag}",
            fmt_f64(alpha0),
            fmt_f64(alpha1),
            fmt_f64(e_min),
            fmt_f64(e_max),
            fmt_f64(naive.value),
            fmt_f64(naive.ci_low),
            fmt_f64(naive.ci_high),
            fmt_f64(gs.energy),
            fmt_f64(lbv),
        )
    });

    let mut text = csv_header(
        "ground-bounds",
        &cfg,
        "n,n_s,seed,level,alpha0,alpha1,e_min,e_max,e_naive,ci_low,ci_high,e_exact,lb_variational,flag",
    );
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    let path = out_path(common, "ground_bounds.csv");
    fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_cool(common: &CommonFlags, full_grid: bool) -> Result<(), String> {
    let mut cfg = ExperimentConfig::load(common, "cool")?;
    if full_grid {
        cfg.widen_to_full_grid();
    }

    struct Cell {
        n: usize,
        n_s: usize,
        seed: u64,
        mode: CoolingMode,
    }
    let mut grid = Vec::new();
    for &n in &cfg.ns {
        for &n_s in &cfg.shots {
            for &seed in &cfg.seeds {
                for &mode in &cfg.modes {
                    grid.push(Cell { n, n_s, seed, mode });
                }
            }
        }
    }

    let rows = cfg.run_grid(grid.len(), |i| {
        let Cell { n, n_s, seed, mode } = grid[i];
        let h = build_xy_chain::<f64>(n, cfg.j);
        let run = CoolingConfig {
            initial: cfg.initial,
            mode,
            max_layers: cfg.max_layers,
            shots_per_iteration: n_s,
            seed,
        };
        let trace = run_cooling(&h, &run).expect("cooling run");
        let mut out = String::new();
        let mut gates = 0usize;
        for (iter, it) in trace.iterations.iter().enumerate() {
            gates += it.layer.len();
            let lbtext = it.sdp_lower_bound.map(fmt_f64).unwrap_or_default();
            let flag = if mode == CoolingMode::TomographySdp && !it.refined {
                "fallback"
            } else {
                "ok"
            };
            let _ = writeln!(
                out,
                "{n},{n_s},{seed},{iter},{mode},{},{},{lbtext},{},{gates},{flag}",
                fmt_f64(it.energy_estimate),
                fmt_f64(it.energy_exact),
                it.layer.len(),
            );
        }
        out
    });

    let mut text = csv_header(
        "cool",
        &cfg,
        "n,n_s,seed,iteration,mode,energy_estimate,energy_exact,sdp_lower_bound,layer_size,cumulative_gates,flag",
    );
    for block in rows {
        text.push_str(&block);
    }
    let path = out_path(common, "cool.csv");
    fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_solve(common: &CommonFlags, problem_path: &PathBuf) -> Result<u8, String> {
    let cfg = ExperimentConfig::load(common, "solve")?;
    let text = fs::read_to_string(problem_path)
        .map_err(|e| format!("cannot read {}: {e}", problem_path.display()))?;
    let problem = SdpProblem::from_json(&text).map_err(|e| format!("problem JSON: {e}"))?;
    let solution =
        solve(&problem, &cfg.solver()).map_err(|e| format!("solver rejected input: {e}"))?;

    let mut report = String::new();
    let _ = writeln!(report, "status: {}", solution.status);
    let _ = writeln!(report, "objective: {}", fmt_f64(solution.objective));
    let _ = writeln!(report, "dual_objective: {}", fmt_f64(solution.dual_objective));
    let _ = writeln!(report, "iterations: {}", solution.iterations);
    if let Ok(residuals) = kkt_residuals(&problem, &solution) {
        let _ = writeln!(report, "primal_residual: {}", fmt_f64(residuals.primal));
        let _ = writeln!(report, "dual_residual: {}", fmt_f64(residuals.dual));
        let _ = writeln!(report, "gap: {}", fmt_f64(residuals.gap));
    }
    print!("{report}");
    if let Some(out) = &common.out {
        fs::write(out, &report).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    }
    Ok(match solution.status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible { .. } => 2,
        SolveStatus::MaxIterations => 3,
    })
}

fn run_oracle(common: &CommonFlags, n: Option<usize>, j: f64) -> Result<u8, String> {
    let cfg = ExperimentConfig::load(common, "oracle")?;
    let solver = cfg.solver();
    let ns: Vec<usize> = match n {
        Some(v) => {
            if !(2..=8).contains(&v) {
                return Err(format!("oracle supports n in 2..=8, got {v}"));
            }
            vec![v]
        }
        None => (2..=8).collect(),
    };

    let mut text = csv_header("oracle", &cfg, "n,j,e_formula,e_diag,e_hf,lb_oc,lb_ocec,status");
    let mut all_ok = true;
    for &n in &ns {
        let h = build_xy_chain::<f64>(n, j);
        let formula = xy_exact_energy::<f64>(n, j);
        let gs = ground_state(&h).map_err(|e| format!("diagonalization n={n}: {e}"))?;
        let hf = sdptomo::cooling::hartree_fock_state(&h)
            .map_err(|e| format!("mean-field n={n}: {e}"))?
            .energy(&h);
        let lb_oc = variational_lower_bound(&h, ConstraintLevel::Oc, &solver)
            .map_err(|e| format!("bound n={n}: {e}"))?
            .bound;
        let lb_ocec = variational_lower_bound(&h, ConstraintLevel::OcEc, &solver)
            .map_err(|e| format!("bound n={n}: {e}"))?
            .bound;
        let ok = (formula - gs.energy).abs() <= 1e-9
            && lb_oc <= gs.energy + 1e-9
            && lb_ocec <= gs.energy + 1e-9
            && gs.energy <= hf + 1e-9;
        all_ok &= ok;
        let _ = writeln!(
            text,
            "{n},{j},{},{},{},{},{},{}",
            fmt_f64(formula),
            fmt_f64(gs.energy),
            fmt_f64(hf),
            fmt_f64(lb_oc),
            fmt_f64(lb_ocec),
            if ok { "ok" } else { "violated" },
        );
    }
    print!("{text}");
    if let Some(out) = &common.out {
        fs::write(out, &text).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    }
    if all_ok {
        Ok(0)
    } else {
        eprintln!("oracle checks failed: bound ordering violated");
        Ok(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::GroundBounds { common, full_grid } => {
            run_ground_bounds(common, *full_grid).map(|()| 0)
        }
        Command::Cool { common, full_grid } => run_cool(common, *full_grid).map(|()| 0),
        Command::Solve { common, problem } => run_solve(common, problem),
        Command::Oracle { common, n, j } => run_oracle(common, *n, *j),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
