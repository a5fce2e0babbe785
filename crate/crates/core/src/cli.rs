//! Command-line front end: `solve`, `check`, `oracle` and `bench` over model files.
//!
//! Exit codes: 0 success, 1 oracle gap above 1e-8, 2 unreadable or malformed
//! input, 3 failed assumption or parameter check, 4 non-convergence,
//! 5 enumeration guard exceeded.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::aggregator::Aggregator;
use crate::error::{DpError, Result};
use crate::families::{
    Additive, AdditiveParams, Ambiguity, AmbiguityParams, EpsteinZin, EzParams, Family, NarrowFraming,
    NarrowFramingParams, RiskSensitive, RiskSensitiveParams,
};
use crate::io::{export_report, load_model, LoadedModel};
use crate::model::ModelSpec;
use crate::solver::{Problem, SolveOptions, SolveReport};
use crate::synth::{banded_model, uniform_kernel};
use crate::unbounded::{check_weight_assumptions, WeightedBracket};
use crate::value::{sup_norm_distance, weighted_distance, Bracket};
use crate::verify::{check_assumptions, enumerate_with, OracleOptions, DEFAULT_SAMPLES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_GAP: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;
pub const EXIT_GUARD: i32 = 5;

/// Largest oracle gap accepted by `oracle`.
pub const ORACLE_GAP: f64 = 1e-8;

/// Environment variable capping the number of sweep threads.
pub const THREADS_ENV: &str = "RECURDP_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "recurdp",
    version,
    about = "Value function iteration for recursive-preference MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check assumptions, iterate to the fixed point and export tables.
    Solve(SolveArgs),
    /// Print the assumption report; exit 0 iff every check passes.
    Check(ModelArgs),
    /// Compare value function iteration with brute-force policy enumeration.
    Oracle(ModelArgs),
    /// Time value function iteration across grid sizes and families.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model file (TOML).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Seed for the sampled assumption checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Bracket slack override.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: ModelArgs,
    /// Directory for values.csv, policy.csv and diagnostics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solve even when the assumption check fails.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Directory for bench.csv; the table goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid sizes `n`; each run uses `n` endogenous and `n` exogenous states.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10, 50, 100])]
    sizes: Vec<usize>,
    /// Tolerance relative to the largest entry of the current iterate.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 100_000)]
    max_iter: usize,
}

/// Maps an error to the documented exit code.
pub fn exit_code(err: &DpError) -> i32 {
    match err {
        DpError::Parse(_) | DpError::Io(_) | DpError::InvalidModel(_) | DpError::Shape { .. } => EXIT_PARSE,
        DpError::Infeasible { .. } => EXIT_PARSE,
        DpError::Parameter(_)
        | DpError::Regime(_)
        | DpError::Domain { .. }
        | DpError::OutsideBracket { .. }
        | DpError::Direction
        | DpError::SearchFailure(_) => EXIT_ASSUMPTION,
        DpError::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        DpError::EnumerationGuard { .. } => EXIT_GUARD,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_PARSE;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|t| t.parse::<usize>().ok()) {
        // Fails only when the global pool already exists, which keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, out, err),
        Command::Check(a) => cmd_check(a, out, err),
        Command::Oracle(a) => cmd_oracle(a, out, err),
        Command::Bench(a) => cmd_bench(a, out, err),
    }
}

fn report_error(e: &DpError, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "error: {e}");
    if let DpError::NonConvergence { residuals } = e {
        let start = residuals.len().saturating_sub(20);
        for (i, r) in residuals.iter().enumerate().skip(start) {
            let _ = writeln!(err, "  residual[{}] = {r:.6e}", i + 1);
        }
    }
    exit_code(e)
}

macro_rules! try_or_exit {
    ($e:expr, $err:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return report_error(&e, $err),
        }
    };
}

/// A loaded model with command-line overrides applied.
struct Session {
    loaded: LoadedModel,
    tol: f64,
    max_iter: usize,
    seed: u64,
}

impl Session {
    fn open(args: &ModelArgs) -> Result<Self> {
        let mut loaded = load_model(&args.model)?;
        if let Some(delta) = args.delta {
            loaded.override_delta(delta)?;
            if let Some(w) = loaded.weight.as_mut() {
                w.delta = Some(delta);
            }
        }
        Ok(Session {
            tol: args.tol.unwrap_or(loaded.solver.tol()),
            max_iter: args.max_iter.unwrap_or(loaded.solver.max_iter()),
            seed: args.seed.unwrap_or(loaded.solver.seed()),
            loaded,
        })
    }

    fn model(&self) -> &ModelSpec {
        &self.loaded.model
    }

    fn family(&self) -> &Family {
        &self.loaded.family
    }

    /// Weighted bracket for files with a weight block.
    fn weighted(&self) -> Result<Option<WeightedBracket>> {
        match (&self.loaded.weight, self.family()) {
            (Some(spec), Family::EpsteinZin(ez)) => Ok(Some(WeightedBracket::new(spec, ez.beta(), ez.theta())?)),
            _ => Ok(None),
        }
    }

    fn bracket(&self) -> Result<Bracket> {
        match self.weighted()? {
            Some(wb) => Ok(wb.bracket),
            None => self.family().bracket(self.model()),
        }
    }

    fn problem(&self) -> Result<Problem<'_, &Family>> {
        Problem::with_bracket(self.model(), self.family(), self.bracket()?)
    }

    fn options(&self) -> Result<SolveOptions> {
        Ok(SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            weights: self.weighted()?.map(|wb| wb.kappa_pow),
            ..SolveOptions::default()
        })
    }

    /// Runs every check and prints the reports; returns whether all passed.
    fn check(&self, out: &mut dyn Write) -> Result<bool> {
        let bracket = self.bracket()?;
        let report = check_assumptions(self.model(), self.family(), &bracket, DEFAULT_SAMPLES, self.seed)?;
        let _ = writeln!(out, "family          {}", self.family().name());
        let _ = writeln!(out, "{report}");
        let mut ok = report.all_ok();
        if let (Some(spec), Some(wb), Family::EpsteinZin(ez)) = (&self.loaded.weight, self.weighted()?, self.family()) {
            let weights = check_weight_assumptions(self.model(), spec, ez.theta())?;
            let _ = writeln!(out, "weight conditions:\n{weights}");
            let (strict_lower, upper) = wb.check_conditions(self.model(), self.family())?;
            let bracket_ok = strict_lower <= 1e-10 && upper <= 1e-10;
            let _ = writeln!(
                out,
                "weighted bracket: strict lower {strict_lower:.3e}, upper {upper:.3e} ({})",
                if bracket_ok { "ok" } else { "FAIL" }
            );
            ok &= weights.all_ok() && bracket_ok;
        }
        Ok(ok)
    }

    fn distance(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        match self.weighted()? {
            Some(wb) => weighted_distance(u, v, &wb.kappa_pow),
            None => sup_norm_distance(u, v),
        }
    }
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let session = try_or_exit!(Session::open(&args.common), err);
    let ok = try_or_exit!(session.check(out), err);
    if !ok {
        if args.force {
            let _ = writeln!(err, "warning: assumption check failed; continuing because of --force");
        } else {
            let _ = writeln!(err, "error: assumption check failed (use --force to solve anyway)");
            return EXIT_ASSUMPTION;
        }
    }
    let problem = try_or_exit!(session.problem(), err);
    let report = try_or_exit!(problem.solve(&try_or_exit!(session.options(), err)), err);
    print_solution(&session, &report, out);
    if let Some(dir) = &args.out {
        try_or_exit!(export_report(&report, session.family(), session.model(), dir), err);
        let _ = writeln!(out, "wrote {}", dir.display());
    }
    EXIT_OK
}

fn print_solution(session: &Session, report: &SolveReport, out: &mut dyn Write) {
    let model = session.model();
    let original = session.family().to_original_units(report.fixed_point.values()).ok();
    let _ = writeln!(
        out,
        "converged in {} iterations, final residual {:.3e}",
        report.iterations,
        report.residuals.last().copied().unwrap_or(0.0)
    );
    if let Some(rate) = report.contraction_estimate {
        let _ = writeln!(out, "contraction estimate {rate:.6}");
    }
    let _ = writeln!(
        out,
        "{:>6} {:>6} {:>24} {:>24} {:>8}",
        "s", "z", "v_transformed", "v_original", "action"
    );
    for x in 0..model.n_states() {
        let (s, z) = model.split(x);
        let v = original.as_ref().map(|o| format!("{:.16e}", o[x])).unwrap_or_default();
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>24.16e} {:>24} {:>8}",
            model.s_grid()[s],
            model.z_grid()[z],
            report.fixed_point[x],
            v,
            model.a_grid()[report.policy[x]]
        );
    }
}

fn cmd_check(args: &ModelArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let session = try_or_exit!(Session::open(args), err);
    if try_or_exit!(session.check(out), err) {
        EXIT_OK
    } else {
        let _ = writeln!(err, "error: assumption check failed");
        EXIT_ASSUMPTION
    }
}

fn cmd_oracle(args: &ModelArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let session = try_or_exit!(Session::open(args), err);
    let problem = try_or_exit!(session.problem(), err);
    let opts = OracleOptions {
        tol: session.tol,
        max_iter: session.max_iter,
        ..OracleOptions::default()
    };
    let oracle = try_or_exit!(enumerate_with(&problem, &opts), err);
    let report = try_or_exit!(problem.solve(&try_or_exit!(session.options(), err)), err);
    let gap = try_or_exit!(session.distance(&oracle.optimal_value, &report.fixed_point), err);
    let _ = writeln!(out, "policies enumerated {}", oracle.policies_enumerated);
    let _ = writeln!(out, "direction           {:?}", problem.direction());
    let _ = writeln!(out, "oracle gap          {gap:.3e}");
    if gap <= ORACLE_GAP {
        EXIT_OK
    } else {
        let _ = writeln!(err, "error: oracle gap {gap:.3e} exceeds {ORACLE_GAP:e}");
        EXIT_GAP
    }
}

/// The families timed by `bench`, each paired with the model it runs on.
fn bench_families(base: &ModelSpec) -> Result<Vec<(&'static str, Family, ModelSpec)>> {
    let ez = |rho, gamma| {
        EpsteinZin::new(EzParams {
            beta: 0.9,
            rho,
            gamma,
            delta: None,
            regime: None,
        })
    };
    let n_z = base.n_z();
    let gambles: Vec<Vec<Vec<f64>>> = (0..base.n_s())
        .map(|s| {
            (0..base.n_a())
                .map(|a| vec![0.02 * (1 + (s + a) % 3) as f64; n_z])
                .collect()
        })
        .collect();
    let ambiguity = Ambiguity::new(AmbiguityParams {
        beta: 0.9,
        rho: 0.5,
        gamma: 2.0,
        eta: 5.0,
        kernels: vec![base.kernel_table(), uniform_kernel(n_z)],
        mu: vec![vec![0.5, 0.5]; n_z],
        delta: None,
    })?;
    Ok(vec![
        (
            "additive",
            Additive::new(AdditiveParams {
                beta: 0.9,
                eps_margin: None,
            })?
            .into(),
            base.clone(),
        ),
        ("epstein-zin-convex", ez(0.5, 0.8)?.into(), base.clone()),
        ("epstein-zin-concave", ez(0.5, 2.0)?.into(), base.clone()),
        ("epstein-zin-theta-above-one", ez(1.5, 3.0)?.into(), base.clone()),
        (
            "risk-sensitive",
            RiskSensitive::new(RiskSensitiveParams {
                beta: 0.9,
                theta: 1.0,
                delta: None,
            })?
            .into(),
            base.clone(),
        ),
        ("ambiguity", ambiguity.into(), base.clone()),
        (
            "narrow-framing",
            NarrowFraming::new(NarrowFramingParams {
                beta: 0.9,
                rho: 0.5,
                gamma: 2.0,
            })?
            .into(),
            base.with_gamble_utility(gambles)?,
        ),
    ])
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut rows = vec!["family,n_states,n_s,n_z,iterations,final_residual,seconds".to_string()];
    let opts = SolveOptions::default()
        .with_tol(args.tol)
        .with_max_iter(args.max_iter)
        .relative();
    for &n in &args.sizes {
        let base = banded_model(n, n, 2, args.seed);
        for (name, family, model) in try_or_exit!(bench_families(&base), err) {
            let problem = try_or_exit!(Problem::new(&model, &family), err);
            let start = Instant::now();
            let report = try_or_exit!(problem.solve(&opts), err);
            let seconds = start.elapsed().as_secs_f64();
            rows.push(format!(
                "{name},{},{n},{n},{},{:.16e},{seconds:.6}",
                model.n_states(),
                report.iterations,
                report.residuals.last().copied().unwrap_or(0.0)
            ));
        }
    }
    let table = rows.join("\n") + "\n";
    match &args.out {
        Some(dir) => {
            let path = dir.join("bench.csv");
            let written = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, &table));
            try_or_exit!(
                written.map_err(|e| DpError::Io(format!("{}: {e}", path.display()))),
                err
            );
            let _ = write!(out, "{table}");
            let _ = writeln!(out, "wrote {}", path.display());
        }
        None => {
            let _ = write!(out, "{table}");
        }
    }
    EXIT_OK
}
