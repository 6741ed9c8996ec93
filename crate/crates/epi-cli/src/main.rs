//! `epi`: information functionals, the Gaussian-channel bottleneck solver,
//! closed-form reference arithmetic, rate-region queries, and the seeded
//! inequality verification suites, from one binary.
//!
//! Exit codes: 0 success, 1 verification failures, 2 usage or parse errors,
//! 3 numeric-gate failures (unstable Fisher estimates, truncated supports).

// `!(a > b)` deliberately treats NaN flag values as invalid.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use clap::{Args, Parser, Subcommand};
use epi_core::channel::{ChannelSpec, VFamily};
use epi_core::closed_form as cf;
use epi_core::error::Error;
use epi_core::functionals::{
    de_bruijn_residual, differential_entropy, doubling_constant, entropy_power,
    fisher_information,
};
use epi_core::grid::{parse_density, LoadedDensity};
use epi_core::ib::{s_lambda_parts, SolveOpts};
use epi_core::suite::{reports_to_csv, run_corpus_with_threads, GridProfile, ReportMeta, Suite};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VERIFY_FAILURES: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC_GATE: u8 = 3;

/// Worker-thread count: `--threads` flag, then `EPI_THREADS`, then available
/// parallelism. Results are independent of the choice.
fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("EPI_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
    .max(1)
}

#[derive(Parser)]
#[command(
    name = "epi",
    about = "Information functionals, bottleneck solver, and entropy-power inequality suites on gridded densities"
)]
struct Cli {
    /// Grid resolution for densities generated from mixture descriptions.
    #[arg(long, global = true, default_value_t = 2049)]
    grid_n: usize,
    /// Support padding fraction for generated grids.
    #[arg(long, global = true, default_value_t = 0.1)]
    grid_pad: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print differential entropy, entropy power, Fisher information,
    /// doubling constant and the heat-flow residual of a density file.
    Functionals {
        /// Density file (sampled grid or mixture JSON).
        #[arg(long)]
        input: PathBuf,
        /// Also write a `quantity,value` CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Heat time for the residual; defaults to 1e-3 * Var.
        #[arg(long)]
        t: Option<f64>,
    },
    /// Solve `inf I(Y;V) - lambda I(X;V)` for `Y = sqrt(snr) X + Z` and
    /// report the dual functional value as JSON.
    Ib(IbArgs),
    /// Rate-region queries for the unit-variance correlated source pair.
    Region(RegionArgs),
    /// Closed-form reference arithmetic, printed as JSON.
    #[command(subcommand)]
    ClosedForm(ClosedFormCmd),
    /// Run inequality verification suites over a seeded corpus.
    Verify(VerifyArgs),
    /// Exploratory: the strengthened-form record with non-Gaussian mixture
    /// noise. Emits slack data; asserts nothing.
    ExploreNongaussianW(ExploreArgs),
}

#[derive(Args)]
struct IbArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    snr: f64,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 64)]
    v_size: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 20000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Joint-grid resolution for the solver.
    #[arg(long, default_value_t = 512)]
    joint_n: usize,
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    dx: f64,
    #[arg(long)]
    dy: f64,
    /// Rate pair to check against the region (point query).
    #[arg(long)]
    rx: Option<f64>,
    #[arg(long)]
    ry: Option<f64>,
    /// Sweep start for the boundary table.
    #[arg(long)]
    r1_min: Option<f64>,
    /// Sweep end for the boundary table.
    #[arg(long)]
    r1_max: Option<f64>,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Write the boundary CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ClosedFormCmd {
    /// Gaussian bottleneck value at (gamma, snr, lambda).
    IbValue {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        snr: f64,
        #[arg(long)]
        lambda: f64,
    },
    /// Optimal additive-noise variance for the Gaussian bottleneck.
    OptimalNoise {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        snr: f64,
        #[arg(long)]
        lambda: f64,
    },
    /// Dual functional value at (snr, lambda).
    VLambda {
        #[arg(long)]
        snr: f64,
        #[arg(long)]
        lambda: f64,
    },
    /// Coordinate sum of the dual functional over an snr vector.
    VLambdaVector {
        /// Comma-separated snr values.
        #[arg(long, value_delimiter = ',')]
        snrs: Vec<f64>,
        #[arg(long)]
        lambda: f64,
    },
    /// Quadratic-root factor in the sum-rate bound.
    Beta {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        d: f64,
    },
    /// Three rate-region slacks at a (rates, distortions) query.
    Wagner {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        rx: f64,
        #[arg(long)]
        ry: f64,
        #[arg(long)]
        dx: f64,
        #[arg(long)]
        dy: f64,
    },
    /// Exponentiated mutual-information slack for the two-encoder bound.
    MtscSlack {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        i_xu: f64,
        #[arg(long)]
        i_yu: f64,
        #[arg(long)]
        i_xv_given_u: f64,
        #[arg(long)]
        i_yv_given_u: f64,
    },
    /// Strong data-processing upper bound at budget t.
    Sdpi {
        #[arg(long)]
        h_x: f64,
        #[arg(long)]
        i_xy: f64,
        #[arg(long)]
        t: f64,
    },
    /// Gaussian-input Han-Kobayashi region membership.
    Hk {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        p1: f64,
        #[arg(long)]
        p2: f64,
        #[arg(long)]
        r1: f64,
        #[arg(long)]
        r2: f64,
    },
    /// Poincare-sharpened Stam slack.
    Poincare {
        #[arg(long)]
        n: f64,
        #[arg(long)]
        j: f64,
        #[arg(long)]
        zeta: f64,
    },
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated suite names, or `all`.
    #[arg(long, default_value = "all")]
    suites: String,
    #[arg(long, default_value_t = 10)]
    n_cases: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: EPI_THREADS or available parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ExploreArgs {
    /// Density file for the input X.
    #[arg(long)]
    input: PathBuf,
    /// Mixture file for the (non-Gaussian) noise W.
    #[arg(long)]
    noise: PathBuf,
    /// Gaussian-degradation variance for the auxiliary.
    #[arg(long)]
    u_sigma2: Option<f64>,
    /// Quantizer bin count for the auxiliary.
    #[arg(long)]
    quantize_k: Option<usize>,
}

fn classify_exit(err: &Error) -> u8 {
    match err {
        Error::FisherUnstable { .. } | Error::Truncation(..) => EXIT_NUMERIC_GATE,
        _ => EXIT_USAGE,
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn read_density(path: &Path, grid_n: usize, pad: f64) -> Result<LoadedDensity, (u8, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_USAGE, format!("{}: {e}", path.display())))?;
    parse_density(&text, grid_n, pad).map_err(|e| (classify_exit(&e), e.to_string()))
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), (u8, String)> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| (EXIT_USAGE, format!("{}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Functionals { input, csv, t } => {
            cmd_functionals(&input, csv, t, cli.grid_n, cli.grid_pad)
        }
        Command::Ib(args) => cmd_ib(args, cli.grid_n, cli.grid_pad),
        Command::Region(args) => cmd_region(args),
        Command::ClosedForm(cmd) => cmd_closed_form(cmd),
        Command::Verify(args) => cmd_verify(args),
        Command::ExploreNongaussianW(args) => cmd_explore(args, cli.grid_n, cli.grid_pad),
    };
    match result {
        Ok(code) => code,
        Err((code, msg)) => fail(code, msg),
    }
}

type CmdResult = Result<ExitCode, (u8, String)>;

fn cmd_functionals(
    input: &Path,
    csv: Option<PathBuf>,
    t: Option<f64>,
    grid_n: usize,
    pad: f64,
) -> CmdResult {
    let loaded = read_density(input, grid_n, pad)?;
    let d = &loaded.density;
    let h = differential_entropy(d);
    let n = entropy_power(d);
    let j = fisher_information(d).map_err(|e| (classify_exit(&e), e.to_string()))?;
    let dc = doubling_constant(d).map_err(|e| (classify_exit(&e), e.to_string()))?;
    let t = t.unwrap_or(1e-3 * d.variance());
    let residual =
        de_bruijn_residual(d, t, None).map_err(|e| (classify_exit(&e), e.to_string()))?;

    println!("differential_entropy_bits  {h:.6}");
    println!("entropy_power              {n:.6}");
    println!("fisher_information         {j:.6}");
    println!("doubling_constant          {dc:.6}");
    println!("de_bruijn_residual         {residual:.6e}");
    if let Some(path) = csv {
        let mut content = String::from("quantity,value\n");
        content.push_str(&format!("differential_entropy_bits,{h}\n"));
        content.push_str(&format!("entropy_power,{n}\n"));
        content.push_str(&format!("fisher_information,{j}\n"));
        content.push_str(&format!("doubling_constant,{dc}\n"));
        content.push_str(&format!("de_bruijn_residual,{residual}\n"));
        std::fs::write(&path, content)
            .map_err(|e| (EXIT_USAGE, format!("{}: {e}", path.display())))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ib(args: IbArgs, grid_n: usize, pad: f64) -> CmdResult {
    if args.lambda > epi_core::ib::LAMBDA_CAP {
        eprintln!(
            "warning: lambda {} capped at {}",
            args.lambda,
            epi_core::ib::LAMBDA_CAP
        );
    }
    let loaded = read_density(&args.input, grid_n, pad)?;
    let channel =
        ChannelSpec::new(args.snr, args.noise_var).map_err(|e| (EXIT_USAGE, e.to_string()))?;
    let opts = SolveOpts {
        v_size: args.v_size,
        tol: args.tol,
        max_iter: args.max_iter,
        seed: args.seed,
        restarts: args.restarts,
        joint_n: args.joint_n,
    };
    let parts = s_lambda_parts(&loaded.density, channel, args.lambda, &opts)
        .map_err(|e| (classify_exit(&e), e.to_string()))?;
    let sol = &parts.solution;

    // Closed-form comparison for single-Gaussian inputs.
    let oracle = loaded.mixture.as_ref().and_then(|m| {
        if m.weights.len() == 1 {
            let gamma = m.variances[0];
            Some(json!({
                "gamma": gamma,
                "objective": cf::gaussian_ib_value(gamma, args.snr, args.lambda),
                "optimal_noise": cf::gaussian_ib_optimal_noise(gamma, args.snr, args.lambda),
            }))
        } else {
            None
        }
    });

    let payload = json!({
        "snr": args.snr,
        "lambda": args.lambda,
        "v_size": args.v_size,
        "seed": args.seed,
        "objective": sol.objective,
        "i_xv": sol.i_xv,
        "i_yv": sol.i_yv,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "restarts_used": sol.restarts_used,
        "h_x": parts.h_x,
        "h_y": parts.h_y,
        "s_lambda": parts.value,
        "gaussian_oracle": oracle,
    });
    println!("{payload}");
    Ok(ExitCode::SUCCESS)
}

fn r_y_min(rho: f64, dx: f64, dy: f64, r_x: f64) -> Option<f64> {
    let r2 = rho * rho;
    let om = 1.0 - r2;
    let bound_y = (0.5 * ((om + r2 * (-2.0 * r_x).exp2()) / dy).log2()).max(0.0);
    let bound_x_side = if r2 == 0.0 {
        if dx * (2.0 * r_x).exp2() >= 1.0 {
            0.0
        } else {
            return None;
        }
    } else {
        let cap = (dx * (2.0 * r_x).exp2() - om) / r2;
        if cap <= 0.0 {
            return None;
        } else if cap >= 1.0 {
            0.0
        } else {
            -0.5 * cap.log2()
        }
    };
    let spec = cf::GaussianSourceSpec::new(rho).ok()?;
    let bound_sum = (cf::sum_rate_bound(spec, dx, dy).ok()? - r_x).max(0.0);
    Some(bound_y.max(bound_x_side).max(bound_sum))
}

fn cmd_region(args: RegionArgs) -> CmdResult {
    let spec = cf::GaussianSourceSpec::new(args.rho).map_err(|e| (EXIT_USAGE, e.to_string()))?;
    if let (Some(r1_min), Some(r1_max)) = (args.r1_min, args.r1_max) {
        if !(r1_max > r1_min) || args.steps < 2 {
            return Err((
                EXIT_USAGE,
                "sweep needs r1_max > r1_min and steps >= 2".to_string(),
            ));
        }
        let mut csv = String::from("r_x,r_y_min\n");
        for i in 0..args.steps {
            let r_x = r1_min + (r1_max - r1_min) * i as f64 / (args.steps - 1) as f64;
            if let Some(ry) = r_y_min(args.rho, args.dx, args.dy, r_x) {
                csv.push_str(&format!("{r_x},{ry}\n"));
            }
        }
        write_or_print(&args.out, &csv)?;
        return Ok(ExitCode::SUCCESS);
    }
    let sum_bound =
        cf::sum_rate_bound(spec, args.dx, args.dy).map_err(|e| (EXIT_USAGE, e.to_string()))?;
    let beta = cf::beta_of_d(spec, args.dx * args.dy).map_err(|e| (EXIT_USAGE, e.to_string()))?;
    let mut payload = json!({
        "rho": args.rho,
        "dx": args.dx,
        "dy": args.dy,
        "beta": beta,
        "sum_rate_bound": sum_bound,
    });
    if let (Some(rx), Some(ry)) = (args.rx, args.ry) {
        let q = cf::RateDistortionQuery::new(rx, ry, args.dx, args.dy)
            .map_err(|e| (EXIT_USAGE, e.to_string()))?;
        let (sx, sy, ss) = cf::wagner_bounds(spec, q).map_err(|e| (EXIT_USAGE, e.to_string()))?;
        let obj = payload.as_object_mut().unwrap();
        obj.insert("slack_x".into(), json!(sx));
        obj.insert("slack_y".into(), json!(sy));
        obj.insert("slack_sum".into(), json!(ss));
        obj.insert(
            "admissible".into(),
            json!(sx >= 0.0 && sy >= 0.0 && ss >= 0.0),
        );
    }
    println!("{payload}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_closed_form(cmd: ClosedFormCmd) -> CmdResult {
    let err = |e: Error| (EXIT_USAGE, e.to_string());
    let payload = match cmd {
        ClosedFormCmd::IbValue { gamma, snr, lambda } => json!({
            "gaussian_ib_value": cf::gaussian_ib_value(gamma, snr, lambda),
        }),
        ClosedFormCmd::OptimalNoise { gamma, snr, lambda } => json!({
            "optimal_noise": cf::gaussian_ib_optimal_noise(gamma, snr, lambda),
        }),
        ClosedFormCmd::VLambda { snr, lambda } => json!({
            "v_lambda": cf::v_lambda(snr, lambda).map_err(err)?,
        }),
        ClosedFormCmd::VLambdaVector { snrs, lambda } => json!({
            "v_lambda_vector": cf::v_lambda_vector(&snrs, lambda).map_err(err)?,
            "coordinates": snrs.len(),
        }),
        ClosedFormCmd::Beta { rho, d } => {
            let spec = cf::GaussianSourceSpec::new(rho).map_err(err)?;
            json!({ "beta": cf::beta_of_d(spec, d).map_err(err)? })
        }
        ClosedFormCmd::Wagner {
            rho,
            rx,
            ry,
            dx,
            dy,
        } => {
            let spec = cf::GaussianSourceSpec::new(rho).map_err(err)?;
            let q = cf::RateDistortionQuery::new(rx, ry, dx, dy).map_err(err)?;
            let (sx, sy, ss) = cf::wagner_bounds(spec, q).map_err(err)?;
            json!({
                "slack_x": sx,
                "slack_y": sy,
                "slack_sum": ss,
                "admissible": sx >= 0.0 && sy >= 0.0 && ss >= 0.0,
            })
        }
        ClosedFormCmd::MtscSlack {
            rho,
            i_xu,
            i_yu,
            i_xv_given_u,
            i_yv_given_u,
        } => {
            let spec = cf::GaussianSourceSpec::new(rho).map_err(err)?;
            json!({
                "slack": cf::proposition_mtsc_slack(spec, i_xu, i_yu, i_xv_given_u, i_yv_given_u),
            })
        }
        ClosedFormCmd::Sdpi { h_x, i_xy, t } => json!({
            "bound": cf::strong_dpi_bound(h_x, i_xy, t).map_err(err)?,
        }),
        ClosedFormCmd::Hk {
            alpha,
            p1,
            p2,
            r1,
            r2,
        } => {
            let ic = cf::ICSpec::new(alpha, p1, p2).map_err(err)?;
            let check = cf::hk_gaussian_region_check(ic, r1, r2);
            json!({
                "admissible": check.admissible,
                "slack_r1": check.slack_r1,
                "slack_r2": check.slack_r2,
                "slack_cross": check.slack_cross,
            })
        }
        ClosedFormCmd::Poincare { n, j, zeta } => json!({
            "slack": cf::poincare_sharpened_slack(n, j, zeta).map_err(err)?,
        }),
    };
    println!("{payload}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let suites = Suite::parse_list(&args.suites).map_err(|e| (EXIT_USAGE, e.to_string()))?;
    let threads = thread_count(args.threads);
    let profile = GridProfile::default();
    let reports = run_corpus_with_threads(args.seed, args.n_cases, &suites, &profile, threads)
        .map_err(|e| (EXIT_USAGE, e.to_string()))?;
    let csv = reports_to_csv(&reports);
    write_or_print(&args.out, &csv)?;
    let failures = reports.iter().filter(|r| !r.pass).count();
    eprintln!("{} cases, {} failures", args.n_cases, failures);
    if failures > 0 {
        Ok(ExitCode::from(EXIT_VERIFY_FAILURES))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_explore(args: ExploreArgs, grid_n: usize, pad: f64) -> CmdResult {
    let loaded = read_density(&args.input, grid_n, pad)?;
    let noise_text = std::fs::read_to_string(&args.noise)
        .map_err(|e| (EXIT_USAGE, format!("{}: {e}", args.noise.display())))?;
    let noise = parse_density(&noise_text, grid_n, pad)
        .map_err(|e| (classify_exit(&e), e.to_string()))?;
    let w_spec = noise.mixture.ok_or((
        EXIT_USAGE,
        "noise file must be a mixture description".to_string(),
    ))?;
    let family = match (args.u_sigma2, args.quantize_k) {
        (Some(u), None) => VFamily::Gaussian { u_sigma2: u },
        (None, Some(k)) => VFamily::Quantize { k },
        (None, None) => VFamily::Quantize { k: 8 },
        _ => {
            return Err((
                EXIT_USAGE,
                "choose one of --u-sigma2 or --quantize-k".to_string(),
            ))
        }
    };
    let report = epi_core::suite::explore_mixture_noise(
        &loaded.density,
        &w_spec,
        family,
        &GridProfile::default(),
        ReportMeta::standalone(),
    )
    .map_err(|e| (classify_exit(&e), e.to_string()))?;
    let payload = json!({
        "name": report.name,
        "lhs": report.lhs,
        "rhs": report.rhs,
        "slack": report.slack,
        "note": "exploratory record: nonnegativity is not asserted for non-Gaussian noise",
    });
    println!("{payload}");
    Ok(ExitCode::SUCCESS)
}
