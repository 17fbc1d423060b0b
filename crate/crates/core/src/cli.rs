//! Command-line front end: evaluate Q at points, run verification suites,
//! and compute global lattice integrals.
//!
//! Exit codes: 0 success (all checks pass), 1 failed checks, 2 spec or
//! configuration errors, 3 numeric domain / budget errors.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::curvature::CurvatureBundle;
use crate::error::{Error, Result};
use crate::holographic;
use crate::models;
use crate::quadrature::{self, Budget};
use crate::report::{
    hybrid_residual, Check, PointRecord, QReport, SuiteReport, Summary, REPORT_VERSION,
};
use crate::tensor::MetricSpec;
use crate::tolerances;
use crate::verify::{self, Suite};

#[derive(Parser)]
#[command(
    name = "qcurv",
    version,
    about = "Q-curvature of even-dimensional Riemannian metrics via holographic volume coefficients"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate Q-curvature and volume coefficients at chart points.
    Eval {
        /// Metric: a spec file path or builtin:<family>,dim=<n>[,key=value…]
        #[arg(long)]
        metric: String,
        /// Chart point as comma-separated reals; repeat for several points.
        #[arg(long, required = true)]
        point: Vec<String>,
        /// Metric jet order (defaults to the dimension's requirement).
        #[arg(long)]
        order: Option<usize>,
        /// Write the machine-readable report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run a named verification suite.
    Verify {
        /// jets | curvature | holographic | flatcase | global | all
        #[arg(long)]
        suite: String,
        /// Multiply every tolerance by this factor.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Integrate Q and v^(n) over the torus declared by the metric.
    Integrate {
        #[arg(long)]
        metric: String,
        /// Second conformally related metric for the invariance comparison.
        #[arg(long)]
        metric2: Option<String>,
        /// Lattice points per axis.
        #[arg(long)]
        grid: usize,
        /// Expected dimension (2 or 4); rejected if the metric disagrees.
        #[arg(long)]
        n: Option<usize>,
        /// Allow the order-6 pipeline on n = 6 lattices.
        #[arg(long)]
        allow_n6: bool,
        /// Override the lattice-point budget.
        #[arg(long)]
        max_points: Option<u64>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::InvalidSpec(_)
        | Error::UnknownBuiltin(_)
        | Error::UnresolvedBuiltin(_)
        | Error::UnboundParam(_)
        | Error::UnsupportedDim { .. }
        | Error::DimMismatch(..)
        | Error::Io(_) => 2,
        _ => 3,
    }
}

fn load_metric(arg: &str) -> Result<MetricSpec> {
    let spec = if arg.starts_with("builtin:") {
        models::parse_builtin_arg(arg)?
    } else {
        models::resolve(&MetricSpec::from_path(arg)?)?
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_point(src: &str, dim: usize) -> Result<Vec<f64>> {
    let coords: std::result::Result<Vec<f64>, _> =
        src.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let coords = coords.map_err(|_| Error::InvalidSpec(format!("invalid point `{src}`")))?;
    if coords.len() != dim {
        return Err(Error::DimMismatch(coords.len(), dim));
    }
    Ok(coords)
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text)?;
    Ok(())
}

pub fn run_from_env() -> i32 {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Command::Eval {
            metric,
            point,
            order,
            json,
        } => cmd_eval(&metric, &point, order, json.as_ref()),
        Command::Verify {
            suite,
            tol_scale,
            json,
        } => cmd_verify(&suite, tol_scale, json.as_ref()),
        Command::Integrate {
            metric,
            metric2,
            grid,
            n,
            allow_n6,
            max_points,
            json,
        } => cmd_integrate(
            &metric,
            metric2.as_deref(),
            grid,
            n,
            allow_n6,
            max_points,
            json.as_ref(),
        ),
    };
    match code {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn cmd_eval(
    metric: &str,
    points: &[String],
    order: Option<usize>,
    json: Option<&PathBuf>,
) -> Result<i32> {
    let start = Instant::now();
    let spec = load_metric(metric)?;
    let n = spec.dim;
    if !matches!(n, 2 | 4 | 6) {
        return Err(Error::UnsupportedDim {
            n,
            reason: "Q-curvature evaluation supports n ∈ {2, 4, 6}",
        });
    }
    let order = order.unwrap_or_else(|| holographic::default_order(n));
    if order > crate::jets::MAX_ORDER {
        return Err(Error::InvalidSpec(format!(
            "order {order} exceeds the supported maximum {}",
            crate::jets::MAX_ORDER
        )));
    }
    let mut records = Vec::new();
    let mut worst = 0.0f64;
    for src in points {
        let pt = parse_point(src, n)?;
        let bundle = CurvatureBundle::build(&spec, &pt, order)?;
        let data = holographic::evaluate(&bundle)?;
        let consistency = hybrid_residual(data.q_holographic, data.q_direct);
        worst = worst.max(consistency);
        records.push(PointRecord {
            point: pt,
            q_holographic: data.q_holographic,
            q_direct: data.q_direct,
            v: data.v,
            divergence_term: data.divergence_term,
            divergence_dual: data.divergence_dual,
            r: bundle.r().value(),
            j: bundle.j().value(),
            consistency_residual: consistency,
        });
    }
    let checks = vec![Check::new(
        "eval/q_two_routes",
        worst,
        tolerances::POINTWISE_DEFAULT,
    )];

    println!("metric: {}", spec.label);
    println!("n = {n}, jet order = {order}");
    for rec in &records {
        println!("point {:?}", rec.point);
        println!("  q_holographic = {:+.12e}", rec.q_holographic);
        println!("  q_direct      = {:+.12e}", rec.q_direct);
        let labels: Vec<String> = rec
            .v
            .iter()
            .enumerate()
            .map(|(k, v)| format!("v({}) = {v:+.9e}", 2 * k))
            .collect();
        println!("  {}", labels.join(", "));
        println!(
            "  R = {:+.9e}, J = {:+.9e}, divergence_term = {:+.9e}",
            rec.r, rec.j, rec.divergence_term
        );
    }
    let all_pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!(
            "[{}] {} residual {:.3e} (tol {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tol
        );
    }
    if let Some(path) = json {
        let report = QReport {
            version: REPORT_VERSION,
            command: "eval".into(),
            metric: spec.label.clone(),
            params: spec.params.clone(),
            n,
            order,
            summary: Summary::of(&checks),
            points: records,
            checks,
            wall_time_ms: start.elapsed().as_millis() as u64,
        };
        write_json(path, &report)?;
    }
    Ok(if all_pass { 0 } else { 1 })
}

fn cmd_verify(suite: &str, tol_scale: f64, json: Option<&PathBuf>) -> Result<i32> {
    let start = Instant::now();
    if !(tol_scale.is_finite() && tol_scale > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "tol-scale must be positive, got {tol_scale}"
        )));
    }
    let suite_id = Suite::from_name(suite)?;
    let checks = verify::run_suite(suite_id, tol_scale)?;
    for c in &checks {
        println!(
            "[{}] {} residual {:.3e} (tol {:.3e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tol
        );
    }
    let summary = Summary::of(&checks);
    println!(
        "suite {suite}: {} / {} checks passed",
        summary.passed, summary.total
    );
    let all_pass = summary.failed == 0;
    if let Some(path) = json {
        let report = SuiteReport {
            version: REPORT_VERSION,
            command: "verify".into(),
            config: serde_json::json!({ "suite": suite, "tol_scale": tol_scale }),
            checks,
            summary,
            wall_time_ms: start.elapsed().as_millis() as u64,
        };
        write_json(path, &report)?;
    }
    Ok(if all_pass { 0 } else { 1 })
}

#[allow(clippy::too_many_arguments)]
fn cmd_integrate(
    metric: &str,
    metric2: Option<&str>,
    grid: usize,
    n_expected: Option<usize>,
    allow_n6: bool,
    max_points: Option<u64>,
    json: Option<&PathBuf>,
) -> Result<i32> {
    let start = Instant::now();
    let spec = load_metric(metric)?;
    if let Some(n) = n_expected {
        if n != spec.dim {
            return Err(Error::InvalidSpec(format!(
                "--n {n} disagrees with the metric dimension {}",
                spec.dim
            )));
        }
    }
    let mut budget = Budget {
        allow_n6,
        ..Budget::default()
    };
    if let Some(mp) = max_points {
        budget.max_points = mp;
    }
    let t = quadrature::total_q(&spec, grid, &budget)?;
    let lhs = 2.0 * holographic::c_half(t.n) * t.int_q;
    let mut checks = vec![Check::new(
        "integrate/renormalized_volume_identity",
        hybrid_residual(lhs, t.int_v_top),
        tolerances::GLOBAL_IDENTITY,
    )];

    println!("metric: {}", spec.label);
    println!("n = {}, grid = {}^{} points", t.n, t.m, t.n);
    println!("  ∫ Q dv        = {:+.12e}", t.int_q);
    println!("  ∫ v^({}) dv    = {:+.12e}", t.n, t.int_v_top);
    println!("  ∫ dv (volume) = {:+.12e}", t.volume);
    println!(
        "  identity residual |2c∫Q − ∫v| = {:.3e}",
        (lhs - t.int_v_top).abs()
    );

    let mut second = None;
    if let Some(arg2) = metric2 {
        let spec2 = load_metric(arg2)?;
        if spec2.dim != spec.dim {
            return Err(Error::InvalidSpec(
                "the two metrics must share a dimension".into(),
            ));
        }
        let t2 = quadrature::total_q(&spec2, grid, &budget)?;
        println!("metric2: {}", spec2.label);
        println!("  ∫ Q dv        = {:+.12e}", t2.int_q);
        checks.push(Check::new(
            "integrate/conformal_invariance_of_total_q",
            (t.int_q - t2.int_q).abs() / t.volume.max(t2.volume),
            tolerances::GLOBAL_IDENTITY,
        ));
        second = Some(t2);
    }

    let all_pass = checks.iter().all(|c| c.pass);
    for c in &checks {
        println!(
            "[{}] {} residual {:.3e} (tol {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tol
        );
    }
    if let Some(path) = json {
        let to_json = |t: &quadrature::TotalQ| {
            serde_json::json!({
                "n": t.n,
                "m": t.m,
                "int_q": t.int_q,
                "int_v_top": t.int_v_top,
                "int_divergence": t.int_divergence,
                "int_divergence_dual": t.int_divergence_dual,
                "volume": t.volume,
            })
        };
        let summary = Summary::of(&checks);
        let report = SuiteReport {
            version: REPORT_VERSION,
            command: "integrate".into(),
            config: serde_json::json!({
                "metric": spec.label,
                "metric2": metric2,
                "grid": grid,
                "allow_n6": allow_n6,
                "integrals": to_json(&t),
                "integrals2": second.as_ref().map(to_json),
            }),
            checks,
            summary,
            wall_time_ms: start.elapsed().as_millis() as u64,
        };
        write_json(path, &report)?;
    }
    Ok(if all_pass { 0 } else { 1 })
}
