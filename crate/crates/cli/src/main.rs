//! Command-line runner: verification suite, curvature classifier, builtin
//! registry and a one-shot expression evaluator.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cartan_lab::builtins::{find as find_builtin, BUILTINS};
use cartan_lab::expr::PhasePoint;
use cartan_lab::metric::MetricKind;
use cartan_lab::report::{RunConfig, Verdict};
use cartan_lab::suite::{run_suite_with_threads, ALL_CHECKS};

#[derive(Parser)]
#[command(
    name = "cartan-lab",
    about = "Numeric verification of Cartan-metric geometry on the cotangent bundle",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// the metric function K itself
    K,
    /// K squared
    K2,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Parser)]
struct MetricArgs {
    /// Path to a file holding a metric expression in the DSL
    #[arg(long, conflicts_with = "builtin")]
    metric: Option<PathBuf>,

    /// Name of a built-in metric (see `list-builtins`)
    #[arg(long)]
    builtin: Option<String>,

    /// Dimension n (variables x1..xn, p1..pn)
    #[arg(long)]
    dim: Option<usize>,

    /// Whether the expression is K or K^2
    #[arg(long, value_enum)]
    kind: Option<KindArg>,

    /// Sample-point count
    #[arg(long)]
    points: Option<usize>,

    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,

    /// Comma-separated K-levels for the level-set checks
    #[arg(long)]
    shells: Option<String>,

    /// Comma-separated check ids (default: all)
    #[arg(long)]
    checks: Option<String>,

    /// Coordinate sampling box: "lo,hi;lo,hi;..." per coordinate
    #[arg(long = "box", allow_hyphen_values = true)]
    coordinate_box: Option<String>,

    /// JSON config file mirroring the run configuration; flags override it
    #[arg(long)]
    config: Option<PathBuf>,

    /// Re-run frame-dependent checks with a second admissible frame
    #[arg(long)]
    alternate_frame: bool,

    /// Cap worker threads (also via CARTAN_LAB_THREADS)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification suite and write a report
    Verify {
        #[command(flatten)]
        metric: MetricArgs,

        /// Report path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,

        /// json (default) or csv; overrides a config-file value
        #[arg(long, value_enum)]
        format: Option<FormatArg>,

        /// Embed wall-clock timing in the report (breaks byte-level
        /// reproducibility between runs)
        #[arg(long)]
        timing: bool,
    },
    /// Run only the constant-curvature classifier
    ClassifyCurvature {
        #[command(flatten)]
        metric: MetricArgs,
    },
    /// List built-in metrics with their expected classifier outcomes
    ListBuiltins,
    /// Evaluate a DSL expression at a phase point
    Eval {
        /// Expression text, e.g. "x2^2*(p1^2+p2^2)"
        #[arg(long)]
        expr: String,
        #[arg(long)]
        dim: usize,
        /// Point in the form "x=0,1;p=1,0"
        #[arg(long)]
        at: String,
    },
}

fn parse_point(at: &str, dim: usize) -> Result<PhasePoint> {
    let mut x: Option<Vec<f64>> = None;
    let mut p: Option<Vec<f64>> = None;
    for part in at.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, vals) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("expected 'x=...' or 'p=...' in --at, got '{part}'"))?;
        let parsed: Vec<f64> = vals
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| anyhow!("bad number '{v}': {e}")))
            .collect::<Result<_>>()?;
        if parsed.len() != dim {
            bail!("{} needs {dim} components, got {}", key.trim(), parsed.len());
        }
        match key.trim() {
            "x" => x = Some(parsed),
            "p" => p = Some(parsed),
            other => bail!("unknown point component '{other}'"),
        }
    }
    let x = x.unwrap_or_else(|| vec![0.0; dim]);
    let p = p.ok_or_else(|| anyhow!("--at must set the momenta, e.g. p=1,0"))?;
    Ok(PhasePoint::new(x, p)?)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| anyhow!("bad number '{v}': {e}")))
        .collect()
}

fn parse_box(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(';')
        .map(|pair| {
            let vals = parse_list(pair)?;
            if vals.len() != 2 || vals[0] >= vals[1] {
                bail!("box entry '{pair}' must be 'lo,hi' with lo < hi");
            }
            Ok((vals[0], vals[1]))
        })
        .collect()
}

/// Extra keys a config file may carry beyond the run configuration.
#[derive(Default)]
struct FileExtras {
    output: Option<PathBuf>,
    format: Option<String>,
}

impl FileExtras {
    fn from_json(text: &str) -> Self {
        let v: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(_) => return FileExtras::default(),
        };
        FileExtras {
            output: v.get("output").and_then(|o| o.as_str()).map(PathBuf::from),
            format: v.get("format").and_then(|f| f.as_str()).map(str::to_string),
        }
    }
}

fn build_config(args: &MetricArgs) -> Result<(RunConfig, FileExtras)> {
    let (mut cfg, extras): (RunConfig, FileExtras) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let cfg = serde_json::from_str(&text).with_context(|| "parsing config file")?;
            let extras = FileExtras::from_json(&text);
            (cfg, extras)
        }
        None => (RunConfig::default(), FileExtras::default()),
    };

    if let Some(name) = &args.builtin {
        let b = find_builtin(name, args.dim)
            .ok_or_else(|| anyhow!("unknown builtin '{name}'; see list-builtins"))?;
        cfg.metric = b.name.into();
        cfg.builtin = true;
        cfg.dim = b.dim;
        cfg.kind = b.kind;
        cfg.coordinate_box = b.coordinate_box.to_vec();
    } else if let Some(path) = &args.metric {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading metric {}", path.display()))?;
        cfg.metric = text.trim().to_string();
        cfg.builtin = false;
        if let Some(d) = args.dim {
            cfg.dim = d;
            if cfg.coordinate_box.len() != d {
                cfg.coordinate_box = vec![(-1.0, 1.0); d];
            }
        }
    } else if args.config.is_none() {
        bail!("one of --metric FILE or --builtin NAME (or --config) is required");
    }

    if let Some(k) = args.kind {
        cfg.kind = match k {
            KindArg::K => MetricKind::K,
            KindArg::K2 => MetricKind::KSquared,
        };
    }
    if let Some(p) = args.points {
        cfg.num_points = p;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(shells) = &args.shells {
        cfg.shells = parse_list(shells)?;
    }
    if let Some(bx) = &args.coordinate_box {
        cfg.coordinate_box = parse_box(bx)?;
    }
    if let Some(list) = &args.checks {
        cfg.checks = list.split(',').map(|c| c.trim().to_string()).collect();
        for c in &cfg.checks {
            if !ALL_CHECKS.contains(&c.as_str()) {
                bail!("unknown check id '{c}'; known: {}", ALL_CHECKS.join(", "));
            }
        }
    }
    if args.alternate_frame {
        cfg.alternate_frame = true;
    }
    Ok((cfg, extras))
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Verify { metric, out, format, timing } => {
            let (cfg, extras) = build_config(&metric)?;
            let start = std::time::Instant::now();
            let mut report = run_suite_with_threads(&cfg, metric.threads)?;
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            if timing {
                report.timing_ms = Some(elapsed_ms);
            }
            // precedence: explicit flag, then config file, then JSON
            let format = format.unwrap_or(match extras.format.as_deref() {
                Some("csv") => FormatArg::Csv,
                _ => FormatArg::Json,
            });
            let out = out.or(extras.output);
            let body = match format {
                FormatArg::Json => report.to_json(),
                FormatArg::Csv => report.to_csv(),
            };
            match out {
                Some(path) => std::fs::write(&path, &body)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{body}"),
            }
            eprintln!(
                "{}: {} checks, summary {:?}, {:.0} ms",
                cfg.metric,
                report.checks.len(),
                report.summary.verdict,
                elapsed_ms
            );
            let ok = match report.summary.expected_match {
                Some(m) => m,
                None => report.summary.verdict == Verdict::Pass,
            };
            Ok(if ok { 0 } else { 1 })
        }
        Command::ClassifyCurvature { metric } => {
            let (mut cfg, _) = build_config(&metric)?;
            cfg.checks = vec!["classify-curvature".into()];
            if cfg.num_points < 25 {
                cfg.num_points = 25;
            }
            let report = run_suite_with_threads(&cfg, metric.threads)?;
            match &report.curvature_fit {
                Some(fit) => {
                    println!("{}", serde_json::to_string_pretty(fit)?);
                    Ok(0)
                }
                None => {
                    eprintln!("classifier did not run; see report checks");
                    Ok(1)
                }
            }
        }
        Command::ListBuiltins => {
            println!(
                "{:<22} {:>3}  {:<9} {:<34} {:>9}  note",
                "name", "dim", "kind", "expression", "fit"
            );
            for b in BUILTINS {
                let kind = match b.kind {
                    MetricKind::K => "K",
                    MetricKind::KSquared => "K-squared",
                };
                println!(
                    "{:<22} {:>3}  {:<9} {:<34} {:>9.3}  {}",
                    b.name, b.dim, kind, b.text, b.expected_c_hat, b.note
                );
            }
            Ok(0)
        }
        Command::Eval { expr, dim, at } => {
            let pt = parse_point(&at, dim)?;
            let v = cartan_lab::metric::eval_expr(&expr, dim, &pt)?;
            println!("{v}");
            Ok(0)
        }
    }
}
