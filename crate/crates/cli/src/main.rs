//! Command-line surface for the wind-tree computations.
//!
//! Exit codes: 0 success, 1 property failure (an identity, consistency or closure
//! check reported violations), 2 input error.

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use windtree::cylinders::{
    closure_sweep, count_detailed, good_cylinder_search, lifting_consistency_check,
    CylinderRecord,
};
use windtree::dynamics::{diffusion_orbits, recurrence_returns, DiffusionReport};
use windtree::exactmath::{rat_to_f64, BigRat};
use windtree::identities::verify_identities;
use windtree::surface::{parse_table, WindTreeTable};
use windtree::sv_constants::constants_bundle;

#[derive(Parser)]
#[command(name = "windtree", version, about = "Wind-tree billiards: exact constants, cylinder counting and flow experiments")]
struct Cli {
    /// Cap on worker threads (default: WINDTREE_THREADS env or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Exact counting constants and diffusion rate for obstacle class m.
    Constants {
        #[arg(long)]
        m: u32,
        /// Print every class from 1 to m.
        #[arg(long)]
        max: bool,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Verify the combinatorial identities for all m up to a bound.
    Identities {
        #[arg(long = "m-max", default_value_t = 60)]
        m_max: u32,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Count and classify cylinders of length at most L.
    Count {
        #[arg(long)]
        table: Option<PathBuf>,
        /// Inline generator, e.g. "square 1/2 1/2" or "plus".
        #[arg(long = "gen")]
        generator: Option<String>,
        #[arg(long)]
        l: String,
        /// Write one CSV row per cylinder to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Estimate the polynomial diffusion rate.
    Diffuse {
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long = "gen")]
        generator: Option<String>,
        #[arg(long = "t-max", default_value_t = 1e6)]
        t_max: f64,
        #[arg(long, default_value_t = 100)]
        n: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write one CSV row per orbit (direction, slope, samples).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Measure the fraction of orbits returning near their start.
    Recur {
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long = "gen")]
        generator: Option<String>,
        #[arg(long = "t-max", default_value_t = 1e6)]
        t_max: f64,
        #[arg(long, default_value_t = 200)]
        n: u32,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write one CSV row per orbit (returned, first return time).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Run the lifting-consistency suite and the billiard closure oracle.
    Check {
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long = "gen")]
        generator: Option<String>,
        #[arg(long)]
        l: String,
    },
    /// Scan directions for a good cylinder.
    Search {
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long = "gen")]
        generator: Option<String>,
        #[arg(long = "p-max", default_value_t = 8)]
        p_max: i64,
    },
}

fn main() -> ExitCode {
    // die quietly when the consumer closes the pipe (e.g. `windtree ... | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("WINDTREE_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon_pool(n);
    }
}

fn rayon_pool(n: usize) -> Result<(), String> {
    windtree::build_thread_pool(n).map_err(|e| e.to_string())
}

fn run(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Constants { m, max, format } => cmd_constants(m, max, format),
        Command::Identities { m_max, format } => cmd_identities(m_max, format),
        Command::Count { table, generator, l, csv, format } => {
            let table = load_table(table, generator)?;
            let l = parse_rat(&l)?;
            cmd_count(&table, &l, csv, format)
        }
        Command::Diffuse { table, generator, t_max, n, seed, csv, format } => {
            let table = load_table(table, generator)?;
            if n == 0 {
                return Err("--n must be at least 1".into());
            }
            let (orbits, singular_resamples) = diffusion_orbits(&table, n, t_max, seed);
            let slopes: Vec<f64> = orbits.iter().map(|o| o.slope).collect();
            let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
            let var = slopes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                / (slopes.len() as f64 - 1.0).max(1.0);
            let report = DiffusionReport {
                m: table.m(),
                n_directions: n,
                t_max,
                seed,
                slopes,
                mean_slope: mean,
                stderr: (var / n as f64).sqrt(),
                singular_resamples,
            };
            if let Some(path) = csv {
                let mut out = String::from("orbit,theta,slope,samples_t_d
");
                for (i, o) in orbits.iter().enumerate() {
                    let samples: Vec<String> =
                        o.samples.iter().map(|(t, d)| format!("{t:.6e}:{d:.6e}")).collect();
                    let _ = writeln!(out, "{i},{},{},{}", o.theta, o.slope, samples.join(";"));
                }
                std::fs::write(&path, out).map_err(|e| format!("writing {}: {e}", path.display()))?;
            }
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report).unwrap()),
                _ => {
                    println!(
                        "diffusion m={} orbits={} t_max={:e} seed={}",
                        report.m, report.n_directions, report.t_max, report.seed
                    );
                    println!(
                        "mean_slope {:.4}  stderr {:.4}  (resampled {} singular orbits)",
                        report.mean_slope, report.stderr, report.singular_resamples
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Recur { table, generator, t_max, n, eps, seed, csv, format } => {
            let table = load_table(table, generator)?;
            if n == 0 {
                return Err("--n must be at least 1".into());
            }
            if eps <= 0.0 {
                return Err("--eps must be positive".into());
            }
            let returns = recurrence_returns(&table, n, t_max, eps, seed);
            if let Some(path) = csv {
                let mut out = String::from("orbit,returned,t_return
");
                for (i, r) in returns.iter().enumerate() {
                    match r {
                        Some(t) => {
                            let _ = writeln!(out, "{i},true,{t}");
                        }
                        None => {
                            let _ = writeln!(out, "{i},false,");
                        }
                    }
                }
                std::fs::write(&path, out).map_err(|e| format!("writing {}: {e}", path.display()))?;
            }
            let fraction = returns.iter().filter(|r| r.is_some()).count() as f64 / n as f64;
            match format {
                Format::Json => println!(
                    "{}",
                    serde_json::json!({
                        "m": table.m(),
                        "n_orbits": n,
                        "t_max": t_max,
                        "eps": eps,
                        "seed": seed,
                        "fraction": fraction,
                    })
                ),
                _ => println!(
                    "recurrence m={} orbits={n} t_max={t_max:e} eps={eps} seed={seed}: fraction {fraction:.4}",
                    table.m()
                ),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { table, generator, l } => {
            let table = load_table(table, generator)?;
            let l = parse_rat(&l)?;
            let mut violations = lifting_consistency_check(&table, &l).map_err(|e| e.to_string())?;
            let (checked, closure_violations) = closure_sweep(&table, &l).map_err(|e| e.to_string())?;
            violations.extend(closure_violations);
            if violations.is_empty() {
                println!(
                    "check passed: lifting consistency and closure oracle clean up to L = {} ({checked} cylinders)",
                    l
                );
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
                println!("check failed: {} violations", violations.len());
                Ok(ExitCode::from(1))
            }
        }
        Command::Search { table, generator, p_max } => {
            let table = load_table(table, generator)?;
            match good_cylinder_search(&table, p_max) {
                Ok(rec) => {
                    println!(
                        "good cylinder: direction {} width {} length {:.4} profile {} pocket_like {}",
                        rec.direction,
                        rec.width,
                        rec.holonomy_length,
                        rec.profile.map(|p| p.to_string()).unwrap_or_default(),
                        rec.deck_orbit.map(|o| o.pocket_like).unwrap_or(false),
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    println!("{e}");
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

#[derive(Serialize)]
struct BundleView {
    m: u32,
    delta: String,
    delta_float: f64,
    c: String,
    c_float: f64,
    c_area: String,
    c_area_float: f64,
    c_good: String,
    c_pocket_good: String,
    c_dumbbell_good: String,
}

fn cmd_constants(m: u32, max: bool, format: Format) -> Result<ExitCode, String> {
    if m < 1 {
        return Err("--m must be at least 1".into());
    }
    let range = if max { 1..=m } else { m..=m };
    let mut views = Vec::new();
    for k in range {
        let b = constants_bundle(k).map_err(|e| e.to_string())?;
        views.push(BundleView {
            m: k,
            delta: b.delta.to_string(),
            delta_float: rat_to_f64(&b.delta),
            c: format!("{}", b.c_main),
            c_float: b.c_main.eval(),
            c_area: format!("{}", b.c_area_main),
            c_area_float: b.c_area_main.eval(),
            c_good: format!("{}", b.c_good),
            c_pocket_good: format!("{}", b.c_pocket_good),
            c_dumbbell_good: format!("{}", b.c_dumbbell_good),
        });
    }
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&views).unwrap()),
        Format::Csv => {
            println!("m,delta,delta_float,c,c_float,c_area,c_area_float");
            for v in views {
                println!(
                    "{},{},{},{},{},{},{}",
                    v.m, v.delta, v.delta_float, v.c, v.c_float, v.c_area, v.c_area_float
                );
            }
        }
        Format::Text => {
            for v in views {
                println!("m = {}", v.m);
                println!("  delta   = {}  ~ {:.6}", v.delta, v.delta_float);
                println!("  c       = {}  ~ {:.6}", v.c, v.c_float);
                println!("  c_area  = {}  ~ {:.6}", v.c_area, v.c_area_float);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_identities(m_max: u32, format: Format) -> Result<ExitCode, String> {
    if m_max < 1 {
        return Err("--m-max must be at least 1".into());
    }
    let reports = verify_identities(m_max);
    let all_ok = reports.iter().all(|r| r.equal);
    match format {
        Format::Json => {
            let rows: Vec<_> = reports
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "m": r.m, "s": r.s,
                        "direct": r.direct.to_string(),
                        "closed": r.closed.to_string(),
                        "equal": r.equal,
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows).unwrap());
        }
        _ => {
            let failures: Vec<_> = reports.iter().filter(|r| !r.equal).collect();
            println!(
                "identities: {} pairs checked up to m = {m_max}, {} failures",
                reports.len(),
                failures.len()
            );
            for r in failures {
                println!("  FAIL m={} s={}: direct {} vs closed {}", r.m, r.s, r.direct, r.closed);
            }
        }
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_count(
    table: &WindTreeTable,
    l: &BigRat,
    csv: Option<PathBuf>,
    format: Format,
) -> Result<ExitCode, String> {
    let (report, records) = count_detailed(table, l).map_err(|e| e.to_string())?;
    if let Some(path) = csv {
        let mut out = String::new();
        out.push_str("p,q,width,height,length,class,r_h,r_v,n_x,b,s,pocket_like\n");
        for r in &records {
            let _ = writeln!(out, "{}", record_csv_row(r));
        }
        std::fs::write(&path, out).map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report).unwrap()),
        Format::Csv => {
            println!("l,n_all,n_closed,n_good,n_bad,n_area_closed,n_area_good");
            for b in &report.buckets {
                println!(
                    "{},{},{},{},{},{},{}",
                    b.l,
                    b.n_all,
                    b.n_closed,
                    b.n_good,
                    b.n_bad,
                    b.area_closed_num as f64 / report.surface_squares as f64,
                    b.area_good_num as f64 / report.surface_squares as f64
                );
            }
        }
        Format::Text => {
            let total = report.total().copied().unwrap_or_default();
            println!("count up to L = {} (cell units)", report.l_max);
            println!(
                "  N_all {}  N_closed {}  N_good {}  N_bad {}",
                total.n_all, total.n_closed, total.n_good, total.n_bad
            );
            println!(
                "  N_area(closed) {:.6}  N_area(good) {:.6}",
                total.area_closed_num as f64 / report.surface_squares as f64,
                total.area_good_num as f64 / report.surface_squares as f64
            );
            for ((rh, rv), c) in &report.profile_good {
                println!("  good profile ({rh},{rv}): {c}");
            }
            println!(
                "  pocket-like good {}  non-pocket-like good {}",
                report.pocket_like_good, report.non_pocket_like_good
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn record_csv_row(r: &CylinderRecord) -> String {
    let (rh, rv) = r.profile.map_or((String::new(), String::new()), |p| {
        (p.r_h.to_string(), p.r_v.to_string())
    });
    let (nx, b, s, pl) = r.deck_orbit.map_or(
        (String::new(), String::new(), String::new(), String::new()),
        |o| (o.n_x.to_string(), o.b.to_string(), o.s.to_string(), o.pocket_like.to_string()),
    );
    format!(
        "{},{},{},{},{},{:?},{},{},{},{},{},{}",
        r.direction.p,
        r.direction.q,
        r.width,
        r.height,
        r.holonomy_length,
        r.classification,
        rh,
        rv,
        nx,
        b,
        s,
        pl
    )
}

fn load_table(path: Option<PathBuf>, generator: Option<String>) -> Result<WindTreeTable, String> {
    match (path, generator) {
        (Some(p), None) => {
            let text = std::fs::read_to_string(&p).map_err(|e| format!("reading {}: {e}", p.display()))?;
            parse_table(&text).map_err(|e| e.to_string())
        }
        (None, Some(g)) => parse_table(&g).map_err(|e| e.to_string()),
        (None, None) => Err("one of --table or --gen is required".into()),
        (Some(_), Some(_)) => Err("--table and --gen are mutually exclusive".into()),
    }
}

fn parse_rat(s: &str) -> Result<BigRat, String> {
    windtree::exactmath::parse_rat(s).ok_or_else(|| format!("cannot parse {s:?} as a rational"))
}
