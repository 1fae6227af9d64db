//! Command-line front end: preset inspection, harmonic extension and
//! Poisson solves as CSV, derivative reports at a vertex, and the
//! experiment scenario runner. Output carries no timestamps, so equal
//! invocations produce equal bytes.

mod funcs;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fractal_calc::calculus::{self, GridFunction, SolveMethod};
use fractal_calc::derivatives::{self, DerivativeEstimate};
use fractal_calc::experiments::{self, ScenarioConfig, SCENARIOS};
use fractal_calc::structure::{self, Context};
use fractal_calc::topology::{SpecDoc, VertexClass, PRESET_NAMES};
use fractal_calc::{Rational, Scalar};

use funcs::{parse_fn, FnSpec};
use plot::Embedding;

fn main() {
    // Die quietly when a pipe reader hangs up instead of panicking.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(run());
}

/// Instantiate a generic command at the scalar the mode flag selects.
macro_rules! dispatch {
    ($mode:expr, $f:ident, $a:expr) => {
        match $mode {
            Mode::Float => $f::<f64>($a),
            Mode::Rational => $f::<Rational>($a),
        }
    };
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Cmd::Info(a) => dispatch!(a.mode, cmd_info, &a),
        Cmd::Validate(a) => dispatch!(a.mode, cmd_validate, &a),
        Cmd::Eig(a) => dispatch!(a.mode, cmd_eig, &a),
        Cmd::Extend(a) => dispatch!(a.mode, cmd_extend, &a),
        Cmd::Solve(a) => dispatch!(a.mode, cmd_solve, &a),
        Cmd::Derivative(a) => dispatch!(a.mode, cmd_derivative, &a),
        Cmd::Tangent(a) => dispatch!(a.mode, cmd_tangent, &a),
        Cmd::Experiment(a) => cmd_experiment(&a),
    }
}

/// Numerical calculus on post-critically finite self-similar sets.
#[derive(Parser)]
#[command(name = "fractal-calc", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Float,
    Rational,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Float => "float",
            Mode::Rational => "rational",
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Summarize a preset or spec file: maps, weights, junctions
    Info(TargetArgs),
    /// Run the structural checks and report residuals
    Validate(TargetArgs),
    /// Extension-matrix spectrum at each boundary corner, as JSON
    Eig(TargetArgs),
    /// Sample the harmonic extension of boundary data, as CSV
    Extend(GridArgs),
    /// Solve the Poisson problem with zero boundary data, as CSV
    Solve(GridArgs),
    /// Derivative approximant sequences at a vertex
    Derivative(DerivArgs),
    /// Gradient, junction compatibility, and weak tangent at a vertex
    Tangent(TangentArgs),
    /// Run an experiment scenario and print its report
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// Preset name or path to a fractal spec file
    target: String,
    #[arg(long, value_enum, default_value_t = Mode::Float)]
    mode: Mode,
}

#[derive(Args)]
struct GridArgs {
    /// Preset name or path to a fractal spec file
    target: String,
    /// Function to realize: zero | harmonic:a,b,... | hjk:j,k | poisson:const=c
    #[arg(long = "fn")]
    func: String,
    /// Vertex depth of the output grid
    #[arg(short = 'm', long, default_value_t = 4)]
    level: usize,
    #[arg(long, value_enum, default_value_t = Mode::Float)]
    mode: Mode,
    /// Directory for output files; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG rendering (needs --out and embedded coordinates)
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct DerivArgs {
    /// Preset name or path to a fractal spec file
    target: String,
    /// Function to differentiate: zero | harmonic:a,b,... | hjk:j,k | poisson:const=c
    #[arg(long = "fn")]
    func: String,
    /// Vertex address "word:corner", e.g. ":1" or "112:2"
    #[arg(long)]
    vertex: String,
    /// Single derivative mode in 2..=n0; all modes when absent
    #[arg(long)]
    k: Option<usize>,
    /// Deepest approximant index
    #[arg(long, default_value_t = 8)]
    max_m: usize,
    #[arg(long, value_enum, default_value_t = Mode::Float)]
    mode: Mode,
}

#[derive(Args)]
struct TangentArgs {
    /// Preset name or path to a fractal spec file
    target: String,
    /// Function to linearize: zero | harmonic:a,b,... | hjk:j,k | poisson:const=c
    #[arg(long = "fn")]
    func: String,
    /// Vertex address "word:corner"
    #[arg(long)]
    vertex: String,
    /// Deepest approximant index
    #[arg(long, default_value_t = 8)]
    max_m: usize,
    #[arg(long, value_enum, default_value_t = Mode::Float)]
    mode: Mode,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Scenario id, e.g. thm1.4 or vicsek
    id: String,
    /// Preset the scenario runs on; scenarios with a fixed preset ignore it
    #[arg(long, default_value = "sg")]
    preset: String,
    /// Largest cell depth
    #[arg(long)]
    max_m: Option<usize>,
    /// Scenario parameter overrides: corner=j, l-max=n, asymmetry=c, eta=x
    #[arg(long = "param")]
    params: Vec<String>,
    /// Directory for report, CSV, and plot files
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one SVG log-plot per series (needs --out)
    #[arg(long)]
    plot: bool,
}

fn usage(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    eprintln!("run with --help for usage");
    2
}

fn failure(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    1
}

fn load_doc(target: &str) -> Result<SpecDoc, i32> {
    let path = Path::new(target);
    if path.exists() {
        SpecDoc::from_path(path).map_err(|e| usage(format_args!("{target}: {e}")))
    } else {
        SpecDoc::preset(target).map_err(usage)
    }
}

fn context<S: Scalar>(target: &str) -> Result<Context<S>, i32> {
    let doc = load_doc(target)?;
    Context::from_doc(&doc).map_err(|e| failure(e))
}

/// Exact scalars print exactly; floats round to 13 significant digits.
fn fmt_scalar<S: Scalar>(v: &S) -> String {
    if S::EXACT {
        format!("{v}")
    } else {
        format!("{:e}", round12(v.to_f64()))
    }
}

fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.12e}").parse().unwrap_or(x)
}

fn scalar_json<S: Scalar>(v: &S) -> Value {
    if S::EXACT {
        Value::String(v.to_string())
    } else {
        json!(round12(v.to_f64()))
    }
}

fn cmd_info<S: Scalar>(a: &TargetArgs) -> i32 {
    let ctx: Context<S> = match context(&a.target) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let spec = &ctx.spec;
    println!("fractal {}", spec.name);
    println!("maps {}", spec.n_maps);
    println!("boundary corners {}", spec.n0);
    for i in 0..spec.n0 {
        for j in i + 1..spec.n0 {
            if !ctx.hs.c[(i, j)].is_zero() {
                println!("conductance {}-{} {}", i + 1, j + 1, fmt_scalar(&ctx.hs.c[(i, j)]));
            }
        }
    }
    let join = |xs: &[S]| {
        xs.iter().map(|x| fmt_scalar(x)).collect::<Vec<_>>().join(", ")
    };
    println!("weights r [{}]", join(&ctx.hs.r));
    println!("measure mu [{}]", join(&ctx.hs.mu));
    let sizes: Vec<String> = (0..=3)
        .map(|m| format!("|V_{}| {}", m, spec.vertex_set(m).len()))
        .collect();
    println!("vertices {}", sizes.join(" "));
    for v in spec.vertex_set(1) {
        if let VertexClass::Junction { prefix, pairs } = spec.classify(&v) {
            let addrs: Vec<String> = pairs
                .iter()
                .map(|&(j, jp)| format!("{}{}:{}", prefix, j + 1, jp + 1))
                .collect();
            println!("junction {}", addrs.join(" = "));
        }
    }
    println!("degenerate {}", ctx.is_degenerate());
    0
}

fn cmd_validate<S: Scalar>(a: &TargetArgs) -> i32 {
    let ctx: Context<S> = match context(&a.target) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let report = structure::validate(&ctx);
    println!("fractal {}", report.fractal);
    for c in &report.checks {
        let tag = if c.passed { "pass" } else { "FAIL" };
        if c.note.is_empty() {
            println!("[{}] {} residual {:.3e}", tag, c.name, c.residual);
        } else {
            println!("[{}] {} residual {:.3e} ({})", tag, c.name, c.residual, c.note);
        }
    }
    println!("result {}", if report.passed { "PASS" } else { "FAIL" });
    if report.passed {
        0
    } else {
        1
    }
}

fn cmd_eig<S: Scalar>(a: &TargetArgs) -> i32 {
    let ctx: Context<S> = match context(&a.target) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let eig = match ctx.eig() {
        Ok(e) => e,
        Err(e) => return failure(e),
    };
    let corners: Vec<Value> = (0..ctx.n0())
        .map(|j| {
            let modes = &eig.per_corner[j];
            let lambda: Vec<Value> = modes.iter().map(|m| scalar_json(&m.lambda)).collect();
            let detail: Vec<Value> = modes
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    json!({
                        "k": i + 1,
                        "lambda": scalar_json(&m.lambda),
                        "alpha": m.alpha.iter().map(scalar_json).collect::<Vec<_>>(),
                        "beta": m.beta.iter().map(scalar_json).collect::<Vec<_>>(),
                    })
                })
                .collect();
            json!({"corner": j + 1, "lambda": lambda, "modes": detail})
        })
        .collect();
    let out = json!({
        "fractal": ctx.spec.name,
        "mode": a.mode.name(),
        "corners": corners,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
    0
}

fn grid_budget<S: Scalar>(level: usize, solve: bool) -> Option<i32> {
    let cap = match (S::EXACT, solve) {
        (false, false) => 10,
        (false, true) => 8,
        (true, false) => 8,
        (true, true) => 5,
    };
    (level > cap).then(|| {
        usage(format_args!("depth {level} exceeds the budget {cap} for this mode"))
    })
}

fn cmd_extend<S: Scalar>(a: &GridArgs) -> i32 {
    if a.plot && a.out.is_none() {
        return usage("--plot needs --out");
    }
    if let Some(code) = grid_budget::<S>(a.level, false) {
        return code;
    }
    let ctx: Context<S> = match context(&a.target) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let spec = match parse_fn::<S>(&a.func, ctx.n0()) {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    if spec.is_load() {
        return usage("extend interpolates boundary data; use `solve` for poisson loads");
    }
    let boundary = match spec.boundary(&ctx) {
        Ok(b) => b.expect("harmonic class has boundary data"),
        Err(e) => return failure(e),
    };
    let grid = calculus::harmonic_extend(&ctx, &boundary, a.level);
    emit_grid(&ctx, &grid, a, "extend")
}

fn cmd_solve<S: Scalar>(a: &GridArgs) -> i32 {
    if a.plot && a.out.is_none() {
        return usage("--plot needs --out");
    }
    if let Some(code) = grid_budget::<S>(a.level, true) {
        return code;
    }
    let ctx: Context<S> = match context(&a.target) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let load = match parse_fn::<S>(&a.func, ctx.n0()) {
        Ok(FnSpec::Poisson(c)) => calculus::PiecewiseHarmonic::constant(&ctx, &c),
        Ok(_) => return usage("solve expects a load; give --fn poisson:const=<value> (use `extend` for boundary data)"),
        Err(e) => return usage(e),
    };
    let zeros = vec![S::zero(); ctx.n0()];
    let grid = match calculus::solve_poisson(&ctx, a.level, &zeros, &load, SolveMethod::Auto) {
        Ok(g) => g,
        Err(e) => return failure(e),
    };
    emit_grid(&ctx, &grid, a, "solve")
}

fn emit_grid<S: Scalar>(ctx: &Context<S>, grid: &GridFunction<S>, a: &GridArgs, stem: &str) -> i32 {
    let mut csv = Vec::new();
    if let Err(e) = calculus::write_grid_csv(grid, &mut csv) {
        return failure(e);
    }
    let Some(dir) = &a.out else {
        print!("{}", String::from_utf8(csv).expect("csv is ascii"));
        return 0;
    };
    if let Err(e) = fs::create_dir_all(dir) {
        return failure(format_args!("{}: {e}", dir.display()));
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    if let Err(e) = fs::write(&csv_path, &csv) {
        return failure(format_args!("{}: {e}", csv_path.display()));
    }
    println!("wrote {}", csv_path.display());
    if a.plot {
        match plot::embedding(&ctx.spec.name) {
            Some(emb) => {
                let svg = grid_svg(ctx, grid, &emb);
                let svg_path = dir.join(format!("{stem}.svg"));
                if let Err(e) = fs::write(&svg_path, svg) {
                    return failure(format_args!("{}: {e}", svg_path.display()));
                }
                println!("wrote {}", svg_path.display());
            }
            None => eprintln!("note: {} ships no coordinates, skipping the plot", ctx.spec.name),
        }
    }
    0
}

fn grid_svg<S: Scalar>(ctx: &Context<S>, grid: &GridFunction<S>, emb: &Embedding) -> String {
    let mut pairs = Vec::new();
    for i in 0..ctx.n0() {
        for j in i + 1..ctx.n0() {
            if !ctx.hs.c[(i, j)].is_zero() {
                pairs.push((i as u8, j as u8));
            }
        }
    }
    let mut edges = Vec::new();
    for w in ctx.spec.words(grid.level) {
        for &(i, j) in &pairs {
            let a = ctx.spec.canonical_vertex(&w.0, i).expect("corner in range");
            let b = ctx.spec.canonical_vertex(&w.0, j).expect("corner in range");
            edges.push((
                emb.position(&a.word.0, a.corner as usize),
                emb.position(&b.word.0, b.corner as usize),
            ));
        }
    }
    let points: Vec<((f64, f64), f64, String)> = grid
        .values
        .iter()
        .map(|(v, y)| {
            (
                emb.position(&v.word.0, v.corner as usize),
                y.to_f64(),
                v.to_string(),
            )
        })
        .collect();
    plot::vertex_svg(grid.level, &points, &edges)
}

fn estimate_lines<S: Scalar>(est: &DerivativeEstimate<S>, with_table: bool) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "side {}:{} k {}",
        est.side.cell,
        est.side.corner + 1,
        est.k
    );
    if with_table {
        for (m, v) in est.approximants.iter().enumerate() {
            let _ = writeln!(out, "  m {} {}", m, fmt_scalar(v));
        }
    }
    let _ = writeln!(
        out,
        "  limit {} ratio {} converged {}",
        fmt_scalar(&est.limit),
        est.ratio,
        est.converged
    );
    out
}

fn cmd_derivative<S: Scalar>(a: &DerivArgs) -> i32 {
    if a.max_m > 12 {
        return usage(format_args!("max-m {} exceeds the budget 12", a.max_m));
    }
    let ctx: Context<S> = match context(&a.target) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let x = match ctx.spec.parse_vertex(&a.vertex) {
        Ok(x) => x,
        Err(e) => return usage(e),
    };
    let ks: Vec<usize> = match a.k {
        Some(k) if (2..=ctx.n0()).contains(&k) => vec![k],
        Some(k) => return usage(format_args!("k must lie in 2..={}, got {k}", ctx.n0())),
        None => (2..=ctx.n0()).collect(),
    };
    let spec = match parse_fn::<S>(&a.func, ctx.n0()) {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    let sampler = match spec.sampler(&ctx) {
        Ok(s) => s,
        Err(e) => return failure(e),
    };
    println!("fractal {}", ctx.spec.name);
    println!("function {}", a.func);
    println!("vertex {x}");
    println!("convention {}", derivatives::SIGN_NOTE);
    for side in ctx.spec.sides(&x) {
        for &k in &ks {
            let est = match derivatives::derivative_sequence(&ctx, &sampler, &side, k, a.max_m) {
                Ok(e) => e,
                Err(e) => return failure(e),
            };
            print!("{}", estimate_lines(&est, true));
        }
    }
    0
}

fn cmd_tangent<S: Scalar>(a: &TangentArgs) -> i32 {
    if a.max_m > 12 {
        return usage(format_args!("max-m {} exceeds the budget 12", a.max_m));
    }
    let ctx: Context<S> = match context(&a.target) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let x = match ctx.spec.parse_vertex(&a.vertex) {
        Ok(x) => x,
        Err(e) => return usage(e),
    };
    let spec = match parse_fn::<S>(&a.func, ctx.n0()) {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    let sampler = match spec.sampler(&ctx) {
        Ok(s) => s,
        Err(e) => return failure(e),
    };
    use fractal_calc::derivatives::VertexFn;
    let fx = match sampler.sample(&ctx, &x) {
        Ok(v) => v,
        Err(e) => return failure(e),
    };
    let grad = match derivatives::gradient(&ctx, &sampler, &x, a.max_m) {
        Ok(g) => g,
        Err(e) => return failure(e),
    };
    println!("fractal {}", ctx.spec.name);
    println!("function {}", a.func);
    println!("vertex {x}");
    println!("value {}", fmt_scalar(&fx));
    for est in &grad.entries {
        print!("{}", estimate_lines(est, false));
    }
    if let Some(c) = &grad.compatibility {
        println!("compatibility {}", fmt_scalar(c));
    }
    println!("differentiable {}", grad.differentiable);
    if grad.differentiable {
        let wt = match derivatives::weak_tangent(&ctx, &sampler, &x, a.max_m) {
            Ok(w) => w,
            Err(e) => return failure(e),
        };
        println!("tangent");
        for (w, vals) in &wt.tangent.cells {
            let body: Vec<String> = vals.iter().map(|v| fmt_scalar(v)).collect();
            println!("  cell \"{}\" values [{}]", w, body.join(", "));
        }
    }
    0
}

fn apply_param(cfg: &mut ScenarioConfig, raw: &str) -> Result<(), i32> {
    let Some((key, val)) = raw.split_once('=') else {
        return Err(usage(format_args!("--param wants key=value, got {raw:?}")));
    };
    let key = key.trim().replace('-', "_");
    let val = val.trim();
    let bad = |what: &str| usage(format_args!("--param {key}: bad {what} {val:?}"));
    match key.as_str() {
        "corner" => {
            let c: usize = val.parse().map_err(|_| bad("corner"))?;
            if c < 1 {
                return Err(usage("--param corner is 1-based"));
            }
            cfg.corner = c - 1;
        }
        "l_max" => cfg.l_max = val.parse().map_err(|_| bad("integer"))?,
        "m_max" => cfg.m_max = val.parse().map_err(|_| bad("integer"))?,
        "asymmetry" => cfg.asymmetry = val.parse().map_err(|_| bad("number"))?,
        "eta" => cfg.eta = Some(val.parse().map_err(|_| bad("number"))?),
        _ => {
            return Err(usage(format_args!(
                "unknown --param key {key:?}; known: corner, l-max, m-max, asymmetry, eta"
            )))
        }
    }
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> i32 {
    if !SCENARIOS.contains(&a.id.as_str()) {
        return usage(format_args!(
            "unknown scenario {:?}; available: {}",
            a.id,
            SCENARIOS.join(", ")
        ));
    }
    if a.plot && a.out.is_none() {
        return usage("--plot needs --out");
    }
    if !PRESET_NAMES.contains(&a.preset.as_str()) {
        return usage(format_args!(
            "unknown preset {:?}; presets: {}",
            a.preset,
            PRESET_NAMES.join(", ")
        ));
    }
    let mut cfg = ScenarioConfig {
        preset: a.preset.clone(),
        ..ScenarioConfig::default()
    };
    if let Some(m) = a.max_m {
        cfg.m_max = m;
    }
    for p in &a.params {
        if let Err(code) = apply_param(&mut cfg, p) {
            return code;
        }
    }
    if cfg.m_max > 12 {
        return usage(format_args!("max-m {} exceeds the budget 12", cfg.m_max));
    }
    if cfg.l_max > 6 {
        return usage(format_args!("l-max {} exceeds the budget 6", cfg.l_max));
    }
    let report = match experiments::run(&a.id, &cfg) {
        Ok(r) => r,
        Err(e) => return failure(e),
    };
    print!("{}", report.render());
    if let Some(dir) = &a.out {
        if let Err(e) = fs::create_dir_all(dir) {
            return failure(format_args!("{}: {e}", dir.display()));
        }
        let txt = dir.join(format!("{}.txt", report.id));
        if let Err(e) = fs::write(&txt, report.render()) {
            return failure(format_args!("{}: {e}", txt.display()));
        }
        println!("wrote {}", txt.display());
        for s in &report.series {
            let mut csv = String::from("m,value\n");
            for (m, v) in &s.points {
                csv.push_str(&format!("{},{:.12e}\n", m, v));
            }
            let path = dir.join(format!("{}-{}.csv", report.id, s.label));
            if let Err(e) = fs::write(&path, csv) {
                return failure(format_args!("{}: {e}", path.display()));
            }
            println!("wrote {}", path.display());
            if a.plot {
                if let Some(svg) = plot::series_svg(&s.label, &s.points) {
                    let path = dir.join(format!("{}-{}.svg", report.id, s.label));
                    if let Err(e) = fs::write(&path, svg) {
                        return failure(format_args!("{}: {e}", path.display()));
                    }
                    println!("wrote {}", path.display());
                }
            }
        }
    }
    if report.passed() {
        0
    } else {
        1
    }
}
