use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use mdg_cli::bench::{self, BenchConfig, Variant, VerificationFailure};
use mdg_cli::plot;
use mdg_core::codegen::{EmitConfig, DEFAULT_ENTRY};
use mdg_core::interp::{ax_arrays, ax_bindings, execute};
use mdg_core::ir::{build_ax_program, deserialize_unchecked, read_graph_file, validate, write_graph_file, DataflowGraph, SymbolicSize};
use mdg_core::kernel::{write_sources, CompileOptions};
use mdg_core::sem::{ax_reference, gll_basis, random_spd_geometry, DerivativeMatrices, ElementField};
use mdg_core::tensorfile::dump_ax_inputs;
use mdg_core::transforms::{ax_optimization_recipe, scratch_report, PassRecipe, DEFAULT_SCRATCH_BUDGET};

#[derive(Parser)]
#[command(name = "mdg", version, about = "Build, transform, run and benchmark spectral-element Ax kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print GLL nodes, weights and the derivative matrix.
    Basis {
        #[arg(long)]
        lx: usize,
    },
    /// Write the Ax program graph. `.gz` output is compressed.
    Build {
        #[arg(long)]
        lx: i64,
        /// Fix the element count instead of leaving it symbolic.
        #[arg(long)]
        nel: Option<i64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Apply a pass recipe (or the built-in Ax recipe) to a graph.
    Transform(TransformArgs),
    /// Check a graph file and list its diagnostics.
    Validate {
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Interpret a graph on seeded random inputs.
    Run(RunArgs),
    /// Emit C source and header for a graph.
    Codegen {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = DEFAULT_ENTRY)]
        entry: String,
        #[arg(long)]
        no_parallel: bool,
        #[arg(long)]
        strict_fp: bool,
    },
    /// Time oracle and kernel variants over a sweep of sizes and write CSV.
    Bench(BenchArgs),
    /// Render a bench CSV as SVG.
    Plot {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct TransformArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, required_unless_present = "ax_opt", conflicts_with = "ax_opt")]
    recipe: Option<PathBuf>,
    /// Apply the built-in Ax optimisation recipe for this lx.
    #[arg(long)]
    ax_opt: Option<i64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Element count when the graph leaves it symbolic.
    #[arg(long, default_value_t = 8)]
    nel: usize,
    /// Polynomial points per direction when the graph leaves it symbolic.
    #[arg(long)]
    lx: Option<usize>,
    #[arg(long)]
    compare_oracle: bool,
    /// Write kernel inputs, sizes.txt and the expected output as tensor files.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Inclusive range `FIRST:LAST`.
    #[arg(long, default_value = "3:8")]
    lx_range: String,
    /// Comma-separated element counts; defaults to the nine standard meshes.
    #[arg(long)]
    mesh_list: Option<String>,
    #[arg(long, default_value_t = bench::DEFAULT_MAX_NEL)]
    max_nel: usize,
    #[arg(long, default_value_t = bench::DEFAULT_REPS)]
    reps: usize,
    /// Comma-separated subset of oracle, interp-naive, gen-naive, gen-opt.
    #[arg(long, default_value = "oracle,gen-naive,gen-opt")]
    variants: String,
    #[arg(short, long)]
    output: PathBuf,
}

/// Bad option values discovered after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Basis { lx } => basis(lx),
        Command::Build { lx, nel, output } => {
            if lx < 1 || nel.is_some_and(|n| n < 1) {
                return Err(usage("--lx and --nel must be positive"));
            }
            let nel = nel.map_or(SymbolicSize::sym("nel"), |n| SymbolicSize::Constant(n as u64));
            write_graph_file(&build_ax_program(&SymbolicSize::Constant(lx as u64), &nel), &output)?;
            println!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Transform(a) => transform(a),
        Command::Validate { input } => validate_file(&input),
        Command::Run(a) => run(a),
        Command::Codegen { input, output, entry, no_parallel, strict_fp } => {
            let g = read_graph_file(&input)?;
            let cfg = EmitConfig { entry_symbol: entry, parallel_annotations: !no_parallel, restrict_aliasing: true, strict_fp };
            let (src, hdr) = write_sources(&g, &cfg, &output, "kernel")?;
            println!("wrote {} and {}", src.display(), hdr.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench(a) => run_bench(a),
        Command::Plot { input, output } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let points = plot::parse_csv(&text).with_context(|| input.display().to_string())?;
            std::fs::write(&output, plot::render_svg(&points))?;
            println!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn basis(lx: usize) -> Result<ExitCode> {
    let b = gll_basis(lx).map_err(|e| usage(e.to_string()))?;
    println!("lx {lx}");
    println!("# i point weight");
    for (i, (x, w)) in b.points.iter().zip(&b.weights).enumerate() {
        println!("{i} {x:.17e} {w:.17e}");
    }
    println!("# derivative matrix, row i = d/dx at point i");
    for row in b.deriv.chunks(lx) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        println!("{}", cells.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}

fn transform(a: TransformArgs) -> Result<ExitCode> {
    let g = read_graph_file(&a.input)?;
    let out = match (a.recipe, a.ax_opt) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            PassRecipe::parse(&text).with_context(|| path.display().to_string())?.apply(&g)?
        }
        (None, Some(lx)) => ax_optimization_recipe(&g, lx)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    for w in scratch_report(&out, DEFAULT_SCRATCH_BUDGET) {
        eprintln!("warning: {w}");
    }
    write_graph_file(&out, &a.output)?;
    println!("wrote {}", a.output.display());
    Ok(ExitCode::SUCCESS)
}

fn validate_file(path: &Path) -> Result<ExitCode> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let g = match deserialize_unchecked(&bytes) {
        Ok(g) => g,
        Err(e) => {
            println!("{}: {e}", path.display());
            return Ok(ExitCode::from(1));
        }
    };
    let diags = validate(&g);
    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        println!("{}: valid", path.display());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} diagnostic(s)", diags.len());
        Ok(ExitCode::from(1))
    }
}

fn constant_dim(g: &DataflowGraph, dim: usize) -> Option<usize> {
    g.container("ud").and_then(|c| c.shape.get(dim)).and_then(SymbolicSize::as_constant).map(|x| x as usize)
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let g = read_graph_file(&a.input)?;
    let lx = match (constant_dim(&g, 1), a.lx) {
        (Some(fixed), Some(asked)) if fixed != asked => return Err(usage(format!("graph has lx={fixed}, --lx {asked} given"))),
        (Some(lx), _) | (None, Some(lx)) => lx,
        (None, None) => return Err(usage("graph leaves lx symbolic; pass --lx")),
    };
    let nel = constant_dim(&g, 0).unwrap_or(a.nel);
    let basis = gll_basis(lx)?;
    let d = DerivativeMatrices::from_basis(&basis);
    let u = ElementField::random(nel, lx, a.seed);
    let geom = random_spd_geometry(nel, lx, a.seed.wrapping_add(1));
    let out = execute(&g, &ax_bindings(&u, &d, &geom))?;
    let w = out.arrays.get("wd").ok_or_else(|| anyhow!("graph has no 'wd' output"))?;
    println!("lx {lx} nel {nel} seed {}", a.seed);
    println!("checksum {:e}", w.data.iter().sum::<f64>());

    if let Some(dir) = &a.dump {
        dump_ax_inputs(dir, &ax_arrays(&u, &d, &geom), w)?;
        println!("dumped to {}", dir.display());
    }
    if a.compare_oracle {
        let want = ax_reference(&u, &basis, &geom)?;
        let diff = w.data.iter().zip(&want.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        println!("max abs diff {diff:e}");
        if diff != 0.0 {
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| usage(format!("{what}: '{s}' is not a non-negative integer"))))
        .collect()
}

fn run_bench(a: BenchArgs) -> Result<ExitCode> {
    let (first, last) = a.lx_range.split_once(':').ok_or_else(|| usage("--lx-range must be FIRST:LAST"))?;
    let (first, last) = (parse_list(first, "--lx-range")?[0], parse_list(last, "--lx-range")?[0]);
    if first < 2 || first > last {
        return Err(usage("--lx-range needs 2 <= FIRST <= LAST"));
    }
    let requested = a.mesh_list.as_deref().map(|m| parse_list(m, "--mesh-list")).transpose()?;
    let variants = a
        .variants
        .split(',')
        .map(|v| Variant::parse(v.trim()).ok_or_else(|| usage(format!("unknown variant '{v}'"))))
        .collect::<Result<Vec<_>>>()?;
    let cfg = BenchConfig {
        lx: (first..=last).collect(),
        meshes: bench::mesh_list(requested.as_deref(), a.max_nel),
        reps: a.reps,
        variants,
        compile: CompileOptions::from_env(true, false),
    };
    if cfg.meshes.is_empty() {
        return Err(usage("no mesh sizes left after --max-nel"));
    }
    let records = match bench::run_bench(&cfg, &mut |w| eprintln!("warning: {w}")) {
        Ok(r) => r,
        Err(e) if e.is::<VerificationFailure>() => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e),
    };
    let file = std::fs::File::create(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    bench::write_csv(file, &records)?;
    println!("wrote {} rows to {}", records.len(), a.output.display());
    Ok(ExitCode::SUCCESS)
}
