//! Timing sweep over (lx, nel, variant) with a checksum gate: every variant of
//! a size must agree with the oracle before any of its rows are emitted.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mdg_core::codegen::EmitConfig;
use mdg_core::corpus::ax_base;
use mdg_core::interp::{ax_bindings, execute};
use mdg_core::ir::DataflowGraph;
use mdg_core::kernel::{compiler_available, AxArgs, AxKernel, CompileOptions};
use mdg_core::sem::{ax_reference, flops_model, gll_basis, random_spd_geometry, DerivativeMatrices, ElementField, GeomFactors, GllBasis};
use mdg_core::transforms::ax_optimization_recipe;

pub const PAPER_MESHES: [usize; 9] = [128, 256, 512, 1024, 2048, 4096, 8192, 16384, 32768];
pub const DEFAULT_MAX_NEL: usize = 4096;
pub const DEFAULT_REPS: usize = 9;
pub const CSV_HEADER: [&str; 7] = ["lx", "nel", "unknowns", "variant", "seconds_median", "gflops", "checksum"];
/// Allowed checksum disagreement, relative to `sum |w|` of the oracle.
pub const CHECKSUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Oracle,
    InterpNaive,
    GenNaive,
    GenOpt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Oracle, Variant::InterpNaive, Variant::GenNaive, Variant::GenOpt];
    /// Interpreting the 4096-element meshes takes minutes on a single core.
    pub const DEFAULT: [Variant; 3] = [Variant::Oracle, Variant::GenNaive, Variant::GenOpt];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Oracle => "oracle",
            Variant::InterpNaive => "interp-naive",
            Variant::GenNaive => "gen-naive",
            Variant::GenOpt => "gen-opt",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    fn compiled(self) -> bool {
        matches!(self, Variant::GenNaive | Variant::GenOpt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub lx: usize,
    pub nel: usize,
    pub variant: Variant,
    pub seconds_median: f64,
    pub gflops: f64,
    pub checksum: f64,
}

impl BenchRecord {
    pub fn unknowns(&self) -> usize {
        self.nel * (self.lx - 1).pow(3)
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub lx: Vec<usize>,
    pub meshes: Vec<usize>,
    pub reps: usize,
    pub variants: Vec<Variant>,
    pub compile: CompileOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            lx: (3..=8).collect(),
            meshes: mesh_list(None, DEFAULT_MAX_NEL),
            reps: DEFAULT_REPS,
            variants: Variant::DEFAULT.to_vec(),
            compile: CompileOptions::from_env(true, false),
        }
    }
}

/// The requested meshes, or the nine paper sizes, capped at `max_nel`.
pub fn mesh_list(requested: Option<&[usize]>, max_nel: usize) -> Vec<usize> {
    requested.unwrap_or(&PAPER_MESHES).iter().copied().filter(|&n| n <= max_nel).collect()
}

/// Raised when variants disagree; the CLI maps it to exit code 1.
#[derive(Debug)]
pub struct VerificationFailure(pub String);

impl std::fmt::Display for VerificationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailure {}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// One warm-up call, then `reps` timed calls; returns the median seconds.
fn time(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f()?;
        samples.push(t.elapsed().as_secs_f64().max(1e-9));
    }
    Ok(median(samples))
}

struct Kernels {
    naive: Option<AxKernel>,
    opt: Option<AxKernel>,
    naive_graph: DataflowGraph,
}

fn prepare(lx: usize, cfg: &BenchConfig, with_compiler: bool) -> Result<Kernels> {
    let naive_graph = ax_base(lx as i64);
    let emit = EmitConfig::default();
    let wants = |v| with_compiler && cfg.variants.contains(&v);
    let naive = if wants(Variant::GenNaive) {
        Some(AxKernel::build(&naive_graph, &emit, &cfg.compile).with_context(|| format!("gen-naive lx={lx}"))?)
    } else {
        None
    };
    let opt = if wants(Variant::GenOpt) {
        let g = ax_optimization_recipe(&naive_graph, lx as i64)?;
        Some(AxKernel::build(&g, &emit, &cfg.compile).with_context(|| format!("gen-opt lx={lx}"))?)
    } else {
        None
    };
    Ok(Kernels { naive, opt, naive_graph })
}

struct Inputs<'a> {
    basis: &'a GllBasis,
    d: &'a DerivativeMatrices,
    u: ElementField,
    geom: GeomFactors,
}

fn run_variant(v: Variant, k: &Kernels, inputs: &Inputs, reps: usize) -> Result<(f64, Vec<f64>)> {
    let Inputs { basis, d, u, geom } = inputs;
    let mut w = Vec::new();
    let secs = match v {
        Variant::Oracle => time(reps, || {
            w = ax_reference(u, basis, geom)?.data;
            Ok(())
        })?,
        Variant::InterpNaive => {
            let b = ax_bindings(u, d, geom);
            time(reps, || {
                w = execute(&k.naive_graph, &b)?.arrays.remove("wd").context("no wd output")?.data;
                Ok(())
            })?
        }
        Variant::GenNaive | Variant::GenOpt => {
            let kernel = if v == Variant::GenNaive { &k.naive } else { &k.opt };
            let kernel = kernel.as_ref().expect("kernel prepared");
            let mut args = AxArgs::new(u, d, geom)?;
            let secs = time(reps, || Ok(kernel.invoke(&mut args)?))?;
            w = args.output().to_vec();
            secs
        }
    };
    Ok((secs, w))
}

/// The seeded field and geometry timed for one `(lx, nel)`.
pub fn bench_inputs(lx: usize, nel: usize) -> (ElementField, GeomFactors) {
    let seed = (lx * 100_003 + nel) as u64;
    (ElementField::random(nel, lx, seed), random_spd_geometry(nel, lx, seed + 1))
}

/// Runs the sweep. `warn` receives human-readable notices (skipped variants).
pub fn run_bench(cfg: &BenchConfig, warn: &mut dyn FnMut(&str)) -> Result<Vec<BenchRecord>> {
    if cfg.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let with_compiler = compiler_available(&cfg.compile);
    let mut variants = cfg.variants.clone();
    variants.sort();
    variants.dedup();
    if !with_compiler && variants.iter().any(|v| v.compiled()) {
        warn(&format!("compiler '{}' unavailable; skipping gen-* variants", cfg.compile.compiler));
        variants.retain(|v| !v.compiled());
    }
    let mut records = Vec::new();
    for &lx in &cfg.lx {
        let basis = gll_basis(lx)?;
        let d = DerivativeMatrices::from_basis(&basis);
        let kernels = prepare(lx, cfg, with_compiler)?;
        for &nel in &cfg.meshes {
            let (u, geom) = bench_inputs(lx, nel);
            let inputs = Inputs { basis: &basis, d: &d, u, geom };
            let mut rows = Vec::new();
            let mut reference: Option<(f64, f64)> = None;
            for &v in &variants {
                let (secs, w) = run_variant(v, &kernels, &inputs, cfg.reps)?;
                let checksum: f64 = w.iter().sum();
                let magnitude: f64 = w.iter().map(|x| x.abs()).sum();
                let (ref_sum, ref_mag) = *reference.get_or_insert((checksum, magnitude));
                if (checksum - ref_sum).abs() > CHECKSUM_TOLERANCE * ref_mag.max(f64::MIN_POSITIVE) {
                    return Err(VerificationFailure(format!(
                        "lx={lx} nel={nel}: {} checksum {checksum:e} differs from {} checksum {ref_sum:e}",
                        v.name(),
                        variants[0].name()
                    ))
                    .into());
                }
                let gflops = flops_model(lx, nel) as f64 / secs / 1e9;
                rows.push(BenchRecord { lx, nel, variant: v, seconds_median: secs, gflops, checksum });
            }
            records.extend(rows);
        }
    }
    Ok(records)
}

pub fn write_csv<W: Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.lx.to_string(),
            r.nel.to_string(),
            r.unknowns().to_string(),
            r.variant.name().to_string(),
            format!("{:e}", r.seconds_median),
            format!("{:.6}", r.gflops),
            format!("{:e}", r.checksum),
        ])?;
    }
    w.flush()?;
    Ok(())
}
