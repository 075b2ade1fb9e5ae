//! Compiling emitted source with the system C compiler and calling the result
//! in-process. `MDG_CC` picks the compiler (default `cc`); `MDG_CFLAGS` adds
//! whitespace-separated flags after the built-in ones.

use std::ffi::{c_int, OsStr};
use std::path::{Path, PathBuf};
use std::process::Command;

use libloading::Library;

use crate::codegen::{generate_interface_header, generate_source, EmitConfig};
use crate::error::{Error, Result};
use crate::interp::{ax_arrays, Tensor};
use crate::ir::builder::AX_INTERFACE;
use crate::ir::DataflowGraph;
use crate::sem::{DerivativeMatrices, ElementField, GeomFactors};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileOptions {
    pub compiler: String,
    pub extra_flags: Vec<String>,
    pub openmp: bool,
    pub strict_fp: bool,
}

impl CompileOptions {
    pub fn from_env(openmp: bool, strict_fp: bool) -> Self {
        let compiler = std::env::var("MDG_CC").ok().filter(|s| !s.trim().is_empty()).unwrap_or_else(|| "cc".into());
        let extra_flags = std::env::var("MDG_CFLAGS")
            .map(|s| s.split_whitespace().map(String::from).collect())
            .unwrap_or_default();
        CompileOptions { compiler, extra_flags, openmp, strict_fp }
    }

    /// The full argument vector, compiler first.
    pub fn command_line(&self, source: &Path, library: &Path) -> Vec<String> {
        let mut args = vec![self.compiler.clone(), "-O3".into(), "-std=c99".into(), "-fPIC".into(), "-shared".into()];
        if self.openmp {
            args.push("-fopenmp".into());
        }
        args.push(if self.strict_fp { "-ffp-contract=off" } else { "-ffp-contract=fast" }.into());
        args.extend(self.extra_flags.iter().cloned());
        args.push("-o".into());
        args.push(library.display().to_string());
        args.push(source.display().to_string());
        args
    }
}

/// True when the configured compiler runs at all.
pub fn compiler_available(opts: &CompileOptions) -> bool {
    Command::new(&opts.compiler).arg("--version").output().is_ok_and(|o| o.status.success())
}

pub fn compile_library(source: &Path, library: &Path, opts: &CompileOptions) -> Result<()> {
    let args = opts.command_line(source, library);
    let out = Command::new(&args[0])
        .args(&args[1..])
        .output()
        .map_err(|e| Error::Codegen(format!("cannot run compiler '{}': {e}", opts.compiler)))?;
    if !out.status.success() {
        return Err(Error::Codegen(format!(
            "compiler failed ({}):\n{}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    Ok(())
}

/// Writes `<stem>.c` and `<stem>.h` into `dir`.
pub fn write_sources(g: &DataflowGraph, cfg: &EmitConfig, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let src = dir.join(format!("{stem}.c"));
    let hdr = dir.join(format!("{stem}.h"));
    std::fs::write(&src, generate_source(g, cfg)?)?;
    std::fs::write(&hdr, generate_interface_header(g, cfg)?)?;
    Ok((src, hdr))
}

type AxFn = unsafe extern "C" fn(
    *mut f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    *const f64,
    c_int,
    c_int,
);

/// Arguments in kernel order, built once and reused across calls.
pub struct AxArgs {
    pub nel: usize,
    pub lx: usize,
    arrays: Vec<Tensor>,
}

impl AxArgs {
    pub fn new(u: &ElementField, d: &DerivativeMatrices, g: &GeomFactors) -> Result<Self> {
        g.check_consistent()?;
        if d.lx != u.lx || g.lx() != u.lx || g.nel() != u.nel {
            return Err(Error::Binding(format!(
                "inconsistent sizes: field {}x{}, matrices {}, geometry {}x{}",
                u.nel,
                u.lx,
                d.lx,
                g.nel(),
                g.lx()
            )));
        }
        let arrays = ax_arrays(u, d, g).into_iter().map(|(_, t)| t).collect();
        Ok(AxArgs { nel: u.nel, lx: u.lx, arrays })
    }

    pub fn output(&self) -> &[f64] {
        &self.arrays[0].data
    }

    pub fn into_output(self) -> Result<ElementField> {
        let AxArgs { nel, lx, mut arrays } = self;
        ElementField::from_vec(nel, lx, arrays.swap_remove(0).data)
    }
}

/// A compiled Ax kernel with its library loaded.
pub struct AxKernel {
    func: AxFn,
    lx: usize,
    nel: Option<usize>,
    _lib: Library,
    _dir: tempfile::TempDir,
}

impl AxKernel {
    /// Emit, compile and load `g`. The graph must expose exactly the Ax
    /// interface with `lx` fixed.
    pub fn build(g: &DataflowGraph, cfg: &EmitConfig, opts: &CompileOptions) -> Result<AxKernel> {
        let names: Vec<&str> = g.containers.iter().filter(|c| !c.transient).map(|c| c.name.as_str()).collect();
        if names != AX_INTERFACE {
            return Err(Error::Codegen(format!("graph interface {names:?} is not the Ax interface")));
        }
        let ud = g.container("ud").expect("interface checked");
        let lx = ud.shape[1]
            .as_constant()
            .ok_or_else(|| Error::Codegen("unresolved symbol 'lx'; specialise it before code generation".into()))?
            as usize;
        let nel = ud.shape[0].as_constant().map(|n| n as usize);
        let dir = tempfile::Builder::new().prefix("mdg-kernel").tempdir()?;
        let (src, _) = write_sources(g, cfg, dir.path(), "kernel")?;
        let lib_path = dir.path().join(format!("libkernel.{}", std::env::consts::DLL_EXTENSION));
        compile_library(&src, &lib_path, opts)?;
        Self::load(&lib_path, &cfg.entry_symbol, lx, nel, dir)
    }

    fn load(path: &Path, entry: &str, lx: usize, nel: Option<usize>, dir: tempfile::TempDir) -> Result<AxKernel> {
        let lib = unsafe { Library::new(OsStr::new(path)) }.map_err(|e| Error::Codegen(format!("cannot load library: {e}")))?;
        // SAFETY: the symbol was emitted by `generate_source` with the `AxFn` signature.
        let func: AxFn = unsafe {
            *lib.get::<AxFn>(entry.as_bytes()).map_err(|e| Error::Codegen(format!("symbol '{entry}' not found: {e}")))?
        };
        Ok(AxKernel { func, lx, nel, _lib: lib, _dir: dir })
    }

    pub fn lx(&self) -> usize {
        self.lx
    }

    pub fn invoke(&self, args: &mut AxArgs) -> Result<()> {
        if args.lx != self.lx || self.nel.is_some_and(|n| n != args.nel) {
            return Err(Error::Binding(format!(
                "kernel compiled for lx={} nel={:?}, called with lx={} nel={}",
                self.lx, self.nel, args.lx, args.nel
            )));
        }
        let nelv = c_int::try_from(args.nel).map_err(|_| Error::Binding(format!("nel={} exceeds int", args.nel)))?;
        let (wd, rest) = args.arrays.split_first_mut().expect("15 arrays");
        let p: Vec<*const f64> = rest.iter().map(|t| t.data.as_ptr()).collect();
        // SAFETY: every buffer has the shape the kernel indexes for (lx, nel), checked above.
        unsafe {
            (self.func)(
                wd.data.as_mut_ptr(),
                p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10], p[11], p[12], p[13],
                nelv,
                self.lx as c_int,
            );
        }
        Ok(())
    }

    pub fn run(&self, u: &ElementField, d: &DerivativeMatrices, g: &GeomFactors) -> Result<ElementField> {
        let mut args = AxArgs::new(u, d, g)?;
        self.invoke(&mut args)?;
        args.into_output()
    }
}
