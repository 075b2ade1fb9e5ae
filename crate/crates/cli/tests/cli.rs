use std::path::Path;
use std::process::{Command, Output};

use mdg_core::interp::run_ax;
use mdg_core::ir::read_graph_file;
use mdg_core::sem::{gll_basis, DerivativeMatrices, ElementField};
use mdg_core::tensorfile::{read_sizes, read_tensor, EXPECTED_FILE};

fn mdg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdg")).current_dir(dir).args(args).output().expect("mdg runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn build_writes_compressed_graph() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdg(dir.path(), &["build", "--lx", "7", "-o", "ax_7.mdg.gz"]);
    assert_eq!(code(&o), 0);
    let bytes = std::fs::read(dir.path().join("ax_7.mdg.gz")).unwrap();
    assert_eq!(&bytes[..2], &[0x1f, 0x8b]);
    let g = read_graph_file(&dir.path().join("ax_7.mdg.gz")).unwrap();
    assert_eq!(g.symbols, ["nel"]);
}

#[test]
fn run_matches_oracle_exactly() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mdg(dir.path(), &["build", "--lx", "4", "-o", "ax_4.mdg"])), 0);
    let o = mdg(dir.path(), &["run", "-i", "ax_4.mdg", "--seed", "1", "--compare-oracle"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("max abs diff 0e0"), "{}", stdout(&o));

    assert_eq!(code(&mdg(dir.path(), &["transform", "-i", "ax_4.mdg", "--ax-opt", "4", "-o", "opt.mdg"])), 0);
    let o = mdg(dir.path(), &["run", "-i", "opt.mdg", "--seed", "3", "--nel", "5", "--compare-oracle"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("lx 4 nel 5"));
}

#[test]
fn dump_writes_harness_inputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mdg(dir.path(), &["build", "--lx", "3", "-o", "ax.mdg"])), 0);
    let o = mdg(dir.path(), &["run", "-i", "ax.mdg", "--seed", "2", "--nel", "4", "--dump", "inputs"]);
    assert_eq!(code(&o), 0);
    let inputs = dir.path().join("inputs");
    assert_eq!(read_sizes(&inputs).unwrap(), (4, 3));
    let ud = read_tensor(&inputs.join("ud.t")).unwrap();
    assert_eq!(ud.dims, [4, 3, 3, 3]);
    assert_eq!(read_tensor(&inputs.join("dxd.t")).unwrap().dims, [3, 3]);
    assert!(read_tensor(&inputs.join("wd.t")).unwrap().data.iter().all(|&x| x == 0.0));

    // the expected output is reproducible from the dumped inputs alone
    let field = |name: &str| ElementField::from_vec(4, 3, read_tensor(&inputs.join(format!("{name}.t"))).unwrap().data).unwrap();
    let d = DerivativeMatrices::from_basis(&gll_basis(3).unwrap());
    assert_eq!(read_tensor(&inputs.join("dxd.t")).unwrap().data, d.dxd);
    let geom = mdg_core::sem::GeomFactors {
        h1: field("h1d"),
        g11: field("g11d"),
        g22: field("g22d"),
        g33: field("g33d"),
        g12: field("g12d"),
        g13: field("g13d"),
        g23: field("g23d"),
    };
    let g = read_graph_file(&dir.path().join("ax.mdg")).unwrap();
    let want = run_ax(&g, &field("ud"), &d, &geom).unwrap();
    assert_eq!(read_tensor(&inputs.join(EXPECTED_FILE)).unwrap().data, want.data);
}

#[test]
fn validate_reports_corruption() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mdg(dir.path(), &["build", "--lx", "3", "-o", "ax.mdg"])), 0);
    assert_eq!(code(&mdg(dir.path(), &["validate", "-i", "ax.mdg"])), 0);

    let text = std::fs::read_to_string(dir.path().join("ax.mdg")).unwrap();
    let broken = text.replacen("\"rtmp\"", "\"nowhere\"", 1);
    assert_ne!(broken, text);
    std::fs::write(dir.path().join("corrupted.mdg"), broken).unwrap();
    let o = mdg(dir.path(), &["validate", "-i", "corrupted.mdg"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("diagnostic"), "{}", stdout(&o));

    std::fs::write(dir.path().join("garbage.mdg"), "not a graph").unwrap();
    assert_eq!(code(&mdg(dir.path(), &["validate", "-i", "garbage.mdg"])), 1);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["build", "--lx", "3"],
        &["build", "--lx", "3", "-o", "x.mdg", "--bogus"],
        &["transform", "-i", "a", "-o", "b"],
        &["bench", "--lx-range", "8:3", "-o", "b.csv"],
        &["bench", "--variants", "gpu", "-o", "b.csv"],
        &["basis", "--lx", "1"],
    ] {
        let o = mdg(dir.path(), args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn transform_reports_failing_step() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mdg(dir.path(), &["build", "--lx", "4", "-o", "ax.mdg"])), 0);
    std::fs::write(dir.path().join("r.txt"), "# tile then refuse\nmap_expansion map=e\nmap_expansion map=e\n").unwrap();
    let o = mdg(dir.path(), &["transform", "-i", "ax.mdg", "--recipe", "r.txt", "-o", "out.mdg"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 2"));
    assert!(!dir.path().join("out.mdg").exists());
}

#[test]
fn codegen_writes_source_and_header() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mdg(dir.path(), &["build", "--lx", "6", "-o", "ax.mdg"])), 0);
    let o = mdg(dir.path(), &["codegen", "-i", "ax.mdg", "-o", "gen", "--entry", "ax_lx6", "--no-parallel", "--strict-fp"]);
    assert_eq!(code(&o), 0);
    let src = std::fs::read_to_string(dir.path().join("gen/kernel.c")).unwrap();
    let hdr = std::fs::read_to_string(dir.path().join("gen/kernel.h")).unwrap();
    assert!(src.contains("void ax_lx6(") && hdr.contains("void ax_lx6("));
    assert!(!src.contains("#pragma omp"));
    assert!(src.contains("FP_CONTRACT OFF"));

    assert_eq!(code(&mdg(dir.path(), &["codegen", "-i", "ax.mdg", "-o", "gen", "--entry", "9bad"])), 1);
}

#[test]
fn bench_and_plot_small_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdg(
        dir.path(),
        &["bench", "--lx-range", "3:4", "--mesh-list", "8,16,64", "--max-nel", "16", "--reps", "3", "--variants", "oracle,interp-naive,gen-opt", "-o", "b.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lx,nel,unknowns,variant,seconds_median,gflops,checksum"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() == 12 || rows.len() == 8, "{csv}");
    for r in &rows {
        let (lx, nel): (usize, usize) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!(nel <= 16);
        assert_eq!(r[2].parse::<usize>().unwrap(), nel * (lx - 1).pow(3));
        assert!(r[4].parse::<f64>().unwrap() > 0.0);
    }

    let o = mdg(dir.path(), &["plot", "-i", "b.csv", "-o", "b.svg"]);
    assert_eq!(code(&o), 0);
    let svg = std::fs::read_to_string(dir.path().join("b.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("class=\"panel\"").count(), 2);

    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    let o = mdg(dir.path(), &["plot", "-i", "empty.csv", "-o", "e.svg"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn bench_without_compiler_skips_generated_variants() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mdg"))
        .current_dir(dir.path())
        .env("MDG_CC", "/nonexistent/cc")
        .args(["bench", "--lx-range", "3:3", "--mesh-list", "4", "--reps", "1", "-o", "b.csv"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipping gen-* variants"));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.contains(",oracle,"));
}
