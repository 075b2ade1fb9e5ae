use mdg_core::interp::{execute, run_ax};
use mdg_core::ir::{build_ax_program, specialize_symbol, SymbolicSize};
use mdg_core::sem::{ax_reference, gll_basis, random_spd_geometry, DerivativeMatrices, ElementField};
use mdg_core::Error;

fn specialized(lx: usize, nel: usize) -> mdg_core::ir::DataflowGraph {
    let g = build_ax_program(&SymbolicSize::sym("lx"), &SymbolicSize::sym("nel"));
    let g = specialize_symbol(&g, "lx", lx as i64).unwrap();
    specialize_symbol(&g, "nel", nel as i64).unwrap()
}

#[test]
fn interpreter_matches_reference_bitwise() {
    for lx in 2..=8 {
        let basis = gll_basis(lx).unwrap();
        let d = DerivativeMatrices::from_basis(&basis);
        for nel in [1usize, 8, 64] {
            let u = ElementField::random(nel, lx, 11 + nel as u64);
            let g = random_spd_geometry(nel, lx, 5);
            let want = ax_reference(&u, &basis, &g).unwrap();
            let got = run_ax(&specialized(lx, nel), &u, &d, &g).unwrap();
            assert_eq!(got.data, want.data, "lx={lx} nel={nel}");
        }
    }
}

#[test]
fn symbolic_program_binds_sizes_at_run_time() {
    let lx = 4;
    let nel = 3;
    let basis = gll_basis(lx).unwrap();
    let d = DerivativeMatrices::from_basis(&basis);
    let u = ElementField::random(nel, lx, 1);
    let g = random_spd_geometry(nel, lx, 2);
    let program = build_ax_program(&SymbolicSize::sym("lx"), &SymbolicSize::sym("nel"));
    let got = run_ax(&program, &u, &d, &g).unwrap();
    assert_eq!(got.data, ax_reference(&u, &basis, &g).unwrap().data);
}

#[test]
fn wrong_dims_rejected() {
    let lx = 3;
    let basis = gll_basis(lx).unwrap();
    let d = DerivativeMatrices::from_basis(&basis);
    let u = ElementField::random(2, lx, 1);
    let g = random_spd_geometry(2, lx, 2);
    let err = run_ax(&specialized(lx, 4), &u, &d, &g).unwrap_err();
    assert!(matches!(err, Error::Binding(_)), "{err}");
}

#[test]
fn missing_symbol_rejected() {
    let program = build_ax_program(&SymbolicSize::sym("lx"), &SymbolicSize::sym("nel"));
    let err = execute(&program, &Default::default()).unwrap_err();
    assert!(matches!(err, Error::Binding(_)));
}
