use std::collections::BTreeMap;

use mdg_core::corpus::{applicable_cases, ax_base, ax_corpus, ax_two_states, refused_cases};
use mdg_core::interp::{execute_recording, run_ax};
use mdg_core::ir::{build_ax_program, find_map_by_param, validate, DataflowGraph, Node, Schedule, Storage, SymbolicSize};
use mdg_core::sem::{ax_reference, gll_basis, random_spd_geometry, DerivativeMatrices, ElementField};
use mdg_core::transforms::*;
use mdg_core::Error;
use proptest::prelude::*;

const LX: usize = 4;
const NEL: usize = 3;

fn output(g: &DataflowGraph, seed: u64, lx: usize, nel: usize) -> Vec<f64> {
    let basis = gll_basis(lx).unwrap();
    let d = DerivativeMatrices::from_basis(&basis);
    let u = ElementField::random(nel, lx, seed);
    let geo = random_spd_geometry(nel, lx, seed + 1000);
    run_ax(g, &u, &d, &geo).unwrap().data
}

fn map<'g>(g: &'g DataflowGraph, p: &str) -> &'g mdg_core::ir::MapScope {
    g.map_at(&find_map_by_param(g, p).unwrap()).unwrap()
}

#[test]
fn every_applicable_case_preserves_output() {
    let base = ax_base(LX as i64);
    let corpus = ax_corpus(LX as i64).unwrap();
    assert!(corpus.len() >= 20);
    for seed in 0..10 {
        let want = output(&base, seed, LX, NEL);
        for (label, g) in &corpus {
            assert!(validate(g).is_empty(), "{label}");
            assert_eq!(output(g, seed, LX, NEL), want, "{label} seed {seed}");
        }
    }
}

#[test]
fn refused_cases_leave_input_untouched() {
    let base = ax_base(LX as i64);
    for (label, recipe) in refused_cases() {
        let r = PassRecipe::parse(&recipe).unwrap();
        let (last, prefix) = r.passes.split_last().unwrap();
        let before = PassRecipe { passes: prefix.to_vec() }.apply(&base).unwrap();
        let snapshot = before.clone();
        let err = last.apply(&before).unwrap_err();
        assert!(matches!(err, Error::Applicability { .. } | Error::Lookup(_)), "{label}: {err}");
        assert_eq!(before, snapshot, "{label}");
        let err = r.apply(&base).unwrap_err();
        match err {
            Error::Applicability { step, .. } => assert_eq!(step, Some(r.passes.len()), "{label}"),
            other => panic!("{label}: {other}"),
        }
    }
}

#[test]
fn expansion_nests_outermost_first() {
    let g = PassRecipe::parse("map_expansion map=e").unwrap().apply(&ax_base(3)).unwrap();
    let e = map(&g, "e");
    assert_eq!(e.schedule, Schedule::DeviceGrid);
    let Node::Map(k) = &e.body[0] else { panic!() };
    assert_eq!(k.params, vec!["k"]);
    assert_eq!(k.schedule, Schedule::Sequential);
    assert_eq!(map(&g, "i").schedule, Schedule::Sequential);
}

#[test]
fn collapse_rebuilds_kji() {
    let g = PassRecipe::parse("map_expansion map=e\nmap_collapse outer=j inner=i\nmap_collapse outer=k inner=j")
        .unwrap()
        .apply(&ax_base(3))
        .unwrap();
    assert_eq!(map(&g, "k").params, vec!["k", "j", "i"]);
    assert_eq!(find_map_by_param(&g, "i").unwrap(), find_map_by_param(&g, "k").unwrap());
}

#[test]
fn fusion_rejects_mismatched_ranges() {
    let mut g = ax_base(3);
    // shrink the second map's innermost range by one
    if let Node::Map(m) = &mut g.states[0].nodes[1] {
        m.ranges[3].end = mdg_core::ir::Bound::constant(2);
    }
    let a = find_map_by_param(&g, "e").unwrap();
    let b = find_map_by_param(&g, "e2").unwrap();
    let err = map_fusion(&g, &a, &b).unwrap_err();
    assert!(err.to_string().contains("ranges differ"), "{err}");
}

#[test]
fn fusion_reports_offending_container() {
    let g = ax_base(3);
    let err = map_fusion(&g, &find_map_by_param(&g, "e").unwrap(), &find_map_by_param(&g, "e2").unwrap()).unwrap_err();
    assert!(err.to_string().contains("tmp"), "{err}");
}

#[test]
fn tiling_shapes() {
    let g = build_ax_program(&SymbolicSize::Constant(8), &SymbolicSize::Constant(1));
    let g = PassRecipe::parse("map_expansion map=e\nmap_collapse outer=j inner=i\nmap_collapse outer=k inner=j\nmap_tiling map=k tiles=2,2,2")
        .unwrap()
        .apply(&g)
        .unwrap();
    let outer = map(&g, "tile_k");
    assert_eq!(outer.params, vec!["tile_k", "tile_j", "tile_i"]);
    assert!(outer.ranges.iter().all(|r| r.end.as_constant() == Some(4)));
    let inner = map(&g, "k");
    assert_eq!(inner.ranges[0].begin.to_string(), "2*tile_k");
    assert_eq!(inner.ranges[0].end.to_string(), "2*tile_k + 2");

    let g7 = build_ax_program(&SymbolicSize::Constant(7), &SymbolicSize::Constant(1));
    let g7 = strip_mining(&g7, &find_map_by_param(&g7, "e").unwrap(), "i", 2).unwrap();
    assert_eq!(map(&g7, "tile_i").ranges[3].end.as_constant(), Some(4));
    assert_eq!(map(&g7, "i").ranges[0].end.to_string(), "min(2*tile_i + 2, 7)");
}

#[test]
fn strip_by_extent_has_single_outer_iteration() {
    let g = build_ax_program(&SymbolicSize::Constant(8), &SymbolicSize::Constant(2));
    let g = strip_mining(&g, &find_map_by_param(&g, "e").unwrap(), "i", 8).unwrap();
    assert_eq!(map(&g, "tile_i").ranges[3].end.as_constant(), Some(1));
}

#[test]
fn warp_tiling_width() {
    let g = build_ax_program(&SymbolicSize::Constant(2), &SymbolicSize::Constant(64));
    let g = PassRecipe::parse("map_expansion map=e\nmap_collapse outer=j inner=i\nmap_collapse outer=k inner=j\nmap_collapse outer=e inner=k")
        .unwrap()
        .apply(&g)
        .unwrap();
    // put e innermost so the warp strips a 64-long dimension
    let mut g = g;
    if let Node::Map(m) = &mut g.states[0].nodes[0] {
        m.params.rotate_left(1);
        m.ranges.rotate_left(1);
    }
    assert!(validate(&g).is_empty());
    let w = warp_tiling(&g, &find_map_by_param(&g, "e").unwrap(), 32).unwrap();
    let inner = map(&w, "e");
    assert_eq!(inner.schedule, Schedule::DeviceBlock);
    assert_eq!(inner.ranges[0].end.to_string(), "32*tile_e + 32");

    let unit = PassRecipe::parse("map_expansion map=e\nwarp_tiling map=i width=1").unwrap().apply(&ax_base(3)).unwrap();
    let before = PassRecipe::parse("map_expansion map=e").unwrap().apply(&ax_base(3)).unwrap();
    assert_eq!(map(&unit, "i").schedule, Schedule::DeviceBlock);
    assert_eq!(map(&unit, "i").ranges, map(&before, "i").ranges);
}

#[test]
fn local_storage_shapes() {
    let base = ax_base(5);
    let field = PassRecipe::parse("map_expansion map=e\nmap_collapse outer=j inner=i\nmap_collapse outer=k inner=j\nlocal_storage array=ud outer=e inner=k")
        .unwrap()
        .apply(&base)
        .unwrap();
    let c = field.container("local_ud").unwrap();
    assert_eq!(c.storage, Storage::ScratchShared);
    assert_eq!(c.shape, vec![SymbolicSize::Constant(5); 3]);

    let matrix = PassRecipe::parse("map_expansion map=e2\nmap_collapse outer=j2 inner=i2\nmap_collapse outer=k2 inner=j2\nlocal_storage array=dxtd outer=e2 inner=k2")
        .unwrap()
        .apply(&base)
        .unwrap();
    assert_eq!(matrix.container("local_dxtd").unwrap().shape, vec![SymbolicSize::Constant(5); 2]);
}

#[test]
fn state_fusion_and_simplify_merge_states() {
    let g = ax_two_states(3);
    assert_eq!(g.states.len(), 2);
    let f = state_fusion(&g, 0, 1).unwrap();
    assert_eq!(f.states.len(), 1);
    assert_eq!(f.states[0].dependency_edges(), vec![(0, 1)]);
    assert_eq!(simplify(&g).unwrap(), f);
    assert!(state_fusion(&g, 1, 0).is_err());
}

#[test]
fn simplify_removes_orphans_and_is_idempotent() {
    let mut g = ax_base(3);
    let mut orphan = g.containers[0].clone();
    orphan.name = "orphan".into();
    orphan.transient = true;
    orphan.storage = Storage::HostHeap;
    g.containers.push(orphan);
    let s = simplify(&g).unwrap();
    assert!(s.container("orphan").is_none());
    assert_eq!(s, ax_base(3));
    assert_eq!(simplify(&s).unwrap(), s);
}

#[test]
fn device_transformations_are_idempotent() {
    let once = apply_device_transformations(&ax_base(3)).unwrap();
    assert_eq!(apply_device_transformations(&once).unwrap(), once);
    assert!(once.containers.iter().filter(|c| !c.transient).all(|c| c.storage == Storage::DeviceGlobal));
}

#[test]
fn recipe_postconditions() {
    for lx in 3..=8 {
        let g = build_ax_program(&SymbolicSize::sym("lx"), &SymbolicSize::sym("nel"));
        let r = ax_optimization_recipe(&g, lx).unwrap();
        assert!(validate(&r).is_empty());
        assert_eq!(r.count_schedule(Schedule::DeviceGrid), 1, "lx={lx}");
        assert_eq!(r.symbols, vec!["nel"]);
        for t in ["urtmp", "ustmp", "uttmp"] {
            let c = r.container(t).unwrap();
            assert_eq!(c.storage, Storage::ScratchShared);
            assert_eq!(c.shape, vec![SymbolicSize::Constant(lx as u64); 3]);
        }
        let scratch = r.containers.iter().filter(|c| c.storage == Storage::ScratchShared).count();
        assert!(scratch >= 7, "lx={lx}: {scratch}");
        assert!(scratch_report(&r, DEFAULT_SCRATCH_BUDGET).is_empty());
    }
}

#[test]
fn recipe_matches_oracle() {
    let lx = 8;
    let nel = 16;
    let g = build_ax_program(&SymbolicSize::sym("lx"), &SymbolicSize::sym("nel"));
    let r = ax_optimization_recipe(&g, lx as i64).unwrap();
    let basis = gll_basis(lx).unwrap();
    let u = ElementField::random(nel, lx, 3);
    let geo = random_spd_geometry(nel, lx, 4);
    let got = run_ax(&r, &u, &DerivativeMatrices::from_basis(&basis), &geo).unwrap();
    assert_eq!(got.data, ax_reference(&u, &basis, &geo).unwrap().data);
}

#[test]
fn recipe_on_constant_graph_checks_size() {
    let g = build_ax_program(&SymbolicSize::Constant(5), &SymbolicSize::sym("nel"));
    assert!(ax_optimization_recipe(&g, 5).is_ok());
    assert!(matches!(ax_optimization_recipe(&g, 6), Err(Error::Applicability { .. })));
}

#[test]
fn recipe_on_foreign_graph_fails_early() {
    let mut g = ax_base(3);
    for n in &mut g.states[0].nodes {
        if let Node::Map(m) = n {
            m.params[0] = format!("x{}", m.params[0]);
            let old = m.params[0][1..].to_string();
            let new = m.params[0].clone();
            rename_all(&mut m.body, &old, &new);
        }
    }
    assert!(validate(&g).is_empty(), "{:?}", validate(&g));
    match ax_optimization_recipe(&g, 3) {
        Err(Error::Applicability { step: Some(s), .. }) => assert!(s <= 2),
        other => panic!("{other:?}"),
    }
}

fn rename_all(nodes: &mut [Node], from: &str, to: &str) {
    for n in nodes {
        n.walk_mut(&mut |n| {
            if let Node::Tasklet(t) = n {
                for m in t.memlets_mut() {
                    for a in &mut m.subset {
                        *a = a.rename(from, to);
                    }
                }
            }
        });
    }
}

#[test]
fn recipe_text_round_trips() {
    let r = ax_recipe(8, true);
    let text = r.to_string();
    assert_eq!(PassRecipe::parse(&text).unwrap(), r);
    assert!(text.starts_with("apply_device_transformations\nmap_expansion map=e\n"));
    for (_, t) in applicable_cases(4).into_iter().chain(refused_cases()) {
        let p = PassRecipe::parse(&t).unwrap();
        assert_eq!(PassRecipe::parse(&p.to_string()).unwrap(), p);
    }
}

#[test]
fn recipe_parse_errors_carry_line() {
    for (text, line) in [
        ("simplify\nfrobnicate x=1", 2),
        ("map_tiling map=e tiles=a", 1),
        ("\n\nmap_expansion", 3),
        ("map_expansion map=e extra=1", 1),
        ("set_schedule map=e schedule=Warp", 1),
    ] {
        match PassRecipe::parse(text) {
            Err(Error::Parse { message, .. }) => assert!(message.starts_with(&format!("line {line}:")), "{message}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

/// Tasklet executions as variable tuples, ignoring tile indices.
fn iteration_multiset(g: &DataflowGraph, lx: usize, nel: usize) -> BTreeMap<Vec<(String, i64)>, usize> {
    let basis = gll_basis(lx).unwrap();
    let b = mdg_core::interp::ax_bindings(
        &ElementField::random(nel, lx, 1),
        &DerivativeMatrices::from_basis(&basis),
        &random_spd_geometry(nel, lx, 2),
    );
    let (_, rec) = execute_recording(g, &b).unwrap();
    let mut out = BTreeMap::new();
    for mut r in rec {
        r.retain(|(n, _)| !n.starts_with("tile_"));
        r.sort();
        *out.entry(r).or_insert(0) += 1;
    }
    out
}

#[test]
fn tiling_preserves_iteration_multiset() {
    let (lx, nel) = (5, 3);
    let base = ax_base(lx as i64);
    let want = iteration_multiset(&base, lx, nel);
    for recipe in [
        "map_tiling map=e tiles=2,3,4,5",
        "map_tiling map=e2 tiles=1,1,6,2",
        "strip_mining map=e param=j strip=2",
        "strip_mining map=e2 param=e2 strip=2",
        "warp_tiling map=e width=3",
    ] {
        let g = PassRecipe::parse(recipe).unwrap().apply(&base).unwrap();
        assert_eq!(iteration_multiset(&g, lx, nel), want, "{recipe}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_tiles_preserve_semantics(
        second in any::<bool>(),
        tiles in proptest::collection::vec(1i64..7, 4),
        seed in 0u64..1000,
    ) {
        let (lx, nel) = (4, 3);
        let base = ax_base(lx as i64);
        let name = if second { "e2" } else { "e" };
        let g = map_tiling(&base, &find_map_by_param(&base, name).unwrap(), &tiles).unwrap();
        prop_assert_eq!(iteration_multiset(&g, lx, nel), iteration_multiset(&base, lx, nel));
        prop_assert_eq!(output(&g, seed, lx, nel), output(&base, seed, lx, nel));
    }

    #[test]
    fn schedules_do_not_change_output(choice in proptest::collection::vec(0usize..3, 2), seed in 0u64..1000) {
        let base = ax_base(3);
        let mut g = base.clone();
        let options = [Schedule::Sequential, Schedule::CpuParallel, Schedule::DeviceGrid];
        for (n, c) in choice.iter().enumerate() {
            g.states[0].nodes[n].as_map_mut().unwrap().schedule = options[*c];
        }
        prop_assert!(validate(&g).is_empty());
        prop_assert_eq!(output(&g, seed, 3, 2), output(&base, seed, 3, 2));
    }
}
