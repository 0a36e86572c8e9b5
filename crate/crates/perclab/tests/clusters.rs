use perclab::clusters::{build_clusters, connected_to_set, trifurcations_of, ClusterForest, OpenGraph};
use perclab::field::{ParamPoint, UniformField};
use perclab::lattice::{boundary_sets, sphere_size, Axis, ClassRule, EdgeClass, LatticeSpec, Region, MAX_D};
use proptest::prelude::*;
use std::collections::VecDeque;

fn open_flags(spec: &LatticeSpec, field: &UniformField, params: &ParamPoint) -> Vec<bool> {
    let th = params.units();
    let mut open = vec![false; spec.num_edge_slots()];
    spec.for_each_edge(|e, _, _, axis, class, base| {
        open[e] = th.open(field.raw(base, spec.d(), axis), class);
    });
    open
}

/// Component labels by plain BFS over an adjacency list.
fn bfs_labels(nv: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    let mut label = vec![usize::MAX; nv];
    let mut next = 0;
    for s in 0..nv {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = next;
                    q.push_back(w);
                }
            }
        }
        next += 1;
    }
    label
}

fn adjacency(spec: &LatticeSpec, open: &[bool], skip: Option<usize>) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); spec.num_vertices()];
    for e in spec.edges() {
        if !open[e] {
            continue;
        }
        let (v, w) = spec.endpoints(e).unwrap();
        if Some(v) == skip || Some(w) == skip {
            continue;
        }
        adj[v].push(w);
        adj[w].push(v);
    }
    adj
}

fn random_spec(d: usize, r: usize, periodic: bool) -> LatticeSpec {
    if periodic {
        let axes = (0..d).map(|_| Axis::periodic(0, 2 * r + 1)).collect();
        LatticeSpec::new(d, d - 1, axes, ClassRule::DefectSublattice).unwrap()
    } else {
        LatticeSpec::cube(d, d - 1, r, ClassRule::DefectSublattice).unwrap()
    }
}

#[test]
fn forest_matches_bfs_on_random_instances() {
    for i in 0..1000u64 {
        let d = 2 + (i % 2) as usize;
        let r = 1 + (i % 3) as usize;
        let spec = random_spec(d, r, i % 5 == 0);
        let field = UniformField::new(77, 1, i);
        let p = 0.2 + 0.6 * ((i * 37) % 100) as f64 / 100.0;
        let params = ParamPoint::new(p, 1.0 - p / 2.0).unwrap();
        let open = open_flags(&spec, &field, &params);
        let labels = bfs_labels(spec.num_vertices(), &adjacency(&spec, &open, None));
        let forest = build_clusters(&field, &spec, &params, None, None);
        let nv = spec.num_vertices();
        let n_labels = labels.iter().max().unwrap() + 1;
        assert_eq!(forest.component_count(), n_labels, "instance {i}");
        for v in 0..nv {
            let size = labels.iter().filter(|&&l| l == labels[v]).count();
            assert_eq!(forest.component_size(v), size);
            for w in (v..nv).step_by(3) {
                assert_eq!(forest.connected(v, w), labels[v] == labels[w], "instance {i}: {v} {w}");
            }
        }
    }
}

#[test]
fn region_restriction_ignores_outside_edges() {
    let spec = LatticeSpec::cube(2, 1, 3, ClassRule::DefectSublattice).unwrap();
    let all_open = |_: usize, _: &perclab::lattice::Point, _: usize, _: EdgeClass| true;
    let mut c = [0; MAX_D];
    c[0] = 1;
    let region = Region::ball(2, c, 1);
    let forest = ClusterForest::build(&spec, Some(&region), all_open);
    assert_eq!(forest.component_count(), 1);
    let inside = region.vertices(&spec);
    assert_eq!(inside.len(), 9);
    assert_eq!(forest.component_size(inside[0]), 9);
}

/// Delete-and-recount: v is a trifurcation iff removing it leaves at least
/// three pieces of its cluster that reach the free boundary.
fn brute_trifurcations(spec: &LatticeSpec, open: &[bool]) -> Vec<usize> {
    let nv = spec.num_vertices();
    let full = adjacency(spec, open, None);
    let mut out = Vec::new();
    for u in 0..nv {
        let adj = adjacency(spec, open, Some(u));
        let labels = bfs_labels(nv, &adj);
        let mut arms: Vec<usize> = full[u]
            .iter()
            .map(|&w| labels[w])
            .filter(|&l| (0..nv).any(|x| x != u && labels[x] == l && spec.on_free_face(x)))
            .collect();
        arms.sort_unstable();
        arms.dedup();
        if arms.len() >= 3 {
            out.push(u);
        }
    }
    out
}

#[test]
fn trifurcations_match_delete_and_recount() {
    let spec = LatticeSpec::cube(2, 1, 2, ClassRule::DefectSublattice).unwrap();
    let mut seen = 0;
    for i in 0..400u64 {
        let field = UniformField::new(5, 2, i);
        let p = 0.4 + 0.5 * (i % 10) as f64 / 10.0;
        let params = ParamPoint::new(p, p).unwrap();
        let open = open_flags(&spec, &field, &params);
        let graph = OpenGraph::build(&spec, |e, _, _, _| open[e]);
        let mut fast = trifurcations_of(&spec, &graph).vertices;
        fast.sort_unstable();
        let slow = brute_trifurcations(&spec, &open);
        assert_eq!(fast, slow, "instance {i}");
        seen += slow.len();
    }
    assert!(seen > 0, "some trifurcations should occur");
}

#[test]
fn connected_to_set_of_isolated_points() {
    let spec = LatticeSpec::cube(2, 1, 2, ClassRule::DefectSublattice).unwrap();
    let forest = ClusterForest::build(&spec, None, |_, _, _, _| false);
    let src: Vec<usize> = (0..5).collect();
    assert_eq!(connected_to_set(&forest, &src, &[2, 3, 17]), vec![2, 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coupling_is_monotone(seed in any::<u64>(), p in 0.0f64..1.0, q in 0.0f64..1.0, dp in 0.0f64..0.5, dq in 0.0f64..0.5) {
        let spec = LatticeSpec::cube(3, 2, 3, ClassRule::DefectSublattice).unwrap();
        let field = UniformField::new(seed, 0, 0);
        let lo = ParamPoint::new(p, q).unwrap();
        let hi = ParamPoint::new((p + dp).min(1.0), (q + dq).min(1.0)).unwrap();
        prop_assert!(lo.le(&hi));
        let a = open_flags(&spec, &field, &lo);
        let b = open_flags(&spec, &field, &hi);
        for e in spec.edges() {
            prop_assert!(!a[e] || b[e]);
        }
        let fa = build_clusters(&field, &spec, &lo, None, None);
        let fb = build_clusters(&field, &spec, &hi, None, None);
        for v in 0..spec.num_vertices() {
            prop_assert!(fa.component_size(v) <= fb.component_size(v));
        }
    }

    #[test]
    fn field_is_deterministic_and_box_independent(seed in any::<u64>(), stream in 0u64..8, sample in 0u64..1000) {
        let small = LatticeSpec::cube(2, 1, 2, ClassRule::DefectSublattice).unwrap();
        let big = LatticeSpec::cube(2, 1, 5, ClassRule::DefectSublattice).unwrap();
        let f1 = UniformField::new(seed, stream, sample);
        let f2 = UniformField::new(seed, stream, sample);
        small.for_each_edge(|_, v, _, axis, _, base| {
            let x = small.coords(v);
            assert_eq!(&x, base);
            assert_eq!(f1.raw(base, 2, axis), f2.raw(base, 2, axis));
            let vb = big.index_of(&x).unwrap();
            assert_eq!(big.coords(vb), x);
        });
        let other = UniformField::new(seed, stream + 1, sample);
        let mut differ = 0;
        small.for_each_edge(|_, _, _, axis, _, base| {
            if f1.raw(base, 2, axis) != other.raw(base, 2, axis) {
                differ += 1;
            }
        });
        prop_assert!(differ > 0);
    }

    #[test]
    fn connectivity_is_an_equivalence(seed in any::<u64>(), p in 0.2f64..0.8) {
        let spec = LatticeSpec::cube(2, 1, 3, ClassRule::DefectSublattice).unwrap();
        let field = UniformField::new(seed, 0, 0);
        let params = ParamPoint::new(p, p).unwrap();
        let f = build_clusters(&field, &spec, &params, None, None);
        let nv = spec.num_vertices();
        for a in 0..nv {
            prop_assert!(f.connected(a, a));
            for b in 0..nv {
                prop_assert_eq!(f.connected(a, b), f.connected(b, a));
                if f.connected(a, b) {
                    for c in 0..nv {
                        if f.connected(b, c) {
                            prop_assert!(f.connected(a, c));
                        }
                    }
                }
            }
        }
        let total: usize = f.components().iter().map(|&(_, s)| s).sum();
        prop_assert_eq!(total, nv);
    }

    #[test]
    fn boundary_sets_are_consistent(mask in prop::collection::vec(any::<bool>(), 25)) {
        let spec = LatticeSpec::cube(2, 1, 2, ClassRule::DefectSublattice).unwrap();
        let k: Vec<usize> = (0..25).filter(|&v| mask[v]).collect();
        let b = boundary_sets(&spec, &k, None);
        for v in &b.exterior_v {
            prop_assert!(!mask[*v]);
        }
        for v in &b.interior {
            prop_assert!(mask[*v]);
        }
        for &e in &b.exterior_e {
            let (v, w) = spec.endpoints(e).unwrap();
            prop_assert!(mask[v] != mask[w]);
            let inner = if mask[v] { v } else { w };
            let outer = if mask[v] { w } else { v };
            prop_assert!(b.interior.contains(&inner));
            prop_assert!(b.exterior_v.contains(&outer));
        }
        let crossing = spec.edges().filter(|&e| {
            let (v, w) = spec.endpoints(e).unwrap();
            mask[v] != mask[w]
        }).count();
        prop_assert_eq!(crossing, b.exterior_e.len());
    }

    #[test]
    fn classes_partition_edges(d in 2usize..5, r in 1usize..3) {
        let s = d - 1;
        let spec = LatticeSpec::cube(d, s, r, ClassRule::DefectSublattice).unwrap();
        let mut count = [0usize; 4];
        for e in spec.edges() {
            let (v, w) = spec.endpoints(e).unwrap();
            let (x, y) = (spec.coords(v), spec.coords(w));
            let class = spec.classify_edge(e).unwrap();
            let both_h = spec.vertex_in_h(v) && spec.vertex_in_h(w);
            prop_assert_eq!(class == EdgeClass::H, both_h);
            if !both_h {
                let top = x[d - 1].max(y[d - 1]);
                prop_assert_eq!(class == EdgeClass::Plus, top > 0);
                prop_assert_eq!(class == EdgeClass::Minus, top <= 0);
            }
            count[class as usize] += 1;
        }
        prop_assert_eq!(count.iter().sum::<usize>(), spec.num_edges());
        prop_assert_eq!(count[EdgeClass::Bulk as usize], 0);
    }

    #[test]
    fn trifurcations_bounded_by_shell(seed in any::<u64>(), n in 2usize..5, p in 0.3f64..0.9) {
        let spec = LatticeSpec::cube(3, 2, n, ClassRule::DefectSublattice).unwrap();
        let field = UniformField::new(seed, 0, 0);
        let params = ParamPoint::new(p, p).unwrap();
        let graph = OpenGraph::from_field(&field, &spec, &params);
        let report = trifurcations_of(&spec, &graph);
        prop_assert!(report.count() as u64 <= sphere_size(3, n as u64));
    }
}
