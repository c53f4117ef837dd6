use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmheal::perception::{EdgeKind, NodeKind, ObservedWorld, Perceiver, PerceptionConfig, FEATURE_DIM};
use swarmheal::Vec2;

fn config(k_act: usize, k_dmg: usize, width: f64) -> PerceptionConfig {
    PerceptionConfig { k_act, k_dmg, w_scale: width, d_comm: 120.0, v_max: 10.0, dt: 0.1, type_embedding_dim: 8 }
}

fn random_world(rng: &mut ChaCha8Rng, n: usize, width: f64) -> ObservedWorld {
    // Some worlds are snapped to a coarse lattice so exact distance ties occur.
    let lattice = rng.random_bool(0.3);
    world_with(rng, n, width, lattice)
}

fn world_with(rng: &mut ChaCha8Rng, n: usize, width: f64, lattice: bool) -> ObservedWorld {
    let positions: Vec<Vec2> = (0..n)
        .map(|_| {
            let (x, y): (f64, f64) = (rng.random_range(0.0..width), rng.random_range(0.0..width));
            if lattice {
                Vec2::new((x / 40.0).round() * 40.0, (y / 40.0).round() * 40.0)
            } else {
                Vec2::new(x, y)
            }
        })
        .collect();
    let mut alive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    alive[0] = true;
    let velocities =
        (0..n).map(|i| if alive[i] { Vec2::new(rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0)) } else { Vec2::ZERO }).collect();
    ObservedWorld { positions, velocities, alive, center: Vec2::new(width / 2.0, width / 2.0), agent_centers: None }
}

/// Sort every candidate by (squared distance, index) and keep the first k.
fn brute_force(world: &ObservedWorld, i: usize, k: usize, want_alive: bool, d_comm: f64) -> Vec<usize> {
    let p = world.positions[i];
    let mut c: Vec<(f64, usize)> = (0..world.positions.len())
        .filter(|&j| j != i && world.alive[j] == want_alive)
        .map(|j| (world.positions[j].dist_sq(p), j))
        .filter(|&(d2, _)| d2 <= d_comm * d_comm)
        .collect();
    c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    c.into_iter().take(k).map(|(_, j)| j).collect()
}

#[test]
fn knn_selection_matches_brute_force_on_600_worlds() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for _ in 0..600 {
        let n = rng.random_range(2..60);
        let width = rng.random_range(100.0..600.0);
        let world = random_world(&mut rng, n, width);
        let cfg = config(rng.random_range(1..10), rng.random_range(0..5), width);
        let p = Perceiver::new(&world, &cfg);
        for i in (0..n).filter(|&i| world.alive[i]) {
            assert_eq!(p.selected_active(i), brute_force(&world, i, cfg.k_act, true, cfg.d_comm));
            assert_eq!(p.selected_damaged(i), brute_force(&world, i, cfg.k_dmg, false, cfg.d_comm));
            let g = p.local_graph(i);
            let ego_in: Vec<_> = g.edges.iter().filter(|e| e.dst == g.ego).collect();
            assert_eq!(ego_in.len(), p.selected_active(i).len() + p.selected_damaged(i).len() + 1);
            assert!(g.in_degrees().iter().all(|&d| d <= cfg.delta_in_max()));
            checked += 1;
        }
    }
    assert!(checked >= 600);
}

#[test]
fn local_graph_bounds_do_not_grow_with_swarm_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut maxima = Vec::new();
    for (n, width) in [(20, 320.0), (500, 1600.0)] {
        // A dense world so every budget can saturate.
        let mut world = random_world(&mut rng, n, width / 4.0);
        world.alive.iter_mut().enumerate().for_each(|(i, a)| *a = i % 3 != 0);
        let cfg = config(8, 3, width);
        let graphs = Perceiver::new(&world, &cfg).local_graphs();
        let nodes = graphs.iter().map(|(_, g)| g.nodes.len()).max().unwrap();
        let dim = graphs[0].1.nodes[0].x.len();
        assert!(nodes <= 1 + 8 + 3 + 1);
        maxima.push((nodes, dim));
    }
    assert_eq!(maxima[0], maxima[1]);
    assert_eq!(maxima[0].1, FEATURE_DIM);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_leaves_features_unchanged(seed in 0u64..10_000, tx in -1e3f64..1e3, ty in -1e3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Off-lattice: a shift may round exact distance ties either way.
        let world = world_with(&mut rng, 25, 400.0, false);
        let shift = Vec2::new(tx, ty);
        let moved = ObservedWorld {
            positions: world.positions.iter().map(|&p| p + shift).collect(),
            center: world.center + shift,
            ..world.clone()
        };
        let cfg = config(8, 3, 400.0);
        let a = Perceiver::new(&world, &cfg).local_graphs();
        let b = Perceiver::new(&moved, &cfg).local_graphs();
        prop_assert_eq!(a.len(), b.len());
        for ((ia, ga), (ib, gb)) in a.iter().zip(&b) {
            prop_assert_eq!(ia, ib);
            prop_assert_eq!(&ga.edges, &gb.edges);
            for (na, nb) in ga.nodes.iter().zip(&gb.nodes) {
                for k in 0..FEATURE_DIM {
                    prop_assert!((na.x[k] - nb.x[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn features_stay_in_the_compact_box(seed in 0u64..10_000, k_act in 1usize..10, k_dmg in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let world = random_world(&mut rng, 40, 300.0);
        let cfg = config(k_act, k_dmg, 300.0);
        for (_, g) in Perceiver::new(&world, &cfg).local_graphs() {
            for node in &g.nodes {
                let v = Vec2::new(node.x[2], node.x[3]).norm();
                prop_assert!(v <= 1.0 + 1e-12);
                prop_assert!((0.0..=1.0).contains(&node.x[4]));
                prop_assert!(node.x[0].abs() <= 1.0 && node.x[1].abs() <= 1.0);
                if node.kind != NodeKind::Active {
                    prop_assert_eq!(v, 0.0);
                }
            }
            for e in &g.edges {
                prop_assert_eq!(g.nodes[e.dst].kind, NodeKind::Active);
                prop_assert_eq!(e.kind, EdgeKind::from_source(g.nodes[e.src].kind));
            }
        }
    }
}
