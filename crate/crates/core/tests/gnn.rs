use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmheal::geom::Vec2;
use swarmheal::gnn::{
    squashed_log_prob, Actor, ActorConfig, Aggregation, Critic, CriticConfig, Discriminator, DiscriminatorConfig, EncoderConfig, GateMode,
    GraphBatch, LogStdMode, ModelConfig, Models, PhyGnn,
};
use swarmheal::nn::{Matrix, Parameters, ParametersExt};
use swarmheal::perception::{Edge, EdgeKind, LocalGraph, ObservedWorld, Perceiver, PerceptionConfig, SwarmGraph};
use swarmheal::sim::{generate_scenario, ActMode, SwarmState};

fn tiny(aggregation: Aggregation, gates: GateMode) -> EncoderConfig {
    EncoderConfig { hidden: 4, layers: 2, emb_dim: 2, mlp_width: 5, mlp_depth: 2, gates, aggregation }
}

fn world(seed: u64, n: usize) -> (ObservedWorld, PerceptionConfig) {
    let sc = generate_scenario(n, 0.4, swarmheal::sim::default_map_width(n), seed).unwrap();
    let mut state = SwarmState::from_scenario(&sc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (v, a) in state.velocities.iter_mut().zip(&state.alive) {
        if *a {
            *v = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        }
    }
    (ObservedWorld::exact(&state, sc.virtual_center), PerceptionConfig::for_scenario(&sc).with_budgets(3, 2))
}

fn local_graphs(seed: u64, n: usize) -> Vec<LocalGraph> {
    let (w, cfg) = world(seed, n);
    Perceiver::new(&w, &cfg).local_graphs().into_iter().map(|(_, g)| g).collect()
}

fn swarm_graph(seed: u64, n: usize) -> SwarmGraph {
    let (w, cfg) = world(seed, n);
    Perceiver::new(&w, &cfg).swarm_graph()
}

/// Zero-initialized biases put many pre-activations exactly on ReLU kinks,
/// where one-sided and central differences disagree; jitter them away.
fn jitter<M: Parameters>(m: &mut M, rng: &mut ChaCha8Rng) {
    m.visit_mut("", &mut |_, v| v.iter_mut().for_each(|x| *x += rng.random_range(-0.1..0.1)));
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares analytic parameter gradients of a scalar loss against central
/// differences on every parameter; returns the worst relative error.
fn check<M: Parameters + Clone>(model: &M, analytic: &M, loss: impl Fn(&M) -> f64) -> f64 {
    let h = 1e-5;
    let base = model.to_flat();
    let a = analytic.to_flat();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += h;
        let mut plus = model.clone();
        plus.copy_from_flat(&p).unwrap();
        p[i] -= 2.0 * h;
        let mut minus = model.clone();
        minus.copy_from_flat(&p).unwrap();
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        worst = worst.max(rel_err(a[i], numeric));
    }
    worst
}

#[test]
fn actor_gradients_match_finite_differences() {
    for (k, (agg, gates)) in [
        (Aggregation::Physics, GateMode::Both),
        (Aggregation::Physics, GateMode::NoAttraction),
        (Aggregation::Physics, GateMode::NoRepulsion),
        (Aggregation::Mean, GateMode::Both),
    ]
    .into_iter()
    .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + k as u64);
        let log_std = if k % 2 == 0 { LogStdMode::Constant } else { LogStdMode::Head };
        let cfg = ActorConfig { encoder: tiny(agg, gates), head_width: 3, log_std, log_std_init: -0.5, v_max: 10.0 };
        let mut actor = Actor::new(&cfg, &mut rng).unwrap();
        jitter(&mut actor, &mut rng);
        let graphs = local_graphs(3 + k as u64, 12);
        let batch = GraphBatch::from_local(&graphs[..3]).unwrap();
        let wm = Matrix::from_vec(3, 2, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect());
        let ws = Matrix::from_vec(3, 2, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect());
        let loss = |a: &Actor| {
            let e = a.evaluate(&batch).unwrap();
            let dot = |x: &Matrix, w: &Matrix| x.data().iter().zip(w.data()).map(|(p, q)| p * q).sum::<f64>();
            dot(&e.mean, &wm) + dot(&e.log_std, &ws)
        };
        let eval = actor.evaluate(&batch).unwrap();
        let mut g = actor.zeros_like();
        actor.backward(&batch, &eval, &wm, &ws, &mut g).unwrap();
        let worst = check(&actor, &g, loss);
        assert!(worst < 1e-4, "{agg:?}/{gates:?}: worst relative error {worst}");
    }
}

#[test]
fn critic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut critic = Critic::new(&CriticConfig { encoder: tiny(Aggregation::Physics, GateMode::Both), head_width: 3 }, &mut rng).unwrap();
    jitter(&mut critic, &mut rng);
    let graphs = [swarm_graph(4, 10), swarm_graph(5, 10)];
    let batch = GraphBatch::from_swarm(&graphs).unwrap();
    let w: Vec<f64> = (0..batch.readout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |c: &Critic| c.values(&batch).unwrap().iter().zip(&w).map(|(v, q)| v * q).sum::<f64>();
    let eval = critic.evaluate(&batch).unwrap();
    let mut g = critic.zeros_like();
    critic.backward(&batch, &eval, &w, &mut g).unwrap();
    let worst = check(&critic, &g, loss);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let cfg = DiscriminatorConfig { encoder: tiny(Aggregation::Physics, GateMode::Both), width: 3, v_max: 10.0, zero_head: false };
    let mut disc = Discriminator::new(&cfg, &mut rng).unwrap();
    jitter(&mut disc, &mut rng);
    let graphs = local_graphs(6, 12);
    let batch = GraphBatch::from_local(&graphs[..4]).unwrap();
    let actions: Vec<Vec2> = (0..4).map(|_| Vec2::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0))).collect();
    let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |d: &Discriminator| d.evaluate(&batch, &actions).unwrap().logits.iter().zip(&w).map(|(v, q)| v * q).sum::<f64>();
    let eval = disc.evaluate(&batch, &actions).unwrap();
    let mut g = disc.zeros_like();
    disc.backward(&batch, &eval, &w, &mut g).unwrap();
    let worst = check(&disc, &g, loss);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn gates_and_strength_stay_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let enc = PhyGnn::new(&EncoderConfig::small(16, 3), &mut rng).unwrap();
    for seed in 0..5 {
        let graphs = local_graphs(seed, 30);
        let batch = GraphBatch::from_local(&graphs).unwrap();
        let (_, tape) = enc.forward(&batch).unwrap();
        for tr in &tape.layers {
            assert!(tr.gates.data().iter().all(|g| (0.0..=1.0).contains(g)));
            assert!(tr.strength.iter().all(|s| *s > 0.0));
            for (r, c) in tr.coef.iter().enumerate() {
                let fnorm: f64 = tr.f.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((c * fnorm).abs() <= fnorm * tr.strength[r] + 1e-12);
            }
        }
    }
}

#[test]
fn balanced_gates_cancel_messages() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut enc = PhyGnn::new(&EncoderConfig::small(8, 2), &mut rng).unwrap();
    for l in &mut enc.layers {
        let last = l.gate.as_mut().unwrap().layers_mut().last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.3);
    }
    let batch = GraphBatch::from_local(&local_graphs(1, 20)).unwrap();
    let (_, tape) = enc.forward(&batch).unwrap();
    for tr in &tape.layers {
        assert!(tr.coef.iter().all(|c| *c == 0.0));
        assert!(tr.aggregated.data().iter().all(|v| *v == 0.0));
    }
}

fn star(edges: Vec<Edge>) -> LocalGraph {
    let mut g = local_graphs(2, 20).into_iter().max_by_key(|g| g.edges.len()).unwrap();
    g.edges = edges;
    g
}

#[test]
fn in_edge_order_does_not_change_embeddings() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let enc = PhyGnn::new(&EncoderConfig::small(8, 3), &mut rng).unwrap();
    let g = local_graphs(2, 20).into_iter().max_by_key(|g| g.edges.len()).unwrap();
    let mut shuffled = g.clone();
    shuffled.edges.reverse();
    shuffled.edges.swap(0, 1);
    let a = enc.embed(&GraphBatch::from_local(&[g]).unwrap()).unwrap();
    let b = enc.embed(&GraphBatch::from_local(&[shuffled]).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn isolated_node_gets_zero_message_and_duplicates_add_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut enc = PhyGnn::new(&EncoderConfig::small(8, 1), &mut rng).unwrap();
    jitter(&mut enc, &mut rng);
    let center = |g: &LocalGraph| g.nodes.len() - 1;
    let base = star(vec![]);
    let c = center(&base);
    let once = star(vec![Edge { src: c, dst: 0, kind: EdgeKind::CenterActive }]);
    let twice = star(vec![Edge { src: c, dst: 0, kind: EdgeKind::CenterActive }; 2]);
    let agg = |g: &LocalGraph| enc.forward(&GraphBatch::from_local(std::slice::from_ref(g)).unwrap()).unwrap().1.layers[0].aggregated.clone();
    let (a0, a1, a2) = (agg(&base), agg(&once), agg(&twice));
    assert!(a0.data().iter().all(|v| *v == 0.0));
    for (x, y) in a1.row(0).iter().zip(a2.row(0)) {
        assert!((2.0 * x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
    assert!(a1.row(0).iter().any(|v| *v != 0.0));
}

#[test]
fn zero_parameters_give_zero_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut actor =
        Actor::new(&ActorConfig { encoder: EncoderConfig::small(8, 2), head_width: 8, ..Default::default() }, &mut rng).unwrap();
    actor.fill(0.0);
    let graphs = local_graphs(3, 20);
    let refs: Vec<&LocalGraph> = graphs.iter().collect();
    for o in actor.act_graphs(&refs, ActMode::Deterministic, &mut rng).unwrap() {
        assert_eq!(o.action, Vec2::ZERO);
    }
}

#[test]
fn squashed_actions_never_reach_v_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut actor =
        Actor::new(&ActorConfig { encoder: EncoderConfig::small(8, 1), head_width: 8, ..Default::default() }, &mut rng).unwrap();
    let last = actor.mean_head.layers_mut().last_mut().unwrap();
    last.weight.fill(0.0);
    last.bias.copy_from_slice(&[1e6, 0.0]);
    let graphs = local_graphs(3, 20);
    let refs: Vec<&LocalGraph> = graphs.iter().collect();
    for o in actor.act_graphs(&refs, ActMode::Stochastic, &mut rng).unwrap() {
        assert!(o.action.x <= 10.0 && o.action.x > 9.999);
        assert!(o.action.x.abs() <= 10.0 && o.action.y.abs() < 10.0);
    }
}

#[test]
fn log_prob_matches_sampled_density() {
    let (mean, log_std, v_max): ([f64; 2], [f64; 2], f64) = ([0.3, -0.6], [-0.2, 0.1], 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let n = 100_000;
    let bins = 6;
    let edge = |k: usize| -v_max + 2.0 * v_max * k as f64 / bins as f64;
    let mut counts = vec![0usize; bins * bins];
    for _ in 0..n {
        let u: [f64; 2] = std::array::from_fn(|k| mean[k] + log_std[k].exp() * rng.sample::<f64, _>(rand_distr::StandardNormal));
        let a = [v_max * u[0].tanh(), v_max * u[1].tanh()];
        let bx = (((a[0] + v_max) / (2.0 * v_max) * bins as f64) as usize).min(bins - 1);
        let by = (((a[1] + v_max) / (2.0 * v_max) * bins as f64) as usize).min(bins - 1);
        counts[by * bins + bx] += 1;
    }
    // Midpoint integration of exp(log_prob) over each bin.
    let sub = 60;
    for by in 0..bins {
        for bx in 0..bins {
            let (x0, y0) = (edge(bx), edge(by));
            let w = 2.0 * v_max / bins as f64 / sub as f64;
            let mut mass = 0.0;
            for i in 0..sub {
                for j in 0..sub {
                    let a = [x0 + (i as f64 + 0.5) * w, y0 + (j as f64 + 0.5) * w];
                    let u = [(a[0] / v_max).atanh(), (a[1] / v_max).atanh()];
                    mass += squashed_log_prob(u, mean, log_std, v_max).exp() * w * w;
                }
            }
            let p = counts[by * bins + bx] as f64 / n as f64;
            let se = (mass * (1.0 - mass) / n as f64).sqrt().max(1e-4);
            assert!((p - mass).abs() < 5.0 * se + 2e-3 * mass, "bin ({bx},{by}): sampled {p}, integrated {mass}");
        }
    }
}

#[test]
fn single_active_pools_to_itself_and_damaged_nodes_are_masked() {
    let emb = Matrix::from_rows(&[[1.0, -2.0], [100.0, 100.0]]);
    let (mean, max, _) = swarmheal::gnn::masked_pool(&emb, &[0]);
    assert_eq!(mean, vec![1.0, -2.0]);
    assert_eq!(max, vec![1.0, -2.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let critic = Critic::new(&CriticConfig { encoder: EncoderConfig::small(8, 2), head_width: 8 }, &mut rng).unwrap();
    let g = swarm_graph(7, 16);
    let mut extra = g.clone();
    let mut far = extra.nodes[extra.agents.len()].clone();
    far.kind = swarmheal::perception::NodeKind::Damaged;
    far.x = [5.0, 5.0, 0.0, 0.0, 0.0];
    // A damaged node that nobody selected: present, but with no edges.
    extra.nodes.insert(extra.nodes.len() - 1, far);
    let c_old = g.nodes.len() - 1;
    for e in &mut extra.edges {
        if e.src == c_old {
            e.src += 1;
        }
    }
    let a = critic.values(&GraphBatch::from_swarm(&[g]).unwrap()).unwrap();
    let b = critic.values(&GraphBatch::from_swarm(&[extra]).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn critic_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(38);
    let critic = Critic::new(&CriticConfig { encoder: EncoderConfig::small(8, 2), head_width: 8 }, &mut rng).unwrap();
    let g = swarm_graph(8, 20);
    let na = g.agents.len();
    let mut perm: Vec<usize> = (0..na).collect();
    perm.reverse();
    // perm[old] = new position of old active node
    let map = |i: usize| if i < na { perm[i] } else { i };
    let mut p = g.clone();
    for (old, node) in g.nodes.iter().enumerate().take(na) {
        p.nodes[map(old)] = node.clone();
        p.agents[map(old)] = g.agents[old];
    }
    for e in &mut p.edges {
        e.src = map(e.src);
        e.dst = map(e.dst);
    }
    let a = critic.values(&GraphBatch::from_swarm(&[g]).unwrap()).unwrap();
    let b = critic.values(&GraphBatch::from_swarm(&[p]).unwrap()).unwrap();
    for old in 0..na {
        assert!((a[old] - b[map(old)]).abs() < 1e-10);
    }
}

#[test]
fn zero_head_discriminator_scores_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(39);
    let cfg = DiscriminatorConfig { encoder: EncoderConfig::small(8, 2), width: 8, v_max: 10.0, zero_head: true };
    let disc = Discriminator::new(&cfg, &mut rng).unwrap();
    let graphs = local_graphs(9, 20);
    let batch = GraphBatch::from_local(&graphs).unwrap();
    let acts: Vec<Vec2> = (0..graphs.len()).map(|k| Vec2::new(k as f64 - 3.0, 1.0)).collect();
    assert!(disc.scores(&batch, &acts).unwrap().iter().all(|s| *s == 0.5));

    let fresh = Discriminator::new(&DiscriminatorConfig { zero_head: false, ..cfg }, &mut rng).unwrap();
    assert!(fresh.scores(&batch, &acts).unwrap().iter().all(|s| *s > 0.0 && *s < 1.0));
    let unit = fresh.normalized_actions(&[Vec2::new(6.0, 8.0)]);
    assert!((unit.row(0)[0].hypot(unit.row(0)[1]) - 1.0).abs() < 1e-15);
}

#[test]
fn default_actor_size_and_bundle_round_trip() {
    let models = Models::new(&ModelConfig::default(), 1).unwrap();
    let n = models.actor_param_count();
    assert!((100_000..1_000_000).contains(&n), "actor has {n} parameters");

    let small = Models::new(&ModelConfig::uniform(EncoderConfig::small(8, 2), 8, 10.0), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    small.save(&path, serde_json::json!({"epoch": 1})).unwrap();
    let (back, header) = Models::load(&path).unwrap();
    assert_eq!(back, small);
    assert_eq!(header.param_count, small.param_count());
}
