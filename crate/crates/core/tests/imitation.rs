use rand_chacha::ChaCha8Rng;
use swarmheal::baselines::{center_fly_action, CenterFly, PotentialField};
use swarmheal::imitation::{build_expert_db, d4_augment, pairs_from_frames, ExpertDb, D4};
use swarmheal::perception::{LocalGraph, PerceptionConfig};
use swarmheal::sim::{default_map_width, generate_scenario, run_episode, ActMode, EpisodeOptions, Policy, Scenario};
use swarmheal::{Error, Vec2};

fn scenarios(n: usize, count: u64) -> Vec<Scenario> {
    (0..count).map(|s| generate_scenario(n, 0.5, default_map_width(n), 100 + s).unwrap()).collect()
}

/// Center-fly under another name, to create exact ties.
struct Renamed(&'static str);
impl Policy for Renamed {
    fn name(&self) -> String {
        self.0.into()
    }
    fn act(&self, g: &LocalGraph, _: ActMode, _: &mut ChaCha8Rng) -> Vec2 {
        center_fly_action(g)
    }
}

struct Still;
impl Policy for Still {
    fn name(&self) -> String {
        "still".into()
    }
    fn act(&self, _: &LocalGraph, _: ActMode, _: &mut ChaCha8Rng) -> Vec2 {
        Vec2::ZERO
    }
}

#[test]
fn database_keeps_the_fastest_converged_demonstration() {
    let scs = scenarios(12, 6);
    let cf = CenterFly;
    let pf = PotentialField::default();
    let db = build_expert_db(&scs, &[&cf, &pf], None).unwrap();
    for sc in &scs {
        let opts = EpisodeOptions { seed: sc.seed, ..Default::default() };
        let runs: Vec<_> = [&cf as &dyn Policy, &pf].iter().map(|p| run_episode(sc, *p, &opts).unwrap()).collect();
        let best = runs.iter().filter(|r| r.converged).map(|r| r.recovery_steps).min();
        match best {
            Some(t) => {
                let rec = db.record(&sc.id).unwrap();
                assert_eq!(rec.t_e, t);
                let winner = runs.iter().find(|r| r.converged && r.recovery_steps == t).unwrap();
                assert_eq!(rec.generator, winner.policy);
                assert_eq!(rec.frames, winner.trajectory.frames);
            }
            None => assert!(db.uncovered.contains(&sc.id)),
        }
    }
}

#[test]
fn ties_go_to_the_earlier_generator() {
    let scs = scenarios(10, 3);
    let db = build_expert_db(&scs, &[&Renamed("first"), &Renamed("second")], None).unwrap();
    assert!(!db.records.is_empty());
    assert!(db.records.iter().all(|r| r.generator == "first"));
}

#[test]
fn uncovered_scenarios_are_listed_and_empty_db_is_an_error() {
    let scs = scenarios(10, 3);
    match build_expert_db(&scs, &[&Still], None) {
        Err(Error::EmptyExpertDb { uncovered }) => assert_eq!(uncovered, 3),
        other => panic!("expected an empty-database error, got {other:?}"),
    }
    assert!(matches!(build_expert_db(&scs, &[], None), Err(Error::Config(_))));
}

#[test]
fn expert_actions_are_the_applied_velocities() {
    let scs = scenarios(10, 2);
    let db = build_expert_db(&scs, &[&CenterFly], None).unwrap();
    for rec in &db.records {
        assert_eq!(rec.pairs.len(), (rec.frames.len() - 1) * rec.frames[0].alive_count());
        for p in &rec.pairs {
            assert_eq!(p.action, rec.frames[p.t + 1].velocities[p.agent]);
            assert_eq!(p.graph.nodes[p.graph.ego].agent, Some(p.agent));
        }
    }
}

#[test]
fn save_and_load_round_trip_exactly() {
    let scs = scenarios(10, 4);
    let db = build_expert_db(&scs, &[&CenterFly, &PotentialField::default()], None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    db.save(dir.path()).unwrap();
    assert_eq!(ExpertDb::load(dir.path()).unwrap(), db);
}

fn pairwise(f: &swarmheal::sim::SwarmState) -> Vec<f64> {
    let n = f.positions.len();
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| f.positions[i].dist(f.positions[j])).collect()
}

#[test]
fn every_symmetric_variant_preserves_all_distances() {
    let scs = scenarios(20, 4);
    let db = build_expert_db(&scs, &[&CenterFly], None).unwrap();
    for rec in &db.records {
        let variants = d4_augment(rec);
        assert_eq!(variants.len(), 8);
        assert_eq!(variants[0], *rec);
        for v in &variants[1..] {
            for (a, b) in rec.frames.iter().zip(&v.frames) {
                for (da, db) in pairwise(a).iter().zip(pairwise(b)) {
                    assert!((da - db).abs() <= 1e-9);
                }
                for (va, vb) in a.velocities.iter().zip(&b.velocities) {
                    assert!((va.norm() - vb.norm()).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn perception_commutes_with_the_symmetries() {
    let scs = scenarios(15, 2);
    let db = build_expert_db(&scs, &[&CenterFly], None).unwrap();
    let pcfg = PerceptionConfig::for_scenario(&scs[0]);
    for rec in &db.records {
        for v in d4_augment(rec) {
            // Observing the transformed world equals transforming the observations.
            let observed = pairs_from_frames(&v.frames, v.center, &pcfg);
            assert_eq!(observed.len(), v.pairs.len());
            for (o, p) in observed.iter().zip(&v.pairs) {
                assert_eq!(o.graph.edges, p.graph.edges);
                for (a, b) in o.graph.nodes.iter().zip(&p.graph.nodes) {
                    assert!(a.x.iter().zip(&b.x).all(|(x, y)| (x - y).abs() < 1e-9));
                }
                assert!((o.action - p.action).norm() < 1e-9);
            }
        }
    }
}

#[test]
fn the_eight_symmetries_form_a_group() {
    let all = D4::all();
    for a in all {
        assert!(all.contains(&a.inverse()));
        assert_eq!(a.compose(a.inverse()), D4::IDENTITY);
        for b in all {
            assert!(all.contains(&a.compose(b)));
            let p = Vec2::new(3.25, -1.5);
            let lhs = a.compose(b).apply(p);
            let rhs = a.apply(b.apply(p));
            assert_eq!(lhs, rhs);
        }
    }
}
