use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::perception::ObservedWorld;
use crate::sim::{comm_graph_of, components};

/// Perturbs every observed position (alive and damaged agents) with i.i.d.
/// `N(0, sigma^2)` per coordinate, and gives each connected subnet of alive
/// agents its own noisy copy of the virtual center. The input is not
/// modified. `sigma == 0` returns an exact copy without touching `rng`.
pub fn inject_position_noise<R: Rng + ?Sized>(world: &ObservedWorld, sigma: f64, d_comm: f64, rng: &mut R) -> Result<ObservedWorld> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(world.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut out = world.clone();
    for p in &mut out.positions {
        *p += Vec2::new(normal.sample(rng), normal.sample(rng));
    }
    // Subnets are determined by the true geometry: a subnet shares one estimate.
    let g = comm_graph_of(&world.positions, &world.alive, d_comm);
    let (count, labels) = components(&g.adjacency);
    let centers: Vec<Vec2> = (0..count).map(|_| world.center + Vec2::new(normal.sample(rng), normal.sample(rng))).collect();
    let mut per_agent = vec![world.center; world.positions.len()];
    for (k, &agent) in g.agents.iter().enumerate() {
        per_agent[agent] = centers[labels[k]];
    }
    out.agent_centers = Some(per_agent);
    Ok(out)
}

/// Seeded wrapper around [`inject_position_noise`].
pub fn inject_position_noise_seeded(world: &ObservedWorld, sigma: f64, d_comm: f64, seed: u64) -> Result<ObservedWorld> {
    inject_position_noise(world, sigma, d_comm, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> ObservedWorld {
        ObservedWorld {
            positions: vec![Vec2::new(0.0, 0.0), Vec2::new(50.0, 0.0), Vec2::new(900.0, 0.0), Vec2::new(10.0, 40.0)],
            velocities: vec![Vec2::ZERO; 4],
            alive: vec![true, true, true, false],
            center: Vec2::new(400.0, 0.0),
            agent_centers: None,
        }
    }

    #[test]
    fn zero_sigma_is_identity() {
        let w = world();
        assert_eq!(inject_position_noise_seeded(&w, 0.0, 120.0, 3).unwrap(), w);
    }

    #[test]
    fn negative_sigma_is_rejected() {
        assert!(inject_position_noise_seeded(&world(), -1.0, 120.0, 3).is_err());
    }

    #[test]
    fn subnets_see_different_centers_but_share_within() {
        let w = world();
        let n = inject_position_noise_seeded(&w, 5.0, 120.0, 11).unwrap();
        let c = n.agent_centers.unwrap();
        assert_eq!(c[0], c[1]);
        assert_ne!(c[0], c[2]);
        assert_ne!(c[0], w.center);
        assert_ne!(n.positions[3], w.positions[3]);
    }

    #[test]
    fn empirical_std_matches_sigma() {
        let w = ObservedWorld {
            positions: vec![Vec2::ZERO; 1000],
            velocities: vec![Vec2::ZERO; 1000],
            alive: vec![false; 1000],
            center: Vec2::ZERO,
            agent_centers: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xs = Vec::with_capacity(100_000);
        for _ in 0..50 {
            let n = inject_position_noise(&w, 10.0, 120.0, &mut rng).unwrap();
            xs.extend(n.positions.iter().flat_map(|p| [p.x, p.y]));
        }
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((sd - 10.0).abs() < 0.2, "sd {sd}");
    }
}
