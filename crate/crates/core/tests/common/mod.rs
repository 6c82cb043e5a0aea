use cashband::{feasibility_check, Diffusion, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` feasible parameter sets drawn from a fixed box; every fourth one is
/// mean-reverting.
pub fn random_matrix(n: usize, seed: u64) -> Vec<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let diffusion = if out.len() % 4 == 3 {
            Diffusion::Ou {
                eta: rng.random_range(0.05..1.0),
            }
        } else {
            Diffusion::Abm {
                alpha: rng.random_range(-2.0..2.0),
            }
        };
        let p = ModelParams {
            rho: rng.random_range(0.05..0.2),
            diffusion,
            sigma: rng.random_range(1.0..10.0),
            kappa: rng.random_range(0.0..1.0),
            c_neg: rng.random_range(0.5..2.0),
            c_pos: rng.random_range(0.5..2.0),
            l_cost: rng.random_range(0.5..5.0),
            u_cost: rng.random_range(0.5..5.0),
        };
        if feasibility_check(&p).passed() {
            out.push(p);
        }
    }
    out
}
