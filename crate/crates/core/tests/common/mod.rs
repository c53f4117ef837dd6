//! Helpers shared by the integration test targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmheal::nn::{Activation, DenseNet, DenseSpec, Matrix, ParametersExt};

pub const ALL_ACTIVATIONS: [Activation; 6] =
    [Activation::Relu, Activation::LeakyRelu, Activation::Sigmoid, Activation::Softplus, Activation::Tanh, Activation::Identity];

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect())
}

/// Scalar loss `sum(y * weights)` so that `dL/dy = weights`.
fn loss(net: &DenseNet, x: &Matrix, w: &Matrix) -> f64 {
    net.infer(x).unwrap().data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn near_kink(net: &DenseNet, x: &Matrix) -> bool {
    let (_, tape) = net.forward(x).unwrap();
    net.layers()
        .iter()
        .enumerate()
        .any(|(k, l)| l.activation.has_kink_at_zero() && tape.pre_activation(k).data().iter().any(|z| z.abs() < 1e-3))
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub struct GradCheck {
    pub nets: usize,
    pub checked: usize,
    pub worst: f64,
    /// `(case, what)` of the worst entry.
    pub worst_at: (usize, String),
}

/// Backward pass against central differences with step `h` on `nets`
/// random dense nets, covering parameters and inputs. Inputs that land
/// within 1e-3 of a ReLU kink are redrawn.
pub fn gradient_check(nets: usize, h: f64, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradCheck { nets, checked: 0, worst: 0.0, worst_at: (0, String::new()) };
    let record = |out: &mut GradCheck, e: f64, case: usize, what: String| {
        out.checked += 1;
        if e > out.worst {
            out.worst = e;
            out.worst_at = (case, what);
        }
    };
    for case in 0..nets {
        let depth = rng.random_range(1..=3);
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=6)).collect();
        // Cycle through every activation so each one is exercised in every position.
        let acts: Vec<Activation> = (0..depth).map(|k| ALL_ACTIVATIONS[(case + k) % ALL_ACTIVATIONS.len()]).collect();
        let net = DenseNet::new(&DenseSpec::new(&sizes, &acts), &mut rng);
        let mut x = random_matrix(&mut rng, 3, sizes[0]);
        let mut tries = 0;
        while near_kink(&net, &x) {
            x = random_matrix(&mut rng, 3, sizes[0]);
            tries += 1;
            assert!(tries < 1000, "could not avoid kinks");
        }
        let w = random_matrix(&mut rng, 3, *sizes.last().unwrap());
        let (_, tape) = net.forward(&x).unwrap();
        let mut grads = net.zeros_like();
        let dx = net.backward(&tape, &w, &mut grads).unwrap();

        let analytic = grads.to_flat();
        let base = net.to_flat();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let mut plus = net.clone();
            plus.copy_from_flat(&p).unwrap();
            p[i] -= 2.0 * h;
            let mut minus = net.clone();
            minus.copy_from_flat(&p).unwrap();
            let numeric = (loss(&plus, &x, &w) - loss(&minus, &x, &w)) / (2.0 * h);
            record(&mut out, rel_err(analytic[i], numeric), case, format!("param {i}"));
        }
        for i in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let numeric = (loss(&net, &xp, &w) - loss(&net, &xm, &w)) / (2.0 * h);
            record(&mut out, rel_err(dx.data()[i], numeric), case, format!("input {i}"));
        }
    }
    out
}
