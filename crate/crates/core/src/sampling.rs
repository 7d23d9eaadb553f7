//! Seeded random distributions and channels for searches and property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::channel::BroadcastChannel3;
use crate::prob::{FinitePmf, StochasticMatrix};

/// Independent stream `stream` of the generator rooted at `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dirichlet(`alpha`, ..., `alpha`) draw over `n` letters.
pub fn random_masses<R: Rng + ?Sized>(rng: &mut R, n: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let mut v: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        v.iter_mut().for_each(|p| *p = 0.0);
        v[rng.random_range(0..n)] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|p| *p /= total);
    v
}

pub fn random_pmf<R: Rng + ?Sized>(rng: &mut R, n: usize, alpha: f64) -> FinitePmf {
    FinitePmf::new(random_masses(rng, n, alpha)).expect("normalised draw")
}

pub fn random_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    alpha: f64,
) -> StochasticMatrix {
    let entries: Vec<f64> = (0..rows).flat_map(|_| random_masses(rng, cols, alpha)).collect();
    StochasticMatrix::new(rows, cols, entries).expect("normalised rows")
}

/// Deterministic map drawn uniformly from all functions `rows -> cols`.
pub fn random_function_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> StochasticMatrix {
    let f: Vec<usize> = (0..rows).map(|_| rng.random_range(0..cols)).collect();
    StochasticMatrix::deterministic(&f, cols).expect("images in range")
}

pub fn random_channel<R: Rng + ?Sized>(
    rng: &mut R,
    input_size: usize,
    outputs: [usize; 3],
    alpha: f64,
) -> BroadcastChannel3 {
    let m = random_matrix(rng, input_size, outputs.iter().product(), alpha);
    BroadcastChannel3::from_law(input_size, outputs, m.entries().to_vec()).expect("valid law")
}

/// Random `p(y1,y2|x) p(y3|y1)`.
pub fn random_multilevel_channel<R: Rng + ?Sized>(
    rng: &mut R,
    input_size: usize,
    outputs: [usize; 3],
    alpha: f64,
) -> BroadcastChannel3 {
    let p12 = random_matrix(rng, input_size, outputs[0] * outputs[1], alpha);
    let p3 = random_matrix(rng, outputs[0], outputs[2], alpha);
    BroadcastChannel3::build_multilevel(&p12, outputs[0], &p3).expect("dimensions compose")
}

/// Each receiver sees a deterministic function of the input.
pub fn random_deterministic_channel<R: Rng + ?Sized>(
    rng: &mut R,
    input_size: usize,
    outputs: [usize; 3],
) -> BroadcastChannel3 {
    let f: Vec<[usize; 3]> = (0..input_size)
        .map(|_| {
            [
                rng.random_range(0..outputs[0]),
                rng.random_range(0..outputs[1]),
                rng.random_range(0..outputs[2]),
            ]
        })
        .collect();
    let out: usize = outputs.iter().product();
    let mut law = vec![0.0; input_size * out];
    for (x, y) in f.iter().enumerate() {
        law[x * out + (y[0] * outputs[1] + y[1]) * outputs[2] + y[2]] = 1.0;
    }
    BroadcastChannel3::from_law(input_size, outputs, law).expect("valid law")
}
