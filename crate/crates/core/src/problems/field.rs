use super::grid_index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIELD_HI: f64 = 1e2;
pub const FIELD_LO: f64 = 1e-2;

/// Smoothing deviation in cells.
const SIGMA: f64 = 4.0;

/// Quantized high-contrast random field on the `n³` cell centers.
///
/// Uniform `[0, 1)` noise from ChaCha8 seeded with `seed` (cells visited in
/// `x`-fastest order), a separable Gaussian blur of deviation 4 cells
/// truncated at 4 deviations, then thresholding at 0.5. Near the boundary the
/// kernel is renormalized over the cells inside the cube.
pub fn gen_vc_field(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Vec<f64> = (0..n * n * n).map(|_| rng.gen::<f64>()).collect();
    let radius = (4.0 * SIGMA).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * SIGMA * SIGMA)).exp()).collect();
    for axis in 0..3 {
        a = blur_axis(&a, n, axis, radius, &kernel);
    }
    a.into_iter().map(|v| if v > 0.5 { FIELD_HI } else { FIELD_LO }).collect()
}

fn blur_axis(a: &[f64], n: usize, axis: usize, radius: isize, kernel: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    let mut line = vec![0.0; n];
    for u in 0..n {
        for v in 0..n {
            let at = |t: usize| match axis {
                0 => grid_index(n, t, u, v),
                1 => grid_index(n, u, t, v),
                _ => grid_index(n, u, v, t),
            };
            for (t, l) in line.iter_mut().enumerate() {
                *l = a[at(t)];
            }
            for t in 0..n {
                let (mut s, mut w) = (0.0, 0.0);
                for d in -radius..=radius {
                    let p = t as isize + d;
                    if p >= 0 && (p as usize) < n {
                        let k = kernel[(d + radius) as usize];
                        s += k * line[p as usize];
                        w += k;
                    }
                }
                out[at(t)] = s / w;
            }
        }
    }
    out
}
