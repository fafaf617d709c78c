//! Uniform samplers over a box domain and its boundary.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::{self, rng_from_seed};
use crate::sde::DomainBox;

/// `n` i.i.d. points uniform in the box, row-major.
pub fn sample_uniform_box(domain: &DomainBox, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut out = vec![0.0; n * domain.dim()];
    fill_uniform_box_points(domain, &mut rng, &mut out);
    out
}

pub(crate) fn fill_uniform_box_points(domain: &DomainBox, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let d = domain.dim();
    for row in out.chunks_exact_mut(d) {
        rng::fill_uniform_box(rng, domain.lower(), domain.upper(), row);
    }
}

/// `n` points uniform on the boundary: pick a face with probability
/// proportional to its area, then uniform on that face.
pub fn sample_uniform_boundary(domain: &DomainBox, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut out = vec![0.0; n * domain.dim()];
    fill_uniform_boundary_points(domain, &mut rng, &mut out);
    out
}

pub(crate) fn fill_uniform_boundary_points(
    domain: &DomainBox,
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
) {
    let d = domain.dim();
    let total = domain.boundary_measure();
    for row in out.chunks_exact_mut(d) {
        let mut u: f64 = rng.gen::<f64>() * total;
        let mut face = 0usize;
        let mut upper_side = false;
        for k in 0..d {
            let area = domain.face_area(k);
            if u < area {
                face = k;
                upper_side = false;
                break;
            }
            u -= area;
            if u < area {
                face = k;
                upper_side = true;
                break;
            }
            u -= area;
            // numerical slack on the last face
            face = k;
            upper_side = true;
        }
        rng::fill_uniform_box(rng, domain.lower(), domain.upper(), row);
        row[face] = if upper_side {
            domain.upper()[face]
        } else {
            domain.lower()[face]
        };
    }
}
