//! Shared test-only helpers: finite-difference oracles.

// fourth-order central stencils; independent oracle for every derivative path
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let mut g = vec![0.0; d];
    let mut y = x.to_vec();
    for a in 0..d {
        let mut stencil = 0.0;
        for (off, c) in [(2.0, -1.0), (1.0, 8.0), (-1.0, -8.0), (-2.0, 1.0)] {
            y[a] = x[a] + off * h;
            stencil += c * f(&y);
        }
        y[a] = x[a];
        g[a] = stencil / (12.0 * h);
    }
    g
}

pub fn fd_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let mut hess = vec![0.0; d * d];
    let mut y = x.to_vec();
    for a in 0..d {
        // diagonal: fourth-order second-derivative stencil
        let mut acc = -30.0 * f(x);
        for (off, c) in [(2.0, -1.0), (1.0, 16.0), (-1.0, 16.0), (-2.0, -1.0)] {
            y[a] = x[a] + off * h;
            acc += c * f(&y);
        }
        y[a] = x[a];
        hess[a * d + a] = acc / (12.0 * h * h);
        // off-diagonal: nested first-derivative stencils
        for b in (a + 1)..d {
            let mut acc = 0.0;
            for (oa, ca) in [(2.0, -1.0), (1.0, 8.0), (-1.0, -8.0), (-2.0, 1.0)] {
                for (ob, cb) in [(2.0, -1.0), (1.0, 8.0), (-1.0, -8.0), (-2.0, 1.0)] {
                    y[a] = x[a] + oa * h;
                    y[b] = x[b] + ob * h;
                    acc += ca * cb * f(&y);
                }
            }
            y[a] = x[a];
            y[b] = x[b];
            let v = acc / (144.0 * h * h);
            hess[a * d + b] = v;
            hess[b * d + a] = v;
        }
    }
    hess
}

