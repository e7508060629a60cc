//! Potential kernel of the planar simple random walk and the Green's function
//! of the walk killed on the floor.
//!
//! `a(x) = (2π)^-2 ∫∫ (1 - cos(x·θ)) / (1 - (cos θ1 + cos θ2)/2) dθ`.
//! Integrating out one angle leaves
//! `a(p, q) = (1/π) ∫_0^π 2 (1 - cos(qθ) e^{-p s}) / sinh s dθ`
//! with `cosh s = 2 - cos θ` and `p >= q >= 0` (the kernel is symmetric under
//! coordinate swaps and sign flips). The remaining integral is smooth and is
//! evaluated by graded composite Gauss-Legendre quadrature.

use std::f64::consts::PI;
use std::sync::{LazyLock, OnceLock};

use crate::lattice::Site;

const GL_ORDER: usize = 20;

struct GaussLegendre {
    nodes: [f64; GL_ORDER],
    weights: [f64; GL_ORDER],
}

impl GaussLegendre {
    fn new() -> Self {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n {
            // Newton iteration on P_n from the Chebyshev-like initial guess.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussLegendre { nodes, weights }
    }

    fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

static GL: LazyLock<GaussLegendre> = LazyLock::new(GaussLegendre::new);

/// Potential kernel evaluated by quadrature, without caching.
pub fn potential_kernel_uncached(x1: i64, x2: i64) -> f64 {
    let (a, b) = (x1.unsigned_abs(), x2.unsigned_abs());
    let (p, q) = if a >= b { (a as f64, b as f64) } else { (b as f64, a as f64) };
    if p == 0.0 {
        return 0.0;
    }
    let integrand = |theta: f64| {
        let sh = (0.5 * theta).sin();
        let s = 2.0 * sh.asinh();
        let sinh_s = 2.0 * sh * (1.0 + sh * sh).sqrt();
        let damp = (-p * s).exp();
        let sq = (0.5 * q * theta).sin();
        // 1 - cos(qθ) e^{-ps}, written without cancellation.
        let num = -(-p * s).exp_m1() + damp * 2.0 * sq * sq;
        2.0 * num / sinh_s
    };

    // Dyadic panels towards 0, where the integrand varies on scale 1/p.
    let mut breaks = vec![PI];
    let mut x = PI;
    let floor = 1.0 / (64.0 * p);
    while x > floor {
        x *= 0.5;
        breaks.push(x);
    }
    breaks.push(0.0);
    breaks.reverse();

    let gl = &*GL;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // Split further so each piece spans at most ~1 radian of cos(qθ),
        // where the damping has not yet killed the oscillation.
        let pieces = if p * lo < 60.0 {
            ((q * (hi - lo)).ceil() as usize).max(1)
        } else {
            1
        };
        let step = (hi - lo) / pieces as f64;
        for k in 0..pieces {
            let a = lo + step * k as f64;
            total += gl.integrate(a, a + step, integrand);
        }
    }
    total / PI
}

const TABLE_P: usize = 2048;
const TABLE_Q: usize = 160;

/// Lazily filled table of kernel values for `p <= TABLE_P`, `q <= TABLE_Q`.
struct KernelTable {
    cells: Box<[OnceLock<f64>]>,
}

static TABLE: LazyLock<KernelTable> = LazyLock::new(|| KernelTable {
    cells: (0..(TABLE_P + 1) * (TABLE_Q + 1))
        .map(|_| OnceLock::new())
        .collect(),
});

/// Potential kernel `a(x)` of the simple random walk on `Z^2`: `a(0) = 0`,
/// discrete Laplacian `δ_0`, `a(x) ~ (2/π) log|x|`.
pub fn potential_kernel(x1: i64, x2: i64) -> f64 {
    let (a, b) = (x1.unsigned_abs() as usize, x2.unsigned_abs() as usize);
    let (p, q) = if a >= b { (a, b) } else { (b, a) };
    if p <= TABLE_P && q <= TABLE_Q {
        *TABLE.cells[p * (TABLE_Q + 1) + q].get_or_init(|| potential_kernel_uncached(p as i64, q as i64))
    } else {
        potential_kernel_uncached(p as i64, q as i64)
    }
}

/// Expected visits to `v` by a walk from `w` before it hits the floor.
///
/// Method of images: `G(w, v) = a(w - v*) - a(w - v)` with `v* = (v1, -v2)`.
#[inline]
pub fn half_plane_green(w: Site, v: Site) -> f64 {
    let dx = i64::from(w.x1) - i64::from(v.x1);
    let sum = i64::from(w.x2) + i64::from(v.x2);
    let diff = i64::from(w.x2) - i64::from(v.x2);
    potential_kernel(dx, sum) - potential_kernel(dx, diff)
}
