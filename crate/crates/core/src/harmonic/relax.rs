//! Red-black SOR for the hitting-height potential on a finite box.
//!
//! Unknowns live on `[x_min, x_max] x [1, y_max]` minus the raised aggregate
//! sites. The floor and the aggregate carry their own heights as Dirichlet
//! data; the side and top margins absorb with value 0 (walks leaving the box
//! are treated as lost to the floor).

use super::HarmonicError;
use crate::lattice::{BoxRegion, Site};

#[derive(Debug, Clone)]
pub struct RelaxedPotential {
    pub domain: BoxRegion,
    width: usize,
    height: usize,
    /// `(width + 2) x (height + 2)` with a one-cell frame; row 0 is the floor.
    phi: Vec<f64>,
    fixed: Vec<bool>,
    pub sweeps: usize,
    pub residual: f64,
}

impl RelaxedPotential {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * (self.width + 2) + i
    }

    /// φ at a site; zero outside the box and on the floor.
    pub fn value(&self, s: Site) -> f64 {
        if !self.domain.contains(s) || s.x2 == 0 {
            return 0.0;
        }
        let i = (s.x1 - self.domain.x_min) as usize + 1;
        let j = s.x2 as usize;
        self.phi[self.idx(i, j)]
    }

    /// Sum of φ over interior cells adjacent to the absorbing frame, one term
    /// per frame edge.
    pub fn frame_flux(&self) -> f64 {
        let mut total = 0.0;
        for j in 1..=self.height {
            // A one-column box visits the same cell twice: two frame edges.
            for i in [1, self.width] {
                if !self.fixed[self.idx(i, j)] {
                    total += self.phi[self.idx(i, j)];
                }
            }
        }
        for i in 1..=self.width {
            if !self.fixed[self.idx(i, self.height)] {
                total += self.phi[self.idx(i, self.height)];
            }
        }
        total
    }
}

/// Solves for `φ(w) = E_w[height at τ̄_A]` with absorption on the box frame.
pub fn relax_potential(
    raised: &[Site],
    domain: BoxRegion,
    tol: f64,
    max_sweeps: usize,
) -> Result<RelaxedPotential, HarmonicError> {
    if domain.y_min != 0 {
        return Err(HarmonicError::Precondition(format!(
            "solve domain {domain} must start at the floor"
        )));
    }
    let width = domain.width() as usize;
    let height = domain.y_max as usize;
    let stride = width + 2;
    let mut out = RelaxedPotential {
        domain,
        width,
        height,
        phi: vec![0.0; stride * (height + 2)],
        fixed: vec![false; stride * (height + 2)],
        sweeps: 0,
        residual: f64::INFINITY,
    };
    // Frame and floor.
    for j in 0..height + 2 {
        for i in 0..stride {
            if i == 0 || i == width + 1 || j == 0 || j == height + 1 {
                let k = out.idx(i, j);
                out.fixed[k] = true;
            }
        }
    }
    for &s in raised {
        if s.x2 == 0 {
            continue;
        }
        if !domain.contains(s) {
            return Err(HarmonicError::Precondition(format!(
                "aggregate site {s} outside solve domain {domain}"
            )));
        }
        let k = out.idx((s.x1 - domain.x_min) as usize + 1, s.x2 as usize);
        out.fixed[k] = true;
        out.phi[k] = f64::from(s.x2);
    }
    if height == 0 {
        out.residual = 0.0;
        return Ok(out);
    }

    // Optimal over-relaxation for the box Laplacian.
    let rho = 0.5 * ((std::f64::consts::PI / (width as f64 + 1.0)).cos()
        + (std::f64::consts::PI / (height as f64 + 1.0)).cos());
    let omega = 2.0 / (1.0 + (1.0 - rho * rho).sqrt());

    let phi = &mut out.phi;
    let fixed = &out.fixed;
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < max_sweeps {
        for color in 0..2 {
            for j in 1..=height {
                let start = 1 + (j + color + 1) % 2;
                let row = j * stride;
                let mut i = start;
                while i <= width {
                    let k = row + i;
                    if !fixed[k] {
                        let avg = 0.25 * (phi[k - 1] + phi[k + 1] + phi[k - stride] + phi[k + stride]);
                        phi[k] += omega * (avg - phi[k]);
                    }
                    i += 2;
                }
            }
        }
        sweeps += 1;
        if sweeps % 16 == 0 || sweeps == max_sweeps {
            residual = 0.0;
            for j in 1..=height {
                let row = j * stride;
                for i in 1..=width {
                    let k = row + i;
                    if !fixed[k] {
                        let avg = 0.25 * (phi[k - 1] + phi[k + 1] + phi[k - stride] + phi[k + stride]);
                        residual = residual.max((avg - phi[k]).abs());
                    }
                }
            }
            if residual < tol {
                break;
            }
        }
    }
    out.sweeps = sweeps;
    out.residual = residual;
    if residual >= tol {
        return Err(HarmonicError::NonConvergence {
            residual,
            iterations: sweeps,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_aggregate_is_zero() {
        let p = relax_potential(&[], BoxRegion::new(-5, 5, 0, 6).unwrap(), 1e-12, 10_000).unwrap();
        assert_eq!(p.value(Site::new(0, 3)), 0.0);
    }

    #[test]
    fn boundary_data_respected() {
        let sites = [Site::new(0, 1), Site::new(0, 2)];
        let p = relax_potential(&sites, BoxRegion::new(-10, 10, 0, 12).unwrap(), 1e-12, 100_000).unwrap();
        assert_eq!(p.value(Site::new(0, 2)), 2.0);
        let v = p.value(Site::new(0, 3));
        assert!(v > 0.0 && v < 2.0);
        assert!((p.value(Site::new(1, 1)) - p.value(Site::new(-1, 1))).abs() < 1e-10);
    }

    #[test]
    fn rejects_site_outside_domain() {
        let err = relax_potential(&[Site::new(20, 1)], BoxRegion::new(-5, 5, 0, 5).unwrap(), 1e-10, 10);
        assert!(matches!(err, Err(HarmonicError::Precondition(_))));
    }

    #[test]
    fn sweep_cap_reports_residual() {
        let err = relax_potential(&[Site::new(0, 3)], BoxRegion::new(-40, 40, 0, 40).unwrap(), 1e-14, 3);
        match err {
            Err(HarmonicError::NonConvergence { residual, iterations }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
