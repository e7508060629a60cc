//! Exact stationary harmonic measure on the whole half-plane.
//!
//! For `A = B ∪ L_0` and a frontier edge `x -> y`, reversing the walk from
//! `L_N` gives `H_{B,N}(x -> y) = E_y[visits to L_N before A] / 4`, and
//! comparing with the floor-only Green's function `4 min(y2, N)` yields
//!
//! `H_{B,N}(x -> y) = min(y2, N) - φ(y)`,  `φ(w) = E_w[height of S at τ̄_A]`,
//!
//! for every `N` at or above the top of `B`. `φ` is the potential of charges
//! on the raised sites `F = B \ L_0` against the killed Green's function,
//! with `φ(v) = v2` on `F`; the charges solve a symmetric positive definite
//! `|F| x |F|` system kept as an incrementally grown Cholesky factor.

use std::collections::HashMap;

use super::kernel::half_plane_green;
use super::HarmonicError;
use crate::lattice::{neighbors, out_edges, DirectedEdge, Site};

#[derive(Debug, Clone, Default)]
pub struct StationaryField {
    raised: Vec<Site>,
    index: HashMap<Site, usize>,
    /// Packed lower-triangular Cholesky factor, row `i` holds `i + 1` entries.
    chol: Vec<f64>,
    /// `L^{-1} h`, grown one entry per insertion.
    forward: Vec<f64>,
    charges: Vec<f64>,
    max_height: i32,
}

impl StationaryField {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sites<'a>(sites: impl IntoIterator<Item = &'a Site>) -> Result<Self, HarmonicError> {
        let mut f = Self::new();
        for &s in sites {
            f.push_raised(s)?;
        }
        f.solve_charges();
        Ok(f)
    }

    /// Raised (non-floor) sites, in insertion order.
    pub fn raised(&self) -> &[Site] {
        &self.raised
    }

    pub fn max_height(&self) -> i32 {
        self.max_height
    }

    /// Membership in the effective set `B ∪ L_0`.
    #[inline]
    pub fn contains(&self, s: Site) -> bool {
        s.x2 == 0 || self.index.contains_key(&s)
    }

    /// Adds a site and refreshes the charges. Floor sites and repeats are no-ops.
    pub fn insert(&mut self, s: Site) -> Result<bool, HarmonicError> {
        let added = self.push_raised(s)?;
        if added {
            self.solve_charges();
        }
        Ok(added)
    }

    fn push_raised(&mut self, s: Site) -> Result<bool, HarmonicError> {
        if s.x2 == 0 || self.index.contains_key(&s) {
            return Ok(false);
        }
        let k = self.raised.len();
        let column: Vec<f64> = self.raised.iter().map(|&u| half_plane_green(s, u)).collect();
        // Forward-substitute the new row of L.
        let mut row = Vec::with_capacity(k + 1);
        for (i, c) in column.iter().enumerate() {
            let base = i * (i + 1) / 2;
            let dot: f64 = (0..i).map(|j| self.chol[base + j] * row[j]).sum();
            row.push((c - dot) / self.chol[base + i]);
        }
        let diag2 = half_plane_green(s, s) - row.iter().map(|r| r * r).sum::<f64>();
        if diag2.is_nan() || diag2 <= 0.0 {
            return Err(HarmonicError::Numerical(format!(
                "kernel matrix lost positive definiteness adding {s}"
            )));
        }
        let diag = diag2.sqrt();
        let fwd = (f64::from(s.x2) - row.iter().zip(&self.forward).map(|(a, b)| a * b).sum::<f64>()) / diag;
        row.push(diag);
        self.chol.extend_from_slice(&row);
        self.forward.push(fwd);
        self.index.insert(s, k);
        self.raised.push(s);
        self.max_height = self.max_height.max(s.x2);
        Ok(true)
    }

    fn solve_charges(&mut self) {
        let n = self.raised.len();
        let mut x = self.forward.clone();
        for i in (0..n).rev() {
            let base = i * (i + 1) / 2;
            x[i] /= self.chol[base + i];
            let xi = x[i];
            for (j, xj) in x.iter_mut().enumerate().take(i) {
                *xj -= self.chol[base + j] * xi;
            }
        }
        self.charges = x;
    }

    /// Largest violation of `φ(v) = v2` on the raised sites.
    pub fn residual(&self) -> f64 {
        self.raised
            .iter()
            .map(|&v| (self.potential(v) - f64::from(v.x2)).abs())
            .fold(0.0, f64::max)
    }

    /// `φ(w)`: expected height at which a walk from `w` first meets `B ∪ L_0`.
    pub fn potential(&self, w: Site) -> f64 {
        if w.x2 == 0 {
            return 0.0;
        }
        self.raised
            .iter()
            .zip(&self.charges)
            .map(|(&u, &c)| c * half_plane_green(w, u))
            .sum()
    }

    /// Mass arriving through the outer site `y`, per adjacent aggregate site.
    ///
    /// Equals `H_B(x -> y)` for every `x ∈ B` adjacent to `y`.
    pub fn outer_density(&self, y: Site) -> f64 {
        if self.contains(y) {
            return 0.0;
        }
        (f64::from(y.x2) - self.potential(y)).max(0.0)
    }

    /// `H_B(e)`; zero unless `e` leaves the effective set.
    pub fn edge_value(&self, e: DirectedEdge) -> f64 {
        if !self.contains(e.from) {
            return 0.0;
        }
        self.outer_density(e.to)
    }

    /// `H_B(x)`, summed over the out-edges of `x`.
    pub fn point(&self, x: Site) -> f64 {
        out_edges(x).map(|e| self.edge_value(e)).sum()
    }

    /// `Ĥ_B(y)`, summed over the edges into `y` from the effective set.
    pub fn outer_point(&self, y: Site) -> f64 {
        if self.contains(y) {
            return 0.0;
        }
        let d = self.outer_density(y);
        neighbors(y).filter(|&x| self.contains(x)).count() as f64 * d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(h: i32) -> StationaryField {
        let sites: Vec<Site> = (1..=h).map(|k| Site::new(0, k)).collect();
        StationaryField::from_sites(&sites).unwrap()
    }

    #[test]
    fn floor_only_gives_unit_mass_per_site() {
        let f = StationaryField::new();
        for x in [-5, 0, 17] {
            assert!((f.point(Site::new(x, 0)) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_values_hold() {
        let f = column(6);
        assert!(f.residual() < 1e-10);
        assert_eq!(f.potential(Site::new(3, 0)), 0.0);
    }

    #[test]
    fn incremental_matches_batch() {
        let sites = [Site::new(0, 1), Site::new(0, 2), Site::new(1, 2), Site::new(4, 1)];
        let batch = StationaryField::from_sites(&sites).unwrap();
        let mut inc = StationaryField::new();
        for s in sites {
            inc.insert(s).unwrap();
        }
        for y in [Site::new(0, 3), Site::new(2, 2), Site::new(-1, 1), Site::new(4, 2)] {
            assert!((batch.outer_density(y) - inc.outer_density(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_column_values() {
        // Reference values from an independent scipy quadrature of the kernel.
        let f = column(1);
        assert!((f.outer_density(Site::new(0, 2)) - 1.503_876_787_768_217).abs() < 1e-10);
        assert!((f.outer_density(Site::new(1, 1)) - 0.624_030_803_057_945).abs() < 1e-10);
        assert!((f.point(Site::new(0, 1)) - 2.751_938_393_884_108).abs() < 1e-10);
    }

    #[test]
    fn mirror_symmetry() {
        let f = column(3);
        let l = f.edge_value(DirectedEdge::new(Site::new(0, 2), Site::new(-1, 2)).unwrap());
        let r = f.edge_value(DirectedEdge::new(Site::new(0, 2), Site::new(1, 2)).unwrap());
        assert!((l - r).abs() < 1e-12);
    }
}
