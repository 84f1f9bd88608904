//! Observer injection gains and feedback gains read off the solved kernels.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{trapezoid_product, UniformGrid};
use crate::kernels::{KernelFamily, KernelSet};
use crate::output::CsvTable;
use crate::plant::PlantCoefficients;

/// Spatial gain functions sampled on the uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainProfiles {
    pub grid: UniformGrid,
    /// Output injection into the `u` observer equation.
    pub p1: Vec<f64>,
    /// Output injection into the `v` observer equation.
    pub p2: Vec<f64>,
    /// Injection gains seen by the target system.
    pub pbar1: Vec<f64>,
    pub pbar2: Vec<f64>,
    /// Feedback gains acting on the observer state.
    pub n_u: Vec<f64>,
    pub n_v: Vec<f64>,
    /// The same feedback expressed on the target state.
    pub n_alpha: Vec<f64>,
    pub n_beta: Vec<f64>,
}

impl GainProfiles {
    /// All-zero gains (no coupling).
    pub fn zeros(grid: UniformGrid) -> Self {
        let z = vec![0.0; grid.n_x()];
        Self {
            grid,
            p1: z.clone(),
            p2: z.clone(),
            pbar1: z.clone(),
            pbar2: z.clone(),
            n_u: z.clone(),
            n_v: z.clone(),
            n_alpha: z.clone(),
            n_beta: z,
        }
    }

    pub fn n_x(&self) -> usize {
        self.grid.n_x()
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.p1,
            &self.p2,
            &self.pbar1,
            &self.pbar2,
            &self.n_u,
            &self.n_v,
            &self.n_alpha,
            &self.n_beta,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// `lambda2 N^beta(0) - q lambda1 N^alpha(0)`, zero by the edge relations.
    pub fn origin_relation_defect(&self, coeffs: &PlantCoefficients) -> f64 {
        coeffs.lambda2 * self.n_beta[0] - coeffs.q * coeffs.lambda1 * self.n_alpha[0]
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "x", "p1", "p2", "pbar1", "pbar2", "Nu", "Nv", "Nalpha", "Nbeta",
        ]);
        for i in 0..self.n_x() {
            t.row_nums(&[
                self.grid.x(i),
                self.p1[i],
                self.p2[i],
                self.pbar1[i],
                self.pbar2[i],
                self.n_u[i],
                self.n_v[i],
                self.n_alpha[i],
                self.n_beta[i],
            ]);
        }
        t
    }
}

/// Assembles every gain profile from the K, P and L kernels.
pub fn gain_profiles(
    k: &KernelSet,
    p: &KernelSet,
    l: &KernelSet,
    coeffs: &PlantCoefficients,
) -> Result<GainProfiles> {
    for (set, family) in [
        (k, KernelFamily::Controller),
        (p, KernelFamily::Observer),
        (l, KernelFamily::InverseController),
    ] {
        if set.family != family {
            return Err(Error::GridMismatch(format!(
                "expected {family} kernels, got {}",
                set.family
            )));
        }
    }
    if k.grid != p.grid || k.grid != l.grid {
        return Err(Error::GridMismatch(
            "kernel sets were solved on different grids".into(),
        ));
    }
    let grid = *k.grid.line();
    let n = grid.n_x();
    let dx = grid.dx();
    let last = n - 1;
    let (l2, rho) = (coeffs.lambda2, coeffs.rho);

    let p1: Vec<f64> = p.column_at_origin(1).iter().map(|v| -l2 * v).collect();
    let p2: Vec<f64> = p.column_at_origin(3).iter().map(|v| -l2 * v).collect();

    let mut pbar1 = vec![0.0; n];
    let mut pbar2 = vec![0.0; n];
    for i in 0..n {
        let (a, b) = (&p1[..=i], &p2[..=i]);
        pbar1[i] =
            p1[i] - trapezoid_product(k.row(0, i), a, dx) - trapezoid_product(k.row(1, i), b, dx);
        pbar2[i] =
            p2[i] - trapezoid_product(k.row(2, i), a, dx) - trapezoid_product(k.row(3, i), b, dx);
    }

    let combine = |set: &KernelSet, main: usize, reflected: usize| -> Vec<f64> {
        set.row(main, last)
            .iter()
            .zip(set.row(reflected, last))
            .map(|(m, r)| m - rho * r)
            .collect()
    };
    let gains = GainProfiles {
        grid,
        p1,
        p2,
        pbar1,
        pbar2,
        n_u: combine(k, 2, 0),
        n_v: combine(k, 3, 1),
        n_alpha: combine(l, 2, 0),
        n_beta: combine(l, 3, 1),
    };
    if !gains.is_finite() {
        return Err(Error::InvalidCoefficients(
            "gain profiles contain non-finite values".into(),
        ));
    }
    Ok(gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TriangularGrid;
    use crate::kernels::solve_kernels;
    use crate::plant::Profile;

    fn plant(c: f64) -> PlantCoefficients {
        PlantCoefficients {
            lambda1: 2.0,
            lambda2: 1.0,
            c1: Profile::constant(c),
            c2: Profile::constant(-c),
            q: -0.5,
            rho: 0.6,
            ell: 1.0,
        }
    }

    fn solve_all(c: &PlantCoefficients, n: usize) -> (KernelSet, KernelSet, KernelSet) {
        let g = TriangularGrid::new(n, c.ell).unwrap();
        let s = |f| solve_kernels(f, c, g, 1e-12, 500).unwrap();
        (
            s(KernelFamily::Controller),
            s(KernelFamily::Observer),
            s(KernelFamily::InverseController),
        )
    }

    #[test]
    fn zero_kernels_give_zero_gains() {
        let c = plant(0.0);
        let (k, p, l) = solve_all(&c, 11);
        let g = gain_profiles(&k, &p, &l, &c).unwrap();
        assert_eq!(g, GainProfiles::zeros(*k.grid.line()));
    }

    #[test]
    fn origin_relation_holds() {
        let c = plant(0.4);
        let (k, p, l) = solve_all(&c, 41);
        let g = gain_profiles(&k, &p, &l, &c).unwrap();
        assert!(g.origin_relation_defect(&c).abs() < 1e-14);
        assert!(g.n_beta.iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn rejects_mixed_grids_and_families() {
        let c = plant(0.1);
        let (k, p, l) = solve_all(&c, 11);
        let (k2, _, _) = solve_all(&c, 21);
        assert!(matches!(
            gain_profiles(&k2, &p, &l, &c),
            Err(Error::GridMismatch(_))
        ));
        assert!(matches!(
            gain_profiles(&p, &k, &l, &c),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn csv_has_documented_header() {
        let g = GainProfiles::zeros(UniformGrid::new(3, 1.0).unwrap());
        let csv = g.to_csv().into_string();
        assert!(csv.starts_with("x,p1,p2,pbar1,pbar2,Nu,Nv,Nalpha,Nbeta\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
