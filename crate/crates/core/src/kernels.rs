//! Backstepping kernels on the triangular domain `0 <= xi <= x <= ell`.
//!
//! Every family consists of four scalar kernels, stored in the slots
//! `k11, k12, k21, k22`:
//!
//! | slot | transport operator            | data                               |
//! |------|-------------------------------|------------------------------------|
//! | k11  | `lambda1 (d_x + d_xi)`        | edge (`xi = 0` or `x = ell`)       |
//! | k12  | `lambda1 d_x - lambda2 d_xi`  | diagonal `xi = x`                  |
//! | k21  | `lambda2 d_x - lambda1 d_xi`  | diagonal `xi = x`                  |
//! | k22  | `lambda2 (d_x + d_xi)`        | edge (`xi = 0` or `x = ell`)       |
//!
//! Each operator applied to its kernel equals a coupling coefficient times
//! one partner kernel. The families differ in the partner pairing, whether
//! the coupling is evaluated at `x` or `xi`, the sign of the diagonal data
//! and the edge on which the two equal-speed kernels are pinned.
//!
//! The solver is a successive-approximation sweep along characteristics.
//! Equal-speed kernels move along grid diagonals node to node; the two
//! cross kernels step back one cell to a foot point on a neighbouring grid
//! line (or the diagonal) and read it by quadratic interpolation. The
//! source is integrated with the trapezoid rule along each step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TriangularGrid;
use crate::plant::PlantCoefficients;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Which kernel system to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `K`: observer-to-target transform used by the controller.
    Controller,
    /// `P`: observer-error transform, defines the injection gains.
    Observer,
    /// `L`: inverse of the controller transform.
    InverseController,
    /// `R`: inverse of the observer-error transform.
    InverseObserver,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Controller,
        KernelFamily::Observer,
        KernelFamily::InverseController,
        KernelFamily::InverseObserver,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            KernelFamily::Controller => "K",
            KernelFamily::Observer => "P",
            KernelFamily::InverseController => "L",
            KernelFamily::InverseObserver => "R",
        }
    }

    /// Equal-speed kernels are pinned at `xi = 0` (K, L) or `x = ell` (P, R).
    pub fn pinned_at_origin(self) -> bool {
        matches!(
            self,
            KernelFamily::Controller | KernelFamily::InverseController
        )
    }

    /// Coupling evaluated at `xi` (K, R) rather than `x` (P, L).
    fn coupling_in_xi(self) -> bool {
        matches!(
            self,
            KernelFamily::Controller | KernelFamily::InverseObserver
        )
    }

    /// Sign of the diagonal data of (k12, k21).
    fn diagonal_signs(self) -> (f64, f64) {
        if self.pinned_at_origin() {
            (1.0, -1.0)
        } else {
            (-1.0, 1.0)
        }
    }

    /// For each slot: (partner slot, sign, uses c1 (else c2)).
    fn couplings(self) -> [(usize, f64, bool); 4] {
        if self.coupling_in_xi() {
            // k11 <- -c2 k12, k12 <- -c1 k11, k21 <- c2 k22, k22 <- c1 k21
            [
                (1, -1.0, false),
                (0, -1.0, true),
                (3, 1.0, false),
                (2, 1.0, true),
            ]
        } else {
            // k11 <- c1 k21, k12 <- c1 k22, k21 <- -c2 k11, k22 <- -c2 k12
            [
                (2, 1.0, true),
                (3, 1.0, true),
                (0, -1.0, false),
                (1, -1.0, false),
            ]
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Four kernels of one family sampled on a triangular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub family: KernelFamily,
    pub grid: TriangularGrid,
    k: [Vec<f64>; 4],
    pub iterations: usize,
}

impl KernelSet {
    pub fn zeros(family: KernelFamily, grid: TriangularGrid) -> Self {
        let n = grid.len();
        Self {
            family,
            grid,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            iterations: 0,
        }
    }

    /// Packed values of one slot, `0..4` for `k11, k12, k21, k22`.
    pub fn slot(&self, s: usize) -> &[f64] {
        &self.k[s]
    }

    pub fn k11(&self, i: usize, j: usize) -> f64 {
        self.k[0][self.grid.idx(i, j)]
    }

    pub fn k12(&self, i: usize, j: usize) -> f64 {
        self.k[1][self.grid.idx(i, j)]
    }

    pub fn k21(&self, i: usize, j: usize) -> f64 {
        self.k[2][self.grid.idx(i, j)]
    }

    pub fn k22(&self, i: usize, j: usize) -> f64 {
        self.k[3][self.grid.idx(i, j)]
    }

    /// Row `x = x_i` of slot `s`, indexed by `j = 0..=i`.
    pub fn row(&self, s: usize, i: usize) -> &[f64] {
        &self.k[s][self.grid.row(i)]
    }

    /// Column `xi = 0` of slot `s`, indexed by `i`.
    pub fn column_at_origin(&self, s: usize) -> Vec<f64> {
        (0..self.grid.n_x())
            .map(|i| self.k[s][self.grid.idx(i, 0)])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.k.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Discrete defects of the transport equations and of the diagonal and
    /// edge conditions, measured on the scheme's own stencil.
    pub fn residuals(&self, coeffs: &PlantCoefficients) -> Result<KernelResiduals> {
        let solver = Solver::new(self.family, coeffs, self.grid)?;
        Ok(solver.residuals(&self.k))
    }

    /// Writes `x, xi, k11, k12, k21, k22` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        use crate::output::fmt_num;
        writeln!(out, "x,xi,k11,k12,k21,k22")?;
        let line = self.grid.line();
        for (i, j) in self.grid.nodes() {
            let p = self.grid.idx(i, j);
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_num(line.x(i)),
                fmt_num(line.x(j)),
                fmt_num(self.k[0][p]),
                fmt_num(self.k[1][p]),
                fmt_num(self.k[2][p]),
                fmt_num(self.k[3][p])
            )?;
        }
        Ok(())
    }
}

/// Max-norm defects of a solved kernel set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelResiduals {
    /// Transport-equation defect per slot.
    pub pde: [f64; 4],
    /// Defect of the data on `xi = x` (k12, k21).
    pub diagonal: f64,
    /// Defect of the edge relations (k11, k22).
    pub edge: f64,
}

impl KernelResiduals {
    pub fn max(&self) -> f64 {
        self.pde
            .iter()
            .fold(self.diagonal.max(self.edge), |m, v| m.max(*v))
    }
}

/// Solves one kernel family by successive approximation.
pub fn solve_kernels(
    family: KernelFamily,
    coeffs: &PlantCoefficients,
    grid: TriangularGrid,
    tol: f64,
    max_iter: usize,
) -> Result<KernelSet> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!(
            "kernel tolerance {tol} must be positive"
        )));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParams("max_iter must be positive".into()));
    }
    let solver = Solver::new(family, coeffs, grid)?;
    let mut set = KernelSet::zeros(family, grid);
    let mut next = set.k.clone();
    let mut last_residual = f64::INFINITY;
    for iter in 1..=max_iter {
        solver.sweep(&set.k, &mut next);
        let increment = max_abs_diff(&set.k, &next);
        std::mem::swap(&mut set.k, &mut next);
        if !increment.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual: increment,
                tol,
            });
        }
        if increment < tol {
            last_residual = solver.residuals(&set.k).max();
            if last_residual <= tol {
                set.iterations = iter;
                log::debug!(
                    "{} kernels converged in {iter} sweeps (increment {increment:.2e}, residual {last_residual:.2e})",
                    family
                );
                return Ok(set);
            }
        }
    }
    if !last_residual.is_finite() {
        last_residual = solver.residuals(&set.k).max();
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: last_residual,
        tol,
    })
}

fn max_abs_diff(a: &[Vec<f64>; 4], b: &[Vec<f64>; 4]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Where a backward step along a cross-kernel characteristic lands.
#[derive(Debug, Clone, Copy)]
enum Foot {
    /// On a grid line, interpolated from up to three stored nodes.
    Nodes {
        idx: [usize; 3],
        w: [f64; 3],
        step: f64,
    },
    /// On the diagonal, at fractional diagonal index `y`.
    Diagonal { y: f64, step: f64 },
}

struct Solver {
    grid: TriangularGrid,
    lambda: (f64, f64),
    /// Coupling coefficient (sign included) per slot, per node.
    coef: [Vec<f64>; 4],
    partner: [usize; 4],
    /// Diagonal data of k12 and k21 at each diagonal node.
    diag: [Vec<f64>; 2],
    /// Diagonal data as a function, for off-node feet.
    diag_fn: Box<dyn Fn(usize, f64) -> f64>,
    /// Edge relations: k11 = e11 * partner, k22 = e22 * partner.
    edge: (f64, f64),
    origin: bool,
    feet: [Vec<Option<Foot>>; 2],
}

impl Solver {
    fn new(family: KernelFamily, coeffs: &PlantCoefficients, grid: TriangularGrid) -> Result<Self> {
        coeffs.validate()?;
        if (grid.ell() - coeffs.ell).abs() > 1e-12 * coeffs.ell {
            return Err(Error::GridMismatch(format!(
                "grid length {} differs from plant length {}",
                grid.ell(),
                coeffs.ell
            )));
        }
        let nodes = grid.line().nodes();
        let (c1, c2) = coeffs.sample(&nodes)?;
        let (l1, l2) = (coeffs.lambda1, coeffs.lambda2);
        let couplings = family.couplings();
        let in_xi = family.coupling_in_xi();
        let mut coef: [Vec<f64>; 4] = Default::default();
        let mut partner = [0usize; 4];
        for (s, &(p, sign, uses_c1)) in couplings.iter().enumerate() {
            partner[s] = p;
            let c = if uses_c1 { &c1 } else { &c2 };
            coef[s] = grid
                .nodes()
                .map(|(i, j)| sign * c[if in_xi { j } else { i }])
                .collect();
        }
        let (s12, s21) = family.diagonal_signs();
        let sum = l1 + l2;
        let diag = [
            c1.iter().map(|c| s12 * c / sum).collect(),
            c2.iter().map(|c| s21 * c / sum).collect(),
        ];
        let profile = coeffs.clone();
        let diag_fn: Box<dyn Fn(usize, f64) -> f64> = Box::new(move |slot, x| {
            if slot == 0 {
                s12 * profile.c1(x) / sum
            } else {
                s21 * profile.c2(x) / sum
            }
        });
        let origin = family.pinned_at_origin();
        let edge = if origin {
            (l2 / (coeffs.q * l1), coeffs.q * l1 / l2)
        } else {
            (1.0 / coeffs.rho, coeffs.rho)
        };
        let feet = [cross_feet(&grid, l1, l2), cross_feet(&grid, l2, l1)];
        Ok(Self {
            grid,
            lambda: (l1, l2),
            coef,
            partner,
            diag,
            diag_fn,
            edge,
            origin,
            feet,
        })
    }

    fn sources(&self, k: &[Vec<f64>; 4]) -> [Vec<f64>; 4] {
        std::array::from_fn(|s| {
            let p = &k[self.partner[s]];
            self.coef[s].iter().zip(p).map(|(c, v)| c * v).collect()
        })
    }

    /// Value and source at a cross-kernel foot.
    fn at_foot(&self, foot: &Foot, slot: usize, k: &[f64], src: &[f64]) -> (f64, f64, f64) {
        match *foot {
            Foot::Nodes { idx, w, step } => {
                let kf = w[0] * k[idx[0]] + w[1] * k[idx[1]] + w[2] * k[idx[2]];
                let sf = w[0] * src[idx[0]] + w[1] * src[idx[1]] + w[2] * src[idx[2]];
                (kf, sf, step)
            }
            Foot::Diagonal { y, step } => {
                let n = self.grid.n_x();
                let lo = (y.floor() as usize).min(n - 2);
                let (base, w) = quadratic_weights(lo, y - lo as f64, n - 1);
                let s: f64 = (0..3)
                    .map(|m| {
                        w[m] * src[self.grid.idx((base + m).min(n - 1), (base + m).min(n - 1))]
                    })
                    .sum();
                ((self.diag_fn)(slot, y * self.grid.dx()), s, step)
            }
        }
    }

    fn sweep(&self, old: &[Vec<f64>; 4], new: &mut [Vec<f64>; 4]) {
        let g = &self.grid;
        let n = g.n_x();
        let dx = g.dx();
        let src = self.sources(old);

        // Cross kernels, marching away from the diagonal.
        for (c, slot) in [(0usize, 1usize), (1, 2)] {
            let out = &mut new[slot];
            for i in 0..n {
                out[g.idx(i, i)] = self.diag[c][i];
                for j in (0..i).rev() {
                    let p = g.idx(i, j);
                    let foot = self.feet[c][p].expect("interior foot");
                    let (kf, sf, step) = self.at_foot(&foot, c, out, &src[slot]);
                    out[p] = kf + 0.5 * step * (src[slot][p] + sf);
                }
            }
        }

        // Equal-speed kernels along grid diagonals.
        let (l1, l2) = self.lambda;
        let (e11, e22) = self.edge;
        let (k_lo, k_hi) = new.split_at_mut(2);
        let (k11, k12) = k_lo.split_at_mut(1);
        let (k21, k22) = k_hi.split_at_mut(1);
        let (k11, k12, k21, k22) = (&mut k11[0], &k12[0], &k21[0], &mut k22[0]);
        let (h1, h2) = (dx / l1, dx / l2);
        if self.origin {
            for i in 0..n {
                let p = g.idx(i, 0);
                k11[p] = e11 * k12[p];
                k22[p] = e22 * k21[p];
                for j in 1..=i {
                    let p = g.idx(i, j);
                    let q = g.idx(i - 1, j - 1);
                    k11[p] = k11[q] + 0.5 * h1 * (src[0][p] + src[0][q]);
                    k22[p] = k22[q] + 0.5 * h2 * (src[3][p] + src[3][q]);
                }
            }
        } else {
            for j in 0..n {
                let p = g.idx(n - 1, j);
                k11[p] = e11 * k21[p];
                k22[p] = e22 * k12[p];
            }
            for i in (0..n - 1).rev() {
                for j in 0..=i {
                    let p = g.idx(i, j);
                    let q = g.idx(i + 1, j + 1);
                    k11[p] = k11[q] - 0.5 * h1 * (src[0][p] + src[0][q]);
                    k22[p] = k22[q] - 0.5 * h2 * (src[3][p] + src[3][q]);
                }
            }
        }
    }

    fn residuals(&self, k: &[Vec<f64>; 4]) -> KernelResiduals {
        let g = &self.grid;
        let n = g.n_x();
        let dx = g.dx();
        let src = self.sources(k);
        let mut pde = [0.0f64; 4];
        let mut diagonal = 0.0f64;
        let mut edge = 0.0f64;

        for (c, slot) in [(0usize, 1usize), (1, 2)] {
            for i in 0..n {
                let d = g.idx(i, i);
                diagonal = diagonal.max((k[slot][d] - self.diag[c][i]).abs());
                for j in 0..i {
                    let p = g.idx(i, j);
                    let foot = self.feet[c][p].expect("interior foot");
                    let (kf, sf, step) = self.at_foot(&foot, c, &k[slot], &src[slot]);
                    let r = (k[slot][p] - kf) / step - 0.5 * (src[slot][p] + sf);
                    pde[slot] = pde[slot].max(r.abs());
                }
            }
        }

        let (l1, l2) = self.lambda;
        let (e11, e22) = self.edge;
        let (h1, h2) = (dx / l1, dx / l2);
        for i in 0..n {
            for j in 0..=i {
                let p = g.idx(i, j);
                let pinned = if self.origin { j == 0 } else { i == n - 1 };
                if pinned {
                    let (t11, t22) = if self.origin {
                        (k[1][p], k[2][p])
                    } else {
                        (k[2][p], k[1][p])
                    };
                    edge = edge
                        .max((k[0][p] - e11 * t11).abs())
                        .max((k[3][p] - e22 * t22).abs());
                    continue;
                }
                // Upstream neighbour along the diagonal direction.
                let q = if self.origin {
                    g.idx(i - 1, j - 1)
                } else {
                    g.idx(i + 1, j + 1)
                };
                let sign = if self.origin { 1.0 } else { -1.0 };
                let r11 = sign * (k[0][p] - k[0][q]) / h1 - 0.5 * (src[0][p] + src[0][q]);
                let r22 = sign * (k[3][p] - k[3][q]) / h2 - 0.5 * (src[3][p] + src[3][q]);
                pde[0] = pde[0].max(r11.abs());
                pde[3] = pde[3].max(r22.abs());
            }
        }
        KernelResiduals {
            pde,
            diagonal,
            edge,
        }
    }
}

/// Backward feet for a cross kernel with operator `a d_x - b d_xi`.
///
/// The characteristic through a node runs back toward the diagonal with
/// direction `(-a, +b)`. The step stops on the nearest grid line it
/// crosses: the previous row when `b <= a`, the next column otherwise, or
/// on the diagonal when that comes first.
fn cross_feet(grid: &TriangularGrid, a: f64, b: f64) -> Vec<Option<Foot>> {
    let n = grid.n_x();
    let dx = grid.dx();
    let eps = 1e-12;
    let mut feet = vec![None; grid.len()];
    for i in 1..n {
        for j in 0..i {
            let (fi, fj) = (i as f64, j as f64);
            let foot = if b <= a {
                // Row i-1, columns j, j+1 (and j+2 or j-1 when stored).
                let r = b / a;
                (fj + r <= fi - 1.0 + eps).then(|| {
                    let (base, w) = quadratic_weights(j, r, i - 1);
                    Foot::Nodes {
                        idx: std::array::from_fn(|m| grid.idx(i - 1, (base + m).min(i - 1))),
                        w,
                        step: dx / a,
                    }
                })
            } else {
                // Column j+1, rows i, i-1 (and i-2 when stored). Rows above i
                // are not yet swept, so the last cell falls back to linear.
                let r = a / b;
                (fj + 1.0 <= fi - r + eps).then(|| {
                    let (idx, w) = if j + 2 < i {
                        let w = [
                            (r - 1.0) * (r - 2.0) / 2.0,
                            -r * (r - 2.0),
                            r * (r - 1.0) / 2.0,
                        ];
                        (
                            [
                                grid.idx(i, j + 1),
                                grid.idx(i - 1, j + 1),
                                grid.idx(i - 2, j + 1),
                            ],
                            w,
                        )
                    } else {
                        let p = grid.idx(i, j + 1);
                        ([p, grid.idx(i - 1, j + 1), p], [1.0 - r, r, 0.0])
                    };
                    Foot::Nodes {
                        idx,
                        w,
                        step: dx / b,
                    }
                })
            };
            let foot = foot.unwrap_or_else(|| {
                let s = (fi - fj) / (a + b);
                Foot::Diagonal {
                    y: fi - a * s,
                    step: s * dx,
                }
            });
            feet[grid.idx(i, j)] = Some(foot);
        }
    }
    feet
}

/// Quadratic Lagrange weights for the point `lo + r` (`0 <= r <= 1`) on a
/// line of nodes `0..=last`. Returns the first of three consecutive nodes
/// and their weights; uses `lo-1..=lo+1` when `lo+2` is out of range and
/// linear weights when the line has only two nodes. Callers clamp the
/// zero-weight third index in that case.
fn quadratic_weights(lo: usize, r: f64, last: usize) -> (usize, [f64; 3]) {
    if lo + 2 <= last {
        (
            lo,
            [
                (r - 1.0) * (r - 2.0) / 2.0,
                -r * (r - 2.0),
                r * (r - 1.0) / 2.0,
            ],
        )
    } else if lo >= 1 {
        (
            lo - 1,
            [r * (r - 1.0) / 2.0, 1.0 - r * r, r * (r + 1.0) / 2.0],
        )
    } else {
        // Only nodes lo and lo+1 exist; the third weight is zero.
        (lo, [1.0 - r, r, 0.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Profile;

    fn coeffs(c: f64, l1: f64, l2: f64) -> PlantCoefficients {
        PlantCoefficients {
            lambda1: l1,
            lambda2: l2,
            c1: Profile::constant(c),
            c2: Profile::constant(c),
            q: 1.0,
            rho: 1.0,
            ell: 1.0,
        }
    }

    #[test]
    fn zero_coupling_gives_exactly_zero_kernels() {
        let grid = TriangularGrid::new(21, 1.0).unwrap();
        for family in KernelFamily::ALL {
            let k = solve_kernels(family, &coeffs(0.0, 1.0, 2.0), grid, 1e-10, 100).unwrap();
            assert_eq!(k.max_abs(), 0.0, "family {family}");
        }
    }

    #[test]
    fn diagonal_data_is_imposed_exactly() {
        let grid = TriangularGrid::new(41, 1.0).unwrap();
        let c = coeffs(0.3, 1.5, 0.7);
        let k = solve_kernels(KernelFamily::Controller, &c, grid, 1e-12, 200).unwrap();
        for i in 0..41 {
            assert_eq!(k.k12(i, i), 0.3 / 2.2);
            assert_eq!(k.k21(i, i), -0.3 / 2.2);
        }
        let p = solve_kernels(KernelFamily::Observer, &c, grid, 1e-12, 200).unwrap();
        assert_eq!(p.k12(7, 7), -0.3 / 2.2);
        assert_eq!(p.k21(7, 7), 0.3 / 2.2);
    }

    #[test]
    fn edge_relations_hold() {
        let grid = TriangularGrid::new(31, 1.0).unwrap();
        let mut c = coeffs(0.2, 1.0, 2.0);
        c.q = 0.8;
        c.rho = -0.6;
        let k = solve_kernels(KernelFamily::Controller, &c, grid, 1e-12, 200).unwrap();
        for i in 0..31 {
            assert!((k.k11(i, 0) * c.q * c.lambda1 - c.lambda2 * k.k12(i, 0)).abs() < 1e-14);
        }
        let p = solve_kernels(KernelFamily::Observer, &c, grid, 1e-12, 200).unwrap();
        for j in 0..31 {
            assert!((p.k11(30, j) * c.rho - p.k21(30, j)).abs() < 1e-14);
            assert!((p.k22(30, j) - c.rho * p.k12(30, j)).abs() < 1e-14);
        }
    }

    #[test]
    fn residuals_below_tolerance_for_all_families() {
        let grid = TriangularGrid::new(51, 1.0).unwrap();
        let mut c = coeffs(0.4, 1.0, 2.5);
        c.c2 = Profile::Exponential {
            amplitude: -0.3,
            rate: 0.7,
        };
        for family in KernelFamily::ALL {
            let k = solve_kernels(family, &c, grid, 1e-11, 500).unwrap();
            let r = k.residuals(&c).unwrap();
            assert!(r.max() <= 1e-11, "{family}: {r:?}");
        }
    }

    #[test]
    fn reports_non_convergence() {
        let grid = TriangularGrid::new(21, 1.0).unwrap();
        let err = solve_kernels(
            KernelFamily::Observer,
            &coeffs(0.5, 1.0, 1.0),
            grid,
            1e-14,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 1, .. }));
    }

    #[test]
    fn rejects_non_finite_coupling() {
        let grid = TriangularGrid::new(5, 1.0).unwrap();
        let mut c = coeffs(0.1, 1.0, 1.0);
        c.c1 = Profile::Sampled {
            values: vec![0.0, f64::INFINITY, 0.0],
        };
        let err = solve_kernels(KernelFamily::Controller, &c, grid, 1e-8, 10).unwrap_err();
        assert!(matches!(err, Error::InvalidCoefficients(_)));
    }

    #[test]
    fn quadratic_weights_reproduce_parabolas() {
        let f = |x: f64| 1.0 + 2.0 * x - 0.5 * x * x;
        for (lo, r, last) in [(0, 0.3, 5), (4, 0.7, 5), (3, 0.25, 4)] {
            let (base, w) = quadratic_weights(lo, r, last);
            let v: f64 = (0..3).map(|m| w[m] * f((base + m) as f64)).sum();
            assert!((v - f(lo as f64 + r)).abs() < 1e-13);
        }
    }

    #[test]
    fn feet_stay_inside_the_triangle() {
        let grid = TriangularGrid::new(17, 1.0).unwrap();
        for (a, b) in [
            (1.0, 0.3),
            (0.3, 1.0),
            (1.0, 1.0),
            (5.43, 3.43),
            (3.43, 5.43),
        ] {
            let feet = cross_feet(&grid, a, b);
            for i in 0..17 {
                for j in 0..=i {
                    let p = grid.idx(i, j);
                    match &feet[p] {
                        Some(Foot::Nodes { idx, w, step }) => {
                            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14, "node {p}");
                            // Earlier rows, or columns of this row already swept.
                            let swept =
                                |q: usize| q < grid.idx(i, 0) || (q > p && q <= grid.idx(i, i));
                            assert!(
                                idx.iter().all(|&q| swept(q)),
                                "node {p} reads an unswept node"
                            );
                            assert!(*step > 0.0);
                        }
                        Some(Foot::Diagonal { y, step }) => {
                            assert!(*y >= 0.0 && *y <= 16.0 && *step > 0.0);
                        }
                        None => assert_eq!(i, j),
                    }
                }
            }
        }
    }
}
