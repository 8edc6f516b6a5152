//! Free-energy landscape of a symmetric pairwise model on a 4-regular torus.
//!
//! Every edge shares the belief `b_a = [[x, y], [y, 1 - x - 2y]]` and every
//! node `b_i = (x + y, 1 - x - y)`, so the free energy per node is
//! `2 U_a - T (2 H_a + c_i H_i)` with `c_i = -3` (Bethe) or `-2` (default
//! convex).
//!
//! Near the corners the interesting structure is exponentially small in
//! `1/T`, far below the resolution of `F` itself. Values are therefore also
//! computed relative to the corner `(0, 0)` with accurate small-argument
//! terms, and basins are counted on that relative value.

use std::collections::VecDeque;
use std::str::FromStr;

use serde::Serialize;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContourMode {
    Bethe,
    Convex,
}

impl ContourMode {
    /// Node counting number on the 4-regular torus.
    pub fn c_i(self) -> f64 {
        match self {
            ContourMode::Bethe => -3.0,
            ContourMode::Convex => -2.0,
        }
    }
}

impl FromStr for ContourMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bethe" => Ok(ContourMode::Bethe),
            "convex" => Ok(ContourMode::Convex),
            _ => Err(format!("unknown contour mode {s:?} (bethe, convex)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourRow {
    pub temperature: f64,
    pub x: f64,
    pub y: f64,
    /// Free energy per node.
    pub f: f64,
    /// `f` minus its value at `(0, 0)`, computed without cancellation.
    pub df: f64,
}

/// Grid axes: `resolution + 1` uniform points on `[0, 1]`, plus (when
/// `refine_decades > 0`) the points `10^-k` and `1 - 10^-k` for
/// `k = 1..=refine_decades`.
///
/// `stencil_radius` sets the window used to decide whether a cell is a local
/// minimum: all cells within that many index steps in each direction. Plain
/// 8-neighbourhoods report spurious minima along narrow valleys that run
/// obliquely to the lattice, e.g. hugging the edge `x + 2y = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourGrid {
    pub resolution: usize,
    pub refine_decades: usize,
    pub stencil_radius: usize,
}

impl Default for ContourGrid {
    fn default() -> Self {
        Self { resolution: 200, refine_decades: 300, stencil_radius: 4 }
    }
}

impl ContourGrid {
    pub fn axis(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..=self.resolution).map(|k| k as f64 / self.resolution as f64).collect();
        for k in 1..=self.refine_decades.min(320) {
            let p = 10f64.powi(-(k as i32));
            v.push(p);
            if 1.0 - p < 1.0 {
                v.push(1.0 - p);
            }
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourTable {
    pub mode: ContourMode,
    pub rows: Vec<ContourRow>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    stencil_radius: usize,
    // per temperature, row index by (x index, y index), None when infeasible
    index: Vec<Vec<Option<usize>>>,
    temperatures: Vec<f64>,
}

// -p ln p, accurate for tiny p
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

// -(1 - z) ln(1 - z), accurate for tiny z
fn qlogq(z: f64) -> f64 {
    if z < 1.0 {
        -(1.0 - z) * (-z).ln_1p()
    } else {
        0.0
    }
}

/// Per-node free energy and its offset from the `(0, 0)` corner.
///
/// `energy` holds `E = -ln psi` for the cells `[00, 01, 10, 11]`.
pub fn symmetric_free_energy(energy: [f64; 4], mode: ContourMode, t: f64, x: f64, y: f64) -> (f64, f64) {
    let z = x + 2.0 * y;
    let h_a = plogp(x) + 2.0 * plogp(y) + qlogq(z);
    let h_i = plogp(x + y) + qlogq(x + y);
    let s = 2.0 * h_a + mode.c_i() * h_i;
    let u0 = 2.0 * energy[3];
    let du = 2.0 * (x * (energy[0] - energy[3]) + y * (energy[1] + energy[2] - 2.0 * energy[3]));
    let df = du - t * s;
    (u0 + df, df)
}

/// Evaluates the symmetric-belief free energy on the feasible grid
/// `x, y >= 0, x + 2y <= 1` at each temperature.
pub fn emit_contour(
    potential: [[f64; 2]; 2],
    temperatures: &[f64],
    grid: ContourGrid,
    mode: ContourMode,
) -> Result<ContourTable, HarnessError> {
    if potential[0][1] != potential[1][0] {
        return Err(HarnessError::InvalidSpec("potential must be symmetric".into()));
    }
    if potential.iter().flatten().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(HarnessError::InvalidSpec("potential entries must be positive and finite".into()));
    }
    if temperatures.iter().any(|&t| !(t > 0.0)) {
        return Err(HarnessError::InvalidSpec("temperatures must be positive".into()));
    }
    let energy = [-potential[0][0].ln(), -potential[0][1].ln(), -potential[1][0].ln(), -potential[1][1].ln()];
    let xs = grid.axis();
    let ys: Vec<f64> = xs.iter().copied().filter(|&y| y <= 0.5).collect();
    let mut rows = Vec::new();
    let mut index = Vec::with_capacity(temperatures.len());
    for &t in temperatures {
        let mut idx = vec![None; xs.len() * ys.len()];
        for (k, &x) in xs.iter().enumerate() {
            for (l, &y) in ys.iter().enumerate() {
                if x + 2.0 * y > 1.0 {
                    break;
                }
                let (f, df) = symmetric_free_energy(energy, mode, t, x, y);
                idx[k * ys.len() + l] = Some(rows.len());
                rows.push(ContourRow { temperature: t, x, y, f, df });
            }
        }
        index.push(idx);
    }
    Ok(ContourTable { mode, rows, xs, ys, stencil_radius: grid.stencil_radius.max(1), index, temperatures: temperatures.to_vec() })
}

impl ContourTable {
    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }

    fn rows_at(&self, k: usize) -> impl Iterator<Item = &ContourRow> {
        self.index[k].iter().flatten().map(|&r| &self.rows[r])
    }

    /// Grid point of smallest free energy at the `k`-th temperature.
    pub fn minimizer(&self, k: usize) -> ContourRow {
        *self.rows_at(k).min_by(|a, b| a.df.total_cmp(&b.df)).expect("grid is nonempty")
    }

    /// Number of discrete basins at the `k`-th temperature: maximal
    /// connected plateaus of equal value with no strictly lower cell inside
    /// the stencil window of any member.
    ///
    /// Values closer than a rounding allowance (relative to the magnitude of
    /// the terms that produced them) count as equal.
    pub fn basin_count(&self, k: usize) -> usize {
        self.basins(k).len()
    }

    /// Lowest point of each basin counted by [`basin_count`](Self::basin_count).
    pub fn basins(&self, k: usize) -> Vec<ContourRow> {
        let ny = self.ys.len();
        let idx = &self.index[k];
        let at = |p: usize| idx[p].map(|r| self.rows[r].df);
        let allowance = |v: f64| 1e-12 * v.abs() + 1e-300;
        let r = self.stencil_radius as isize;
        let neighbours = |p: usize| {
            let (kx, ly) = ((p / ny) as isize, (p % ny) as isize);
            let mut out = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
            for dx in -r..=r {
                for dy in -r..=r {
                    let (a, b) = (kx + dx, ly + dy);
                    if (dx, dy) != (0, 0) && a >= 0 && b >= 0 && (a as usize) < self.xs.len() && (b as usize) < ny {
                        let q = a as usize * ny + b as usize;
                        if idx[q].is_some() {
                            out.push(q);
                        }
                    }
                }
            }
            out
        };
        // seeds in ascending order, so every plateau is entered at its lowest cell
        let mut order: Vec<usize> = (0..idx.len()).filter(|&p| idx[p].is_some()).collect();
        order.sort_by(|&p, &q| at(p).unwrap().total_cmp(&at(q).unwrap()));
        let mut seen = vec![false; idx.len()];
        let mut basins = Vec::new();
        for start in order {
            if seen[start] {
                continue;
            }
            let v0 = at(start).unwrap();
            let tol = allowance(v0);
            let mut is_min = true;
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(p) = queue.pop_front() {
                for q in neighbours(p) {
                    let w = at(q).unwrap();
                    if w < v0 - tol {
                        is_min = false;
                    } else if w <= v0 + tol && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
            if is_min {
                basins.push(self.rows[idx[start].unwrap()]);
            }
        }
        basins
    }

    /// `T,x,y,F` rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,x,y,F\n");
        for r in &self.rows {
            out += &format!("{:e},{:e},{:e},{:e}\n", r.temperature, r.x, r.y, r.f);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beliefs::{free_energy, BeliefSet};
    use crate::counting::{bethe, default_convex};
    use crate::model::{FactorDef, FactorGraph};

    const PSI: [[f64; 2]; 2] = [[3.0, 1.0], [1.0, 2.0]];

    fn torus() -> FactorGraph<f64> {
        let e: Vec<f64> = PSI.iter().flatten().map(|p| -p.ln()).collect();
        let mut factors = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                let i = r * 3 + c;
                factors.push(FactorDef::new(vec![i, r * 3 + (c + 1) % 3], e.clone()));
                factors.push(FactorDef::new(vec![i, ((r + 1) % 3) * 3 + c], e.clone()));
            }
        }
        FactorGraph::from_tables(&[2; 9], factors).unwrap()
    }

    #[test]
    fn matches_library_free_energy() {
        let g = torus();
        let energy = [-3f64.ln(), 0.0, 0.0, -2f64.ln()];
        for (mode, counts) in [(ContourMode::Bethe, bethe(&g)), (ContourMode::Convex, default_convex(&g).0)] {
            for &(x, y, t) in &[(0.2, 0.1, 1.0), (0.7, 0.05, 0.3), (0.01, 0.3, 0.03)] {
                let b = BeliefSet {
                    factors: vec![vec![x, y, y, 1.0 - x - 2.0 * y]; g.num_factors()],
                    variables: vec![vec![x + y, 1.0 - x - y]; 9],
                };
                let lib = free_energy(&g, &b, &counts, t) / 9.0;
                let (f, _) = symmetric_free_energy(energy, mode, t, x, y);
                assert!((lib - f).abs() < 1e-12, "{mode:?} {x} {y} {t}: {lib} vs {f}");
            }
        }
    }

    #[test]
    fn uniform_potential_peaks_at_max_entropy() {
        let table = emit_contour([[1.0, 1.0], [1.0, 1.0]], &[0.5], ContourGrid { resolution: 40, refine_decades: 0, ..ContourGrid::default() }, ContourMode::Convex)
            .unwrap();
        let m = table.minimizer(0);
        assert!((m.x - 0.25).abs() < 1e-12 && (m.y - 0.25).abs() < 1e-12);
        assert_eq!(table.basin_count(0), 1);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(emit_contour([[1.0, 2.0], [1.0, 1.0]], &[1.0], ContourGrid::default(), ContourMode::Bethe).is_err());
    }
}
