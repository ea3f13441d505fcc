use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hilbert::{Operator, StateVector, C64, MAX_DENSE_DIM};

/// Default bound on the total number of grid nodes.
pub const DEFAULT_POINT_CAP: usize = 1 << 20;

/// One configuration-space direction. Node i sits at `origin + i·spacing`
/// and owns the cell of width `spacing` centred on it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub points: usize,
    pub spacing: f64,
    pub origin: f64,
    pub periodic: bool,
    pub mass: f64,
}

impl Axis {
    /// Lattice hopping 1/(2 m dx²).
    pub fn hopping(&self) -> f64 {
        1.0 / (2.0 * self.mass * self.spacing * self.spacing)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    /// Lower edge of the domain (the first cell's left face).
    pub fn lower(&self) -> f64 {
        self.origin - 0.5 * self.spacing
    }

    pub fn length(&self) -> f64 {
        self.points as f64 * self.spacing
    }

    pub fn upper(&self) -> f64 {
        self.lower() + self.length()
    }

    pub(crate) fn wrap(&self, x: f64) -> f64 {
        if !self.periodic {
            return x;
        }
        let l = self.length();
        let mut y = (x - self.lower()) % l;
        if y < 0.0 {
            y += l;
        }
        self.lower() + y
    }

    pub(crate) fn contains(&self, x: f64) -> bool {
        self.periodic || (x >= self.lower() && x <= self.upper())
    }

    /// Nearest node to `x` (after wrapping); clamped to the edge nodes.
    pub(crate) fn nearest(&self, x: f64) -> usize {
        let u = libm::round((self.wrap(x) - self.origin) / self.spacing);
        if u <= 0.0 {
            0
        } else if u as usize >= self.points {
            if self.periodic {
                0
            } else {
                self.points - 1
            }
        } else {
            u as usize
        }
    }
}

/// A 1D or 2D configuration space with axis 0 on the slow node index.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigGrid {
    axes: Vec<Axis>,
}

impl ConfigGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        Self::with_cap(axes, DEFAULT_POINT_CAP)
    }

    pub fn with_cap(axes: Vec<Axis>, cap: usize) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::invalid(format!(
                "grids have 1 or 2 dimensions, got {}",
                axes.len()
            )));
        }
        for (d, a) in axes.iter().enumerate() {
            if a.points < 4 {
                return Err(Error::invalid(format!("axis {d} needs at least 4 points")));
            }
            if !(a.spacing.is_finite() && a.spacing > 0.0) {
                return Err(Error::invalid(format!("axis {d} spacing must be positive")));
            }
            if !(a.mass.is_finite() && a.mass > 0.0) {
                return Err(Error::invalid(format!("axis {d} mass must be positive")));
            }
            if !a.origin.is_finite() {
                return Err(Error::invalid(format!("axis {d} origin must be finite")));
            }
        }
        let total = axes.iter().fold(1usize, |acc, a| acc.saturating_mul(a.points));
        if total > cap {
            return Err(Error::CapExceeded {
                what: "grid points",
                count: total as u128,
                cap: cap as u128,
            });
        }
        Ok(Self { axes })
    }

    /// Uniform 1D grid.
    pub fn line(points: usize, spacing: f64, origin: f64, periodic: bool, mass: f64) -> Result<Self> {
        Self::new(vec![Axis {
            points,
            spacing,
            origin,
            periodic,
            mass,
        }])
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, d: usize) -> &Axis {
        &self.axes[d]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Π_d dx_d.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).product()
    }

    /// Points along the fast axis (1 for a 1D grid).
    pub(crate) fn stride(&self) -> usize {
        if self.dims() == 2 {
            self.axes[1].points
        } else {
            1
        }
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        let s = self.stride();
        if self.dims() == 2 {
            [node / s, node % s]
        } else {
            [node, 0]
        }
    }

    pub fn node(&self, idx: [usize; 2]) -> usize {
        if self.dims() == 2 {
            idx[0] * self.stride() + idx[1]
        } else {
            idx[0]
        }
    }

    pub fn node_position(&self, node: usize) -> [f64; 2] {
        let idx = self.multi_index(node);
        let mut p = [0.0; 2];
        for (d, a) in self.axes.iter().enumerate() {
            p[d] = a.coordinate(idx[d]);
        }
        p
    }

    pub fn wrap(&self, pos: [f64; 2]) -> [f64; 2] {
        let mut p = pos;
        for (d, a) in self.axes.iter().enumerate() {
            p[d] = a.wrap(pos[d]);
        }
        p
    }

    pub fn contains(&self, pos: [f64; 2]) -> bool {
        self.axes.iter().enumerate().all(|(d, a)| a.contains(pos[d]))
    }

    /// The node whose cell holds `pos` (edge cells absorb out-of-range
    /// coordinates on open axes).
    pub fn nearest_node(&self, pos: [f64; 2]) -> usize {
        let mut idx = [0usize; 2];
        for (d, a) in self.axes.iter().enumerate() {
            idx[d] = a.nearest(pos[d]);
        }
        self.node(idx)
    }

    pub fn check_values(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::invalid(format!(
                "{what} has {len} entries for a grid of {} points",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Gaussian wave packet A·exp(−(x−x₀)²/(4σ²) + i k·(x−x₀)), so that |ψ|² has
/// standard deviation σ along each axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPacket {
    pub center: [f64; 2],
    pub width: [f64; 2],
    pub momentum: [f64; 2],
    pub amplitude: C64,
}

impl GaussianPacket {
    pub fn value(&self, pos: [f64; 2], dims: usize) -> C64 {
        let mut exponent = C64::new(0.0, 0.0);
        for d in 0..dims {
            let dx = pos[d] - self.center[d];
            exponent += C64::new(
                -dx * dx / (4.0 * self.width[d] * self.width[d]),
                self.momentum[d] * dx,
            );
        }
        self.amplitude * exponent.exp()
    }
}

/// Ψ sampled at grid nodes, normalized so Σ|Ψ|²·ΔV = 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWavefunction {
    grid: ConfigGrid,
    values: Vec<C64>,
    time: f64,
}

impl GridWavefunction {
    pub fn new(grid: ConfigGrid, values: Vec<C64>, time: f64) -> Result<Self> {
        grid.check_values(values.len(), "wavefunction")?;
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("wavefunction has non-finite values"));
        }
        if !time.is_finite() {
            return Err(Error::invalid("wavefunction time must be finite"));
        }
        Ok(Self { grid, values, time })
    }

    /// Normalized superposition of packets; periodic axes use the nearest
    /// image of each node.
    pub fn gaussian_packets(grid: ConfigGrid, packets: &[GaussianPacket], time: f64) -> Result<Self> {
        if packets.is_empty() {
            return Err(Error::invalid("at least one packet is required"));
        }
        for p in packets {
            for d in 0..grid.dims() {
                if !(p.width[d].is_finite() && p.width[d] > 0.0) {
                    return Err(Error::invalid("packet widths must be positive"));
                }
            }
        }
        let dims = grid.dims();
        let values = (0..grid.len())
            .map(|node| {
                let pos = grid.node_position(node);
                packets
                    .iter()
                    .map(|p| {
                        let mut rel = pos;
                        for (d, a) in grid.axes().iter().enumerate() {
                            if a.periodic {
                                let l = a.length();
                                let mut dx = (pos[d] - p.center[d]) % l;
                                if dx > 0.5 * l {
                                    dx -= l;
                                } else if dx < -0.5 * l {
                                    dx += l;
                                }
                                rel[d] = p.center[d] + dx;
                            }
                        }
                        p.value(rel, dims)
                    })
                    .sum()
            })
            .collect();
        let mut psi = Self::new(grid, values, time)?;
        psi.normalize()?;
        Ok(psi)
    }

    pub fn grid(&self) -> &ConfigGrid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set(&mut self, values: Vec<C64>, time: f64) {
        self.values = values;
        self.time = time;
    }

    /// Σ|Ψ|²·ΔV.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = libm::sqrt(self.norm_sqr());
        if n == 0.0 {
            return Err(Error::invalid("cannot normalize a vanishing wavefunction"));
        }
        self.values.iter_mut().for_each(|v| *v /= n);
        Ok(())
    }

    /// ρ = |Ψ|² at each node.
    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// |Ψ|²·ΔV per cell.
    pub fn cell_probabilities(&self) -> Vec<f64> {
        let dv = self.grid.cell_volume();
        self.values.iter().map(|v| v.norm_sqr() * dv).collect()
    }

    /// Amplitudes Ψ·√ΔV as a Hilbert-space vector.
    pub fn to_state_vector(&self) -> StateVector {
        let s = libm::sqrt(self.grid.cell_volume());
        StateVector::from_vec_unchecked(self.values.iter().map(|v| v * s).collect())
    }

    pub fn from_state_vector(grid: ConfigGrid, state: &StateVector, time: f64) -> Result<Self> {
        let s = libm::sqrt(grid.cell_volume());
        Self::new(grid, state.amplitudes().iter().map(|v| v / s).collect(), time)
    }
}

/// V = ½ Σ_d m_d ω_d² (x_d − c_d)² at the nodes.
pub fn harmonic_potential(grid: &ConfigGrid, omega: [f64; 2], center: [f64; 2]) -> Vec<f64> {
    (0..grid.len())
        .map(|node| {
            let p = grid.node_position(node);
            grid.axes()
                .iter()
                .enumerate()
                .map(|(d, a)| {
                    let r = p[d] - center[d];
                    0.5 * a.mass * omega[d] * omega[d] * r * r
                })
                .sum()
        })
        .collect()
}

/// The lattice Hamiltonian as a dense operator on the node basis.
pub fn grid_hamiltonian(grid: &ConfigGrid, potential: &[f64]) -> Result<Operator> {
    grid.check_values(potential.len(), "potential")?;
    let n = grid.len();
    if n > MAX_DENSE_DIM {
        return Err(Error::CapExceeded {
            what: "dense grid size",
            count: n as u128,
            cap: MAX_DENSE_DIM as u128,
        });
    }
    let mut entries = vec![C64::new(0.0, 0.0); n * n];
    for node in 0..n {
        let mut diag = potential[node];
        let idx = grid.multi_index(node);
        for (d, a) in grid.axes().iter().enumerate() {
            let c = a.hopping();
            diag += 2.0 * c;
            let i = idx[d];
            let mut neighbours = [None, None];
            if i + 1 < a.points {
                neighbours[0] = Some(i + 1);
            } else if a.periodic {
                neighbours[0] = Some(0);
            }
            if i > 0 {
                neighbours[1] = Some(i - 1);
            } else if a.periodic {
                neighbours[1] = Some(a.points - 1);
            }
            for j in neighbours.into_iter().flatten() {
                let mut other = idx;
                other[d] = j;
                entries[node * n + grid.node(other)] -= C64::new(c, 0.0);
            }
        }
        entries[node * n + node] += C64::new(diag, 0.0);
    }
    Ok(Operator::from_fn(n, |i, j| entries[i * n + j]))
}
