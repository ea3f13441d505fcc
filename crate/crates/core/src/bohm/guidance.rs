use alloc::vec;
use alloc::vec::Vec;

use super::grid::{ConfigGrid, GridWavefunction};
use crate::hilbert::C64;

/// Nodes with ρ below this fraction of max ρ get zero velocity.
pub const NODE_CUTOFF: f64 = 1e-12;

/// Guidance field on the grid: node current j, density ρ and v = j/ρ.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    grid: ConfigGrid,
    values: Vec<[f64; 2]>,
    current: Vec<[f64; 2]>,
    density: Vec<f64>,
    cutoff: f64,
}

/// v = j/ρ with the central-difference lattice current
/// j_d = Im(Ψ* (Ψ₊ − Ψ₋)) / (2 m_d dx_d). Open axes see Ψ = 0 past the edge.
pub fn velocity_field(psi: &GridWavefunction) -> VelocityField {
    let grid = psi.grid();
    let values = psi.values();
    let rho_max = values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    let cutoff = NODE_CUTOFF * rho_max;
    let zero = C64::new(0.0, 0.0);
    let density: Vec<f64> = values.iter().map(|v| v.norm_sqr()).collect();
    let mut current = vec![[0.0; 2]; grid.len()];
    let mut out = vec![[0.0; 2]; grid.len()];
    for (node, (v, jn)) in out.iter_mut().zip(current.iter_mut()).enumerate() {
        let here = values[node];
        let rho = density[node];
        let idx = grid.multi_index(node);
        for (d, a) in grid.axes().iter().enumerate() {
            let neighbour = |j: Option<usize>| {
                j.map_or(zero, |j| {
                    let mut other = idx;
                    other[d] = j;
                    values[grid.node(other)]
                })
            };
            let i = idx[d];
            let up = if i + 1 < a.points {
                Some(i + 1)
            } else if a.periodic {
                Some(0)
            } else {
                None
            };
            let down = if i > 0 {
                Some(i - 1)
            } else if a.periodic {
                Some(a.points - 1)
            } else {
                None
            };
            let diff = neighbour(up) - neighbour(down);
            jn[d] = (here.conj() * diff).im / (2.0 * a.mass * a.spacing);
            if rho >= cutoff && rho > 0.0 {
                v[d] = jn[d] / rho;
            }
        }
    }
    VelocityField {
        grid: grid.clone(),
        values: out,
        current,
        density,
        cutoff,
    }
}

impl VelocityField {
    pub fn grid(&self) -> &ConfigGrid {
        &self.grid
    }

    /// Node velocities.
    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn current(&self) -> &[[f64; 2]] {
        &self.current
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// j and ρ interpolated multilinearly and divided, zero where the
    /// interpolated ρ is below the cutoff. Reproduces the node velocities at
    /// nodes. Periodic axes wrap, open axes clamp to the edge nodes.
    pub fn at(&self, pos: [f64; 2]) -> [f64; 2] {
        let g = &self.grid;
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        let mut frac = [0.0; 2];
        for (d, a) in g.axes().iter().enumerate() {
            let n = a.points;
            let mut u = (a.wrap(pos[d]) - a.origin) / a.spacing;
            if a.periodic {
                if u < 0.0 {
                    u += n as f64;
                }
                let i = (libm::floor(u) as usize).min(n - 1);
                lo[d] = i;
                hi[d] = (i + 1) % n;
                frac[d] = (u - i as f64).clamp(0.0, 1.0);
            } else {
                let u = u.clamp(0.0, (n - 1) as f64);
                let i = (libm::floor(u) as usize).min(n - 2);
                lo[d] = i;
                hi[d] = i + 1;
                frac[d] = u - i as f64;
            }
        }
        let mut j = [0.0; 2];
        let mut rho = 0.0;
        let corners = 1usize << g.dims();
        for c in 0..corners {
            let mut idx = [0usize; 2];
            let mut w = 1.0;
            for d in 0..g.dims() {
                if c >> d & 1 == 1 {
                    idx[d] = hi[d];
                    w *= frac[d];
                } else {
                    idx[d] = lo[d];
                    w *= 1.0 - frac[d];
                }
            }
            if w == 0.0 {
                continue;
            }
            let node = g.node(idx);
            j[0] += w * self.current[node][0];
            j[1] += w * self.current[node][1];
            rho += w * self.density[node];
        }
        if rho < self.cutoff || rho <= 0.0 {
            return [0.0; 2];
        }
        [j[0] / rho, j[1] / rho]
    }
}

#[cfg(test)]
mod tests {
    use super::super::grid::Axis;
    use super::*;

    fn plane_wave(n: usize, dx: f64, k: f64, mass: f64) -> GridWavefunction {
        let g = ConfigGrid::line(n, dx, 0.0, true, mass).unwrap();
        let values = (0..n)
            .map(|i| C64::from_polar(1.0, k * g.axis(0).coordinate(i)))
            .collect();
        let mut psi = GridWavefunction::new(g, values, 0.0).unwrap();
        psi.normalize().unwrap();
        psi
    }

    #[test]
    fn real_wavefunction_has_no_velocity() {
        let g = ConfigGrid::line(32, 0.2, -3.0, false, 1.0).unwrap();
        let values = (0..32).map(|i| C64::new(libm::cos(i as f64 * 0.3), 0.0)).collect();
        let psi = GridWavefunction::new(g, values, 0.0).unwrap();
        let v = velocity_field(&psi);
        assert!(v.values().iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn plane_wave_velocity_is_uniform() {
        let n = 64;
        let dx = 0.25;
        let length = n as f64 * dx;
        let k = 2.0 * core::f64::consts::PI * 3.0 / length;
        let mass = 1.7;
        let psi = plane_wave(n, dx, k, mass);
        let expected = libm::sin(k * dx) / (mass * dx);
        let v = velocity_field(&psi);
        for x in v.values() {
            assert!((x[0] - expected).abs() < 1e-9);
        }
        assert!((v.at([3.3, 0.0])[0] - expected).abs() < 1e-9);
        assert!((v.at([-100.7, 0.0])[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn nodes_below_cutoff_are_still() {
        let n = 16;
        let g = ConfigGrid::line(n, 1.0, 0.0, true, 1.0).unwrap();
        let mut values: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, 0.4 * i as f64)).collect();
        values[5] = C64::new(1e-7, 1e-7);
        let psi = GridWavefunction::new(g, values, 0.0).unwrap();
        let v = velocity_field(&psi);
        assert_eq!(v.values()[5], [0.0, 0.0]);
        assert!(v.values()[6][0] != 0.0);
    }

    #[test]
    fn bilinear_interpolation_is_exact_for_linear_currents() {
        let ax = |n| Axis {
            points: n,
            spacing: 0.5,
            origin: 1.0,
            periodic: false,
            mass: 1.0,
        };
        let g = ConfigGrid::new(vec![ax(6), ax(5)]).unwrap();
        let current: Vec<[f64; 2]> = (0..g.len())
            .map(|node| {
                let p = g.node_position(node);
                [2.0 * p[0] - p[1], 0.5 * p[1] + 1.0]
            })
            .collect();
        let field = VelocityField {
            values: current.clone(),
            density: vec![1.0; g.len()],
            grid: g,
            current,
            cutoff: 0.0,
        };
        let v = field.at([2.3, 1.9]);
        assert!((v[0] - (4.6 - 1.9)).abs() < 1e-12);
        assert!((v[1] - (0.95 + 1.0)).abs() < 1e-12);
        // Clamped beyond the open edge.
        let edge = field.at([-5.0, 1.0]);
        assert!((edge[0] - (2.0 - 1.0)).abs() < 1e-12);
    }
}
