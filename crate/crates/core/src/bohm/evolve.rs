use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::grid::{ConfigGrid, GridWavefunction};
use crate::error::{Error, Result};
use crate::hilbert::C64;

/// Upper bound on |E|·dt for the largest lattice energy in one step.
pub const MAX_PHASE_PER_STEP: f64 = 8.0;

/// Per-step tolerance on the change of Σ|Ψ|²·ΔV.
pub const NORM_DRIFT_TOL: f64 = 1e-10;

const PIVOT_FLOOR: f64 = 1e-14;

/// Roots r of 1 + iz/2 − z²/12; the diagonal Padé approximant of e^{−iz}
/// is Π_r (1 + z/r)/(1 − z/r). These are 1/r for the two roots.
fn pade_weights() -> [C64; 2] {
    let s3 = libm::sqrt(3.0);
    [C64::new(s3, -3.0) / 12.0, C64::new(-s3, -3.0) / 12.0]
}

/// Solves (I − aH) x = b for one lattice line, H = tridiag(−c, 2c + w, −c).
#[derive(Clone, Debug)]
struct LineFactor {
    a: C64,
    hop: f64,
    onsite: Vec<f64>,
    periodic: bool,
    off: C64,
    upper: Vec<C64>,
    inv_pivot: Vec<C64>,
    // Sherman–Morrison pieces for the cyclic corners.
    corner: C64,
    z: Vec<C64>,
    denom: C64,
}

impl LineFactor {
    fn new(a: C64, hop: f64, potential: &[f64], periodic: bool) -> Result<Self> {
        let n = potential.len();
        let onsite: Vec<f64> = potential.iter().map(|w| 2.0 * hop + w).collect();
        let off = a * hop;
        let mut diag: Vec<C64> = onsite.iter().map(|e| C64::new(1.0, 0.0) - a * e).collect();
        let gamma = -diag[0];
        let corner = if periodic { off / gamma } else { C64::new(0.0, 0.0) };
        if periodic {
            diag[0] -= gamma;
            diag[n - 1] -= off * off / gamma;
        }
        let mut upper = vec![C64::new(0.0, 0.0); n];
        let mut inv_pivot = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let pivot = if i == 0 { diag[0] } else { diag[i] - off * upper[i - 1] };
            if pivot.norm() < PIVOT_FLOOR {
                return Err(Error::numerical(format!(
                    "tridiagonal pivot vanished at node {i}; reduce dt"
                )));
            }
            inv_pivot[i] = pivot.inv();
            upper[i] = off * inv_pivot[i];
        }
        let mut f = Self {
            a,
            hop,
            onsite,
            periodic,
            off,
            upper,
            inv_pivot,
            corner,
            z: Vec::new(),
            denom: C64::new(1.0, 0.0),
        };
        if periodic {
            let mut u = vec![C64::new(0.0, 0.0); n];
            u[0] = gamma;
            u[n - 1] = off;
            f.thomas(&mut u);
            f.denom = C64::new(1.0, 0.0) + u[0] + corner * u[n - 1];
            if f.denom.norm() < PIVOT_FLOOR {
                return Err(Error::numerical("cyclic correction is singular; reduce dt"));
            }
            f.z = u;
        }
        Ok(f)
    }

    fn thomas(&self, x: &mut [C64]) {
        let n = x.len();
        x[0] *= self.inv_pivot[0];
        for i in 1..n {
            x[i] = (x[i] - self.off * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] = x[i] - self.upper[i] * x[i + 1];
        }
    }

    fn solve(&self, x: &mut [C64]) {
        self.thomas(x);
        if self.periodic {
            let n = x.len();
            let s = (x[0] + self.corner * x[n - 1]) / self.denom;
            for (xi, zi) in x.iter_mut().zip(&self.z) {
                *xi -= s * zi;
            }
        }
    }

    /// x ← (I + aH) x.
    fn multiply(&self, x: &mut [C64], scratch: &mut Vec<C64>) {
        let n = x.len();
        scratch.clear();
        scratch.extend_from_slice(x);
        let s = scratch;
        for i in 0..n {
            let left = if i > 0 {
                s[i - 1]
            } else if self.periodic {
                s[n - 1]
            } else {
                C64::new(0.0, 0.0)
            };
            let right = if i + 1 < n {
                s[i + 1]
            } else if self.periodic {
                s[0]
            } else {
                C64::new(0.0, 0.0)
            };
            x[i] = s[i] + self.a * (s[i] * self.onsite[i] - (left + right) * self.hop);
        }
    }
}

/// Unitary one-step map on a single line: the [2/2] Padé approximant of
/// exp(−i h H_line).
#[derive(Clone, Debug)]
struct LineStep {
    factors: [LineFactor; 2],
}

impl LineStep {
    fn new(h: f64, hop: f64, potential: &[f64], periodic: bool) -> Result<Self> {
        let [w0, w1] = pade_weights();
        Ok(Self {
            factors: [
                LineFactor::new(w0 * h, hop, potential, periodic)?,
                LineFactor::new(w1 * h, hop, potential, periodic)?,
            ],
        })
    }

    fn apply(&self, x: &mut [C64], scratch: &mut Vec<C64>) {
        for f in &self.factors {
            f.multiply(x, scratch);
            f.solve(x);
        }
    }
}

#[derive(Clone, Debug)]
enum Scheme {
    Line(LineStep),
    // Strang split: half steps along axis 0 around a full step along axis 1,
    // each direction carrying half the potential.
    Split { slow: Vec<LineStep>, fast: Vec<LineStep> },
}

/// Norm-preserving propagator for a fixed grid, potential and step.
#[derive(Clone, Debug)]
pub struct GridPropagator {
    grid: ConfigGrid,
    dt: f64,
    scheme: Scheme,
}

impl GridPropagator {
    pub fn new(grid: &ConfigGrid, potential: &[f64], dt: f64) -> Result<Self> {
        grid.check_values(potential.len(), "potential")?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive and finite, got {dt}")));
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("potential has non-finite values"));
        }
        let kinetic: f64 = grid.axes().iter().map(|a| 4.0 * a.hopping()).sum();
        let vmax = potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let vmin = potential.iter().cloned().fold(f64::INFINITY, f64::min);
        let e_bound = libm::fabs(vmin).max(libm::fabs(kinetic + vmax));
        if e_bound * dt > MAX_PHASE_PER_STEP {
            return Err(Error::invalid(format!(
                "unstable step: |E|max·dt = {:.3e} exceeds {MAX_PHASE_PER_STEP} (|E|max = {e_bound:.3e}); reduce dt below {:.3e}",
                e_bound * dt,
                MAX_PHASE_PER_STEP / e_bound
            )));
        }
        let scheme = if grid.dims() == 1 {
            let a = grid.axis(0);
            Scheme::Line(LineStep::new(dt, a.hopping(), potential, a.periodic)?)
        } else {
            let (a0, a1) = (grid.axis(0), grid.axis(1));
            let (n0, n1) = (a0.points, a1.points);
            let slow = (0..n1)
                .map(|j| {
                    let w: Vec<f64> = (0..n0).map(|i| 0.5 * potential[i * n1 + j]).collect();
                    LineStep::new(0.5 * dt, a0.hopping(), &w, a0.periodic)
                })
                .collect::<Result<Vec<_>>>()?;
            let fast = (0..n0)
                .map(|i| {
                    let w: Vec<f64> = potential[i * n1..(i + 1) * n1].iter().map(|v| 0.5 * v).collect();
                    LineStep::new(dt, a1.hopping(), &w, a1.periodic)
                })
                .collect::<Result<Vec<_>>>()?;
            Scheme::Split { slow, fast }
        };
        Ok(Self {
            grid: grid.clone(),
            dt,
            scheme,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &ConfigGrid {
        &self.grid
    }

    /// Advances raw node values by one step.
    pub fn step_values(&self, values: &mut [C64]) {
        let mut scratch = Vec::with_capacity(values.len());
        match &self.scheme {
            Scheme::Line(step) => step.apply(values, &mut scratch),
            Scheme::Split { slow, fast } => {
                let n1 = fast.first().map_or(1, |_| self.grid.axis(1).points);
                let n0 = self.grid.axis(0).points;
                let mut line = vec![C64::new(0.0, 0.0); n0];
                let mut half = |values: &mut [C64], scratch: &mut Vec<C64>| {
                    for (j, step) in slow.iter().enumerate() {
                        for i in 0..n0 {
                            line[i] = values[i * n1 + j];
                        }
                        step.apply(&mut line, scratch);
                        for i in 0..n0 {
                            values[i * n1 + j] = line[i];
                        }
                    }
                };
                half(values, &mut scratch);
                for (i, step) in fast.iter().enumerate() {
                    step.apply(&mut values[i * n1..(i + 1) * n1], &mut scratch);
                }
                half(values, &mut scratch);
            }
        }
    }

    /// One step with the norm-drift check.
    pub fn step(&self, psi: &mut GridWavefunction) -> Result<()> {
        if psi.grid() != &self.grid {
            return Err(Error::invalid("wavefunction grid differs from propagator grid"));
        }
        let before = psi.norm_sqr();
        let mut values = psi.values().to_vec();
        self.step_values(&mut values);
        psi.set(values, psi.time() + self.dt);
        let drift = libm::fabs(psi.norm_sqr() - before);
        if !(drift <= NORM_DRIFT_TOL) {
            return Err(Error::numerical(format!(
                "norm drift {drift:.3e} exceeds {NORM_DRIFT_TOL:e} in one step"
            )));
        }
        Ok(())
    }
}

/// Evolves Ψ through `steps` steps of size `dt`.
pub fn evolve_wavefunction(
    psi: &GridWavefunction,
    potential: &[f64],
    dt: f64,
    steps: usize,
) -> Result<GridWavefunction> {
    let prop = GridPropagator::new(psi.grid(), potential, dt)?;
    let mut out = psi.clone();
    for _ in 0..steps {
        prop.step(&mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::grid::{grid_hamiltonian, harmonic_potential, Axis, GaussianPacket};
    use super::*;
    use crate::hilbert::{Spectrum, StateVector};

    fn packet_1d(n: usize, dx: f64, periodic: bool) -> GridWavefunction {
        let g = ConfigGrid::line(n, dx, -(n as f64) * dx / 2.0, periodic, 1.0).unwrap();
        let p = GaussianPacket {
            center: [-1.0, 0.0],
            width: [1.0, 0.0],
            momentum: [1.5, 0.0],
            amplitude: C64::new(1.0, 0.0),
        };
        GridWavefunction::gaussian_packets(g, &[p], 0.0).unwrap()
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_bad_steps() {
        let psi = packet_1d(64, 0.1, true);
        let v = vec![0.0; 64];
        assert!(evolve_wavefunction(&psi, &v, 0.0, 1).is_err());
        assert!(evolve_wavefunction(&psi, &v, -0.1, 1).is_err());
        assert!(evolve_wavefunction(&psi, &v, f64::NAN, 1).is_err());
        assert!(evolve_wavefunction(&psi, &v, 1.0, 1).is_err());
    }

    #[test]
    fn zero_steps_is_identity() {
        let psi = packet_1d(64, 0.1, true);
        let out = evolve_wavefunction(&psi, &vec![0.0; 64], 0.01, 0).unwrap();
        assert_eq!(out, psi);
    }

    fn dense_reference(psi: &GridWavefunction, v: &[f64], t: f64) -> Vec<C64> {
        let h = grid_hamiltonian(psi.grid(), v).unwrap();
        let s = Spectrum::of(&h).unwrap();
        let out = s.propagate(psi.to_state_vector().amplitudes(), t);
        let sv = StateVector::from_vec_unchecked(out);
        GridWavefunction::from_state_vector(psi.grid().clone(), &sv, t)
            .unwrap()
            .values()
            .to_vec()
    }

    #[test]
    fn free_packet_matches_dense_propagator() {
        for periodic in [true, false] {
            let psi = packet_1d(128, 0.15, periodic);
            let v = vec![0.0; 128];
            let out = evolve_wavefunction(&psi, &v, 0.01, 100).unwrap();
            let reference = dense_reference(&psi, &v, 1.0);
            assert!(max_diff(out.values(), &reference) < 1e-7);
        }
    }

    #[test]
    fn two_dimensional_split_matches_dense_propagator() {
        let ax = |n, periodic| Axis {
            points: n,
            spacing: 0.4,
            origin: -(n as f64) * 0.2,
            periodic,
            mass: 1.0,
        };
        let g = ConfigGrid::new(vec![ax(16, true), ax(12, false)]).unwrap();
        let v = harmonic_potential(&g, [0.5, 0.8], [0.0, 0.0]);
        let p = GaussianPacket {
            center: [0.5, -0.3],
            width: [0.9, 0.7],
            momentum: [0.6, -0.4],
            amplitude: C64::new(1.0, 0.0),
        };
        let psi = GridWavefunction::gaussian_packets(g, &[p], 0.0).unwrap();
        let coarse = evolve_wavefunction(&psi, &v, 0.02, 50).unwrap();
        let fine = evolve_wavefunction(&psi, &v, 0.005, 200).unwrap();
        let reference = dense_reference(&psi, &v, 1.0);
        let e1 = max_diff(coarse.values(), &reference);
        let e2 = max_diff(fine.values(), &reference);
        assert!(e2 < 1e-4, "{e2}");
        // Second-order convergence: quartering dt cuts the error ~16x.
        assert!(e1 / e2 > 10.0, "{e1} {e2}");
        assert!((fine.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_ground_state_is_stationary() {
        let g = ConfigGrid::line(96, 0.125, -6.0, false, 1.0).unwrap();
        let v = harmonic_potential(&g, [1.0, 0.0], [0.0, 0.0]);
        let h = grid_hamiltonian(&g, &v).unwrap();
        let s = Spectrum::of(&h).unwrap();
        let ground = s.ground_state();
        let psi = GridWavefunction::from_state_vector(g, &ground, 0.0).unwrap();
        let out = evolve_wavefunction(&psi, &v, 0.01, 1000).unwrap();
        let drift = psi
            .values()
            .iter()
            .zip(out.values())
            .map(|(a, b)| (a.norm() - b.norm()).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-6, "{drift}");
    }
}
