//! Sums over lattice paths restricted to coarse-grained classes.
//!
//! A model is a time-sliced lattice: `n_steps` applications of the one-step
//! kernel K(x′, x) = ⟨x′|e^{−iHΔt}|x⟩, with the path's position after some
//! of those steps required to lie in a labeled region. The class amplitude
//! ⟨x″|C_α|x′⟩ is evaluated two ways: by enumerating every path in the
//! class, and as a kernel product with diagonal region projectors inserted
//! at the projection steps. The two must agree.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hilbert::{evolve_unitary, Operator, Projector, StateVector, C64, STRUCTURE_TOL};
use crate::histories::{
    check_decoherence, decoherence_from_branches, enumerate_indices, DecoherenceReport,
    HistoryIndex, DEFAULT_HISTORY_CAP,
};

/// Largest number of intermediate site sequences M^(n_steps−1) the
/// enumeration will visit.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

/// Agreement required between the two evaluation routes.
pub const IDENTITY_TOL: f64 = 1e-10;

/// exp(−iH·dt).
pub fn one_step_kernel(h: &Operator, dt: f64) -> Result<Operator> {
    evolve_unitary(h, dt)
}

/// Region partition applied to the path position after `step` kernel steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionStep {
    pub step: usize,
    pub regions: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct LatticePathModel {
    kernel: Operator,
    dt: f64,
    n_steps: usize,
    projections: Vec<ProjectionStep>,
    /// region label of each site, per projection step
    owners: Vec<Vec<usize>>,
}

impl LatticePathModel {
    pub fn new(
        kernel: Operator,
        dt: f64,
        n_steps: usize,
        projections: Vec<ProjectionStep>,
    ) -> Result<Self> {
        let sites = kernel.dim();
        let defect = kernel.unitarity_defect();
        if defect > STRUCTURE_TOL {
            return Err(Error::invalid(format!("kernel is not unitary (defect {defect:e})")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("a path needs at least one step"));
        }
        if let Some(w) = projections.windows(2).find(|w| w[1].step <= w[0].step) {
            return Err(Error::invalid(format!(
                "projection steps must be strictly increasing ({} then {})",
                w[0].step, w[1].step
            )));
        }
        let mut owners = Vec::with_capacity(projections.len());
        for p in &projections {
            if p.step == 0 || p.step >= n_steps {
                return Err(Error::invalid(format!(
                    "projection step {} must lie in 1..{}",
                    p.step, n_steps
                )));
            }
            owners.push(partition_owners(sites, &p.regions)?);
        }
        Ok(Self {
            kernel,
            dt,
            n_steps,
            projections,
            owners,
        })
    }

    pub fn from_hamiltonian(
        h: &Operator,
        dt: f64,
        n_steps: usize,
        projections: Vec<ProjectionStep>,
    ) -> Result<Self> {
        Self::new(one_step_kernel(h, dt)?, dt, n_steps, projections)
    }

    pub fn sites(&self) -> usize {
        self.kernel.dim()
    }

    pub fn kernel(&self) -> &Operator {
        &self.kernel
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn projections(&self) -> &[ProjectionStep] {
        &self.projections
    }

    /// Every class, lexicographic in the labels.
    pub fn classes(&self) -> Vec<PathClass> {
        let sizes: Vec<usize> = self.projections.iter().map(|p| p.regions.len()).collect();
        enumerate_indices(&sizes)
            .into_iter()
            .map(|h| PathClass { labels: h.0 })
            .collect()
    }

    pub fn class_count(&self) -> u128 {
        self.projections
            .iter()
            .fold(1u128, |acc, p| acc.saturating_mul(p.regions.len() as u128))
    }

    fn validate_class(&self, cls: &PathClass) -> Result<()> {
        if cls.labels.len() != self.projections.len() {
            return Err(Error::invalid(format!(
                "class has {} labels for {} projection steps",
                cls.labels.len(),
                self.projections.len()
            )));
        }
        for (k, (&l, p)) in cls.labels.iter().zip(&self.projections).enumerate() {
            if l >= p.regions.len() {
                return Err(Error::invalid(format!(
                    "label {l} at projection {k} is out of range (0..{})",
                    p.regions.len()
                )));
            }
        }
        Ok(())
    }

    /// Required region owner at each step 0..=n_steps, if any.
    fn constraints(&self, cls: &PathClass) -> Vec<Option<(usize, usize)>> {
        let mut out = vec![None; self.n_steps + 1];
        for (k, (p, &label)) in self.projections.iter().zip(&cls.labels).enumerate() {
            out[p.step] = Some((k, label));
        }
        out
    }
}

fn partition_owners(sites: usize, regions: &[Vec<usize>]) -> Result<Vec<usize>> {
    if regions.is_empty() {
        return Err(Error::invalid("a partition needs at least one region"));
    }
    let mut owner = vec![usize::MAX; sites];
    for (r, region) in regions.iter().enumerate() {
        if region.is_empty() {
            return Err(Error::invalid(format!("region {r} is empty")));
        }
        for &s in region {
            if s >= sites {
                return Err(Error::invalid(format!("site {s} outside 0..{sites}")));
            }
            if owner[s] != usize::MAX {
                return Err(Error::invalid(format!("site {s} lies in two regions")));
            }
            owner[s] = r;
        }
    }
    if let Some(s) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::invalid(format!("site {s} is in no region")));
    }
    Ok(owner)
}

/// Region labels (α_1, …, α_n), one per projection step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathClass {
    pub labels: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    BruteForce,
    Transfer,
}

/// ⟨x″|C_α|x′⟩ as an M×M matrix indexed (x″, x′).
#[derive(Clone, Debug)]
pub struct PathSumResult {
    pub amplitude_matrix: Operator,
    pub method: Method,
}

/// Neumaier-compensated complex accumulator.
#[derive(Clone, Copy, Default)]
struct CompensatedSum {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
}

impl CompensatedSum {
    fn add(&mut self, z: C64) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
    }

    fn value(&self) -> C64 {
        C64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Explicit enumeration of every site sequence in the class.
pub fn class_amplitude_bruteforce(model: &LatticePathModel, cls: &PathClass) -> Result<PathSumResult> {
    model.validate_class(cls)?;
    let m = model.sites();
    let paths = (m as u128).saturating_pow((model.n_steps - 1) as u32);
    if paths > BRUTE_FORCE_CAP {
        return Err(Error::CapExceeded {
            what: "path enumeration",
            count: paths,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let constraints = model.constraints(cls);
    let allowed: Vec<Vec<usize>> = (0..=model.n_steps)
        .map(|step| match constraints[step] {
            Some((k, label)) => (0..m).filter(|&s| model.owners[k][s] == label).collect(),
            None => (0..m).collect(),
        })
        .collect();
    let kernel = &model.kernel;
    let mut entries = vec![C64::new(0.0, 0.0); m * m];
    let mut column = vec![CompensatedSum::default(); m];
    let mut sites = vec![0usize; model.n_steps];
    for start in 0..m {
        column.iter_mut().for_each(|c| *c = CompensatedSum::default());
        sites[0] = start;
        enumerate_paths(kernel, &allowed, 1, C64::new(1.0, 0.0), &mut sites, &mut column);
        for (end, acc) in column.iter().enumerate() {
            entries[end * m + start] = acc.value();
        }
    }
    Ok(PathSumResult {
        amplitude_matrix: Operator::from_fn(m, |i, j| entries[i * m + j]),
        method: Method::BruteForce,
    })
}

/// Depth-first over x_level … x_{n−1}; at the end, spread the prefix over
/// every endpoint x″ = x_n.
fn enumerate_paths(
    kernel: &Operator,
    allowed: &[Vec<usize>],
    level: usize,
    prefix: C64,
    sites: &mut [usize],
    column: &mut [CompensatedSum],
) {
    let n_steps = sites.len();
    if level == n_steps {
        let last = sites[n_steps - 1];
        for &end in &allowed[n_steps] {
            column[end].add(prefix * kernel.entry(end, last));
        }
        return;
    }
    let prev = sites[level - 1];
    for &s in &allowed[level] {
        sites[level] = s;
        enumerate_paths(kernel, allowed, level + 1, prefix * kernel.entry(s, prev), sites, column);
    }
}

/// K⋯K·P_{Δ_n}·K⋯P_{Δ_1}·K⋯K.
pub fn class_amplitude_transfer(model: &LatticePathModel, cls: &PathClass) -> Result<PathSumResult> {
    model.validate_class(cls)?;
    let m = model.sites();
    let constraints = model.constraints(cls);
    let mut a = Operator::identity(m);
    for step in 1..=model.n_steps {
        a = &model.kernel * &a;
        if let Some((k, label)) = constraints[step] {
            let p = Projector::diagonal(model.owners[k].iter().map(|&o| o == label).collect());
            a = p.op() * &a;
        }
    }
    Ok(PathSumResult {
        amplitude_matrix: a,
        method: Method::Transfer,
    })
}

/// K^{n_steps}.
pub fn unrestricted_propagator(model: &LatticePathModel) -> Operator {
    let mut a = Operator::identity(model.sites());
    for _ in 0..model.n_steps {
        a = &model.kernel * &a;
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityCheck {
    pub max_abs_diff: f64,
    pub pass: bool,
}

/// Entrywise agreement of the enumerated and operator forms.
pub fn verify_identity(model: &LatticePathModel, cls: &PathClass) -> Result<IdentityCheck> {
    let brute = class_amplitude_bruteforce(model, cls)?;
    let transfer = class_amplitude_transfer(model, cls)?;
    let max_abs_diff = brute
        .amplitude_matrix
        .max_abs_diff(&transfer.amplitude_matrix);
    Ok(IdentityCheck {
        max_abs_diff,
        pass: max_abs_diff <= IDENTITY_TOL,
    })
}

/// max |Σ_α C_α − K^{n_steps}| over all classes of the model.
pub fn completeness_defect(model: &LatticePathModel) -> Result<f64> {
    let mut sum = Operator::zeros(model.sites());
    for cls in model.classes() {
        sum = &sum + &class_amplitude_transfer(model, &cls)?.amplitude_matrix;
    }
    Ok(sum.max_abs_diff(&unrestricted_propagator(model)))
}

/// Decoherence functional and probabilities of every class for the initial
/// state `psi0`, built from the transfer-method amplitudes.
pub fn pathsum_probabilities(
    model: &LatticePathModel,
    psi0: &StateVector,
    epsilon: f64,
) -> Result<DecoherenceReport> {
    if psi0.dim() != model.sites() {
        return Err(Error::DimensionMismatch {
            expected: model.sites(),
            found: psi0.dim(),
        });
    }
    if !psi0.is_normalized(STRUCTURE_TOL) {
        return Err(Error::invalid("initial state must be normalized"));
    }
    let count = model.class_count();
    if count > DEFAULT_HISTORY_CAP as u128 {
        return Err(Error::CapExceeded {
            what: "class count",
            count,
            cap: DEFAULT_HISTORY_CAP as u128,
        });
    }
    let classes = model.classes();
    let mut branches = Vec::with_capacity(classes.len());
    for cls in &classes {
        let a = class_amplitude_transfer(model, cls)?;
        branches.push(a.amplitude_matrix.apply_slice(psi0.amplitudes()));
    }
    let histories = classes.into_iter().map(|c| HistoryIndex(c.labels)).collect();
    let d = decoherence_from_branches(histories, &branches)?;
    Ok(check_decoherence(&d, epsilon))
}

/// Seeded random model: M ∈ 2..=max_sites, n_steps ∈ 1..=max_steps, random
/// hermitian H, random projection steps with random partitions.
pub fn random_model(seed: u64, max_sites: usize, max_steps: usize) -> Result<LatticePathModel> {
    if max_sites < 2 || max_steps < 1 {
        return Err(Error::invalid("random models need max_sites >= 2 and max_steps >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(2..=max_sites);
    let n_steps = rng.gen_range(1..=max_steps);
    let mut entries = vec![C64::new(0.0, 0.0); m * m];
    for i in 0..m {
        entries[i * m + i] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
        for j in i + 1..m {
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            entries[i * m + j] = z;
            entries[j * m + i] = z.conj();
        }
    }
    let h = Operator::from_fn(m, |i, j| entries[i * m + j]);
    let dt = rng.gen_range(0.1..1.0);
    let mut projections = Vec::new();
    for step in 1..n_steps {
        if rng.gen_bool(0.7) {
            let n_regions = rng.gen_range(1..=m);
            // Seed each region with one site, then scatter the rest.
            let mut order: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let mut regions: Vec<Vec<usize>> = order[..n_regions].iter().map(|&s| vec![s]).collect();
            for &s in &order[n_regions..] {
                let r = rng.gen_range(0..n_regions);
                regions[r].push(s);
            }
            projections.push(ProjectionStep { step, regions });
        }
    }
    LatticePathModel::from_hamiltonian(&h, dt, n_steps, projections)
}
