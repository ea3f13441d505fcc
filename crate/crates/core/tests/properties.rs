use histories_lab_core::bohm::{
    evolve_wavefunction, ConfigGrid, GaussianPacket, GridPropagator, GridWavefunction,
};
use histories_lab_core::histories::{
    additivity_check, check_decoherence, class_operator, coarse_grain, decoherence_matrix,
    HistoryGrid,
};
use histories_lab_core::measurement::{
    build_measurement_unitary, closed_system_probability, compare_copenhagen, record_probabilities,
    CompositeModel, MeasurementEvent, PointerSpec, RecordSet,
};
use histories_lab_core::pathsum::{
    completeness_defect, pathsum_probabilities, random_model, unrestricted_propagator,
    verify_identity, LatticePathModel, ProjectionStep,
};
use histories_lab_core::{
    build_ring_hamiltonian, evolve_unitary, heisenberg_projector, position_decomposition, tensor,
    Decomposition, ModelSpec, Operator, Projector, QubitCouplings, Spectrum, StateVector, C64,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_hermitian(rng: &mut ChaCha8Rng, dim: usize) -> Operator {
    let mut m = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        m[i * dim + i] = C64::new(rng.gen_range(-2.0..2.0), 0.0);
        for j in i + 1..dim {
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            m[i * dim + j] = z;
            m[j * dim + i] = z.conj();
        }
    }
    Operator::from_fn(dim, |i, j| m[i * dim + j])
}

fn random_operator(rng: &mut ChaCha8Rng, dim: usize) -> Operator {
    Operator::from_fn(dim, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> StateVector {
    let amps = (0..dim)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    StateVector::normalized(amps).unwrap()
}

/// Random split of 0..dim into `parts` non-empty groups.
fn random_groups(rng: &mut ChaCha8Rng, dim: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..dim).collect();
    for i in (1..dim).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut groups: Vec<Vec<usize>> = order[..parts].iter().map(|&i| vec![i]).collect();
    for &i in &order[parts..] {
        groups[rng.gen_range(0..parts)].push(i);
    }
    groups
}

/// Projectors onto groups of eigenvectors of a random hermitian matrix.
fn random_decomposition(rng: &mut ChaCha8Rng, dim: usize) -> Decomposition {
    let parts = rng.gen_range(1..=dim.min(4));
    let groups = random_groups(rng, dim, parts);
    if rng.gen_bool(0.3) {
        return position_decomposition(dim, &groups).unwrap();
    }
    let spectrum = Spectrum::of(&random_hermitian(rng, dim)).unwrap();
    let projectors = groups
        .iter()
        .map(|g| {
            let vecs: Vec<StateVector> = g.iter().map(|&k| spectrum.eigenvector(k)).collect();
            let op = Operator::from_fn(dim, |i, j| {
                vecs.iter()
                    .map(|v| v.amplitudes()[i] * v.amplitudes()[j].conj())
                    .sum()
            });
            Projector::new(op).unwrap()
        })
        .collect();
    let labels = (0..groups.len()).map(|k| k.to_string()).collect();
    Decomposition::new(projectors, labels).unwrap()
}

fn random_grid(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> HistoryGrid {
    let mut t = 0.0;
    let times = (0..n)
        .map(|_| {
            t += rng.gen_range(0.1..1.5);
            t
        })
        .collect();
    let decomps = (0..n).map(|_| random_decomposition(rng, dim)).collect();
    HistoryGrid::new(times, decomps, random_hermitian(rng, dim)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn built_hamiltonians_are_hermitian(
        sites in 2usize..12,
        hopping in -3.0f64..3.0,
        seed in any::<u64>(),
        qubits in 1usize..5,
        fx in -2.0f64..2.0,
        fz in -2.0f64..2.0,
        j in -2.0f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let potential: Vec<f64> = (0..sites).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ring = build_ring_hamiltonian(sites, hopping, &potential).unwrap();
        prop_assert!(ring.hermiticity_defect() <= 1e-12);
        let chain = ModelSpec::QubitRegister {
            qubits,
            couplings: QubitCouplings { field_x: fx, field_z: fz, coupling_zz: j },
        }
        .hamiltonian()
        .unwrap();
        prop_assert!(chain.hermiticity_defect() <= 1e-12);
    }

    #[test]
    fn propagators_are_unitary(seed in any::<u64>(), dim in 1usize..9, t in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = evolve_unitary(&random_hermitian(&mut rng, dim), t).unwrap();
        prop_assert!(u.unitarity_defect() <= 1e-10);
        prop_assert!((u.det_abs() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn heisenberg_projectors_keep_their_rank(seed in any::<u64>(), dim in 2usize..8, t in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_decomposition(&mut rng, dim);
        let h = random_hermitian(&mut rng, dim);
        for p in d.projectors() {
            let q = heisenberg_projector(p, &h, t).unwrap();
            prop_assert!((q.trace() - p.trace()).abs() <= 1e-9);
        }
    }

    #[test]
    fn tensor_products_compose(seed in any::<u64>(), a in 1usize..4, b in 1usize..4, c in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, z) = (random_operator(&mut rng, a), random_operator(&mut rng, b), random_operator(&mut rng, c));
        let left = tensor(&tensor(&x, &y), &z);
        let right = tensor(&x, &tensor(&y, &z));
        prop_assert!(left.max_abs_diff(&right) <= 1e-12);
        let (x2, y2) = (random_operator(&mut rng, a), random_operator(&mut rng, b));
        let lhs = &tensor(&x, &y) * &tensor(&x2, &y2);
        let rhs = tensor(&(&x * &x2), &(&y * &y2));
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
    }

    #[test]
    fn class_operators_sum_to_identity(seed in any::<u64>(), dim in 2usize..7, n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, dim, n);
        let mut sum = Operator::zeros(dim);
        for h in grid.histories() {
            sum = &sum + &class_operator(&grid, &h).unwrap().op;
        }
        prop_assert!(sum.max_abs_diff(&Operator::identity(dim)) <= 1e-9);
    }

    #[test]
    fn decoherence_functional_is_a_gram_matrix(seed in any::<u64>(), dim in 2usize..9, n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, dim, n);
        let psi = random_state(&mut rng, dim);
        let report = check_decoherence(&decoherence_matrix(&grid, &psi, 4096).unwrap(), 1e-3);
        prop_assert!((report.probability_sum() - 1.0).abs() <= 1e-9);
        prop_assert!(report.hermiticity_defect() <= 1e-9);
        prop_assert!(report.min_eigenvalue() >= -1e-9);
        if n == 1 {
            let k = report.matrix.nrows();
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        prop_assert!(report.matrix[(a, b)].norm() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn decoherent_sets_are_additive(seed in any::<u64>(), dim in 2usize..7, n in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Diagonal dynamics and diagonal alternatives commute, so the set decoheres.
        let energies: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut t = 0.0;
        let times = (0..n).map(|_| { t += rng.gen_range(0.2..1.0); t }).collect();
        let decomps: Vec<Decomposition> = (0..n)
            .map(|_| {
                let parts = rng.gen_range(1..=dim.min(3));
                position_decomposition(dim, &random_groups(&mut rng, dim, parts)).unwrap()
            })
            .collect();
        let merge: Vec<Vec<Vec<usize>>> = decomps
            .iter()
            .map(|d| {
                let parts = rng.gen_range(1..=d.len());
                random_groups(&mut rng, d.len(), parts)
            })
            .collect();
        let grid = HistoryGrid::new(times, decomps, Operator::diagonal(&energies)).unwrap();
        let psi = random_state(&mut rng, dim);
        let fine = check_decoherence(&decoherence_matrix(&grid, &psi, 4096).unwrap(), 1e-3);
        prop_assert!(fine.decoherent);
        let coarse_grid = coarse_grain(&grid, &merge).unwrap();
        let coarse = check_decoherence(&decoherence_matrix(&coarse_grid, &psi, 4096).unwrap(), 1e-3);
        for e in additivity_check(&fine, &coarse, &merge).unwrap() {
            prop_assert!(e.within_bound());
        }
    }

    #[test]
    fn reversed_times_are_rejected(seed in any::<u64>(), t1 in 0.0f64..2.0, gap in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_decomposition(&mut rng, 3);
        let res = HistoryGrid::new(vec![t1 + gap, t1], vec![d.clone(), d], random_hermitian(&mut rng, 3));
        prop_assert!(res.is_err());
    }

    #[test]
    fn measurement_unitaries_are_unitary(delta in 0.0f64..0.9, outcomes in 2usize..4, extra in 0usize..2) {
        let groups: Vec<Vec<usize>> = (0..outcomes).map(|i| vec![i]).collect();
        let d = position_decomposition(outcomes, &groups).unwrap();
        let dims = [outcomes + extra, 2];
        let u = build_measurement_unitary(&d, &PointerSpec { register: 0, overlap_delta: delta }, &dims).unwrap();
        prop_assert!(u.unitarity_defect() <= 1e-10);
    }

    #[test]
    fn ideal_measurements_agree_three_ways(seed in any::<u64>(), t1 in 0.1f64..1.0, gap in 0.1f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, 2);
        let z = position_decomposition(2, &[vec![0], vec![1]]).unwrap();
        let x = random_decomposition(&mut rng, 2);
        let events = vec![
            MeasurementEvent { time: t1, decomposition: z, pointer: PointerSpec { register: 0, overlap_delta: 0.0 } },
            MeasurementEvent { time: t1 + gap, decomposition: x, pointer: PointerSpec { register: 1, overlap_delta: 0.0 } },
        ];
        let model = CompositeModel::new(random_state(&mut rng, 2), h, vec![2, 2], events).unwrap();
        let closed = closed_system_probability(&model, 1e-3).unwrap();
        prop_assert!((closed.probability_sum() - 1.0).abs() <= 1e-9);
        prop_assert!(closed.hermiticity_defect() <= 1e-9);
        let c = compare_copenhagen(&model, 1e-3).unwrap();
        let records = RecordSet::history_records(&model).unwrap();
        let r = record_probabilities(&model, &records, t1 + gap + 0.3).unwrap();
        for k in 0..r.len() {
            prop_assert!((closed.probabilities[k] - c.p_copenhagen[k]).abs() <= 1e-9);
            prop_assert!((r[k] - c.p_copenhagen[k]).abs() <= 1e-9);
        }
    }

    #[test]
    fn path_sums_match_operators(seed in any::<u64>()) {
        let model = random_model(seed, 4, 4).unwrap();
        for cls in model.classes() {
            prop_assert!(verify_identity(&model, &cls).unwrap().pass);
        }
        prop_assert!(completeness_defect(&model).unwrap() <= 1e-10);
        prop_assert!(unrestricted_propagator(&model).unitarity_defect() <= 1e-9);
    }

    #[test]
    fn path_sums_reproduce_history_probabilities(seed in any::<u64>(), sites in 2usize..5, dt in 0.1f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, sites);
        let n_steps = 3;
        let projections: Vec<ProjectionStep> = (1..n_steps)
            .map(|step| {
                let parts = rng.gen_range(1..=sites);
                ProjectionStep { step, regions: random_groups(&mut rng, sites, parts) }
            })
            .collect();
        let psi = random_state(&mut rng, sites);
        let model = LatticePathModel::from_hamiltonian(&h, dt, n_steps, projections.clone()).unwrap();
        let ps = pathsum_probabilities(&model, &psi, 1e-3).unwrap();
        let grid = HistoryGrid::new(
            projections.iter().map(|p| p.step as f64 * dt).collect(),
            projections.iter().map(|p| position_decomposition(sites, &p.regions).unwrap()).collect(),
            h,
        )
        .unwrap();
        let dh = check_decoherence(&decoherence_matrix(&grid, &psi, 4096).unwrap(), 1e-3);
        for (a, b) in ps.probabilities.iter().zip(&dh.probabilities) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn grid_evolution_preserves_the_norm(
        center in -3.0f64..3.0,
        width in 0.5f64..2.0,
        k in -2.0f64..2.0,
        periodic in any::<bool>(),
    ) {
        let grid = ConfigGrid::line(128, 0.1, -6.4, periodic, 1.0).unwrap();
        let packet = GaussianPacket {
            center: [center, 0.0],
            width: [width, 0.0],
            momentum: [k, 0.0],
            amplitude: C64::new(1.0, 0.0),
        };
        let mut psi = GridWavefunction::gaussian_packets(grid.clone(), &[packet], 0.0).unwrap();
        let potential = vec![0.0; 128];
        let prop = GridPropagator::new(&grid, &potential, 0.01).unwrap();
        for _ in 0..20 {
            let before = psi.norm_sqr();
            prop.step(&mut psi).unwrap();
            prop_assert!((psi.norm_sqr() - before).abs() <= 1e-10);
        }
        let again = evolve_wavefunction(
            &GridWavefunction::gaussian_packets(grid, &[packet], 0.0).unwrap(),
            &potential,
            0.01,
            20,
        )
        .unwrap();
        prop_assert_eq!(again.values(), psi.values());
    }
}
