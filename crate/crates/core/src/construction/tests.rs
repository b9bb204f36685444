use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::linalg::fix_sign;
use crate::mesh::build_benchmark_mesh;
use crate::rom::{compute_riesz_data, project_operators, BasisRole, ReducedBasis, ReducedModel};
use crate::solvers::{build_affine_model, AffineModel, Direction, Trajectory};
use crate::stochastics::{kl_eigenpairs, seeded_rng, DensityModel, ParameterSample};

fn tiny() -> AffineModel {
    let mesh = build_benchmark_mesh(1.0).unwrap();
    let kl = kl_eigenpairs(&mesh, 2.0, 5).unwrap();
    build_affine_model(&mesh, &kl, 0.2, 20).unwrap()
}

fn pdf_samples(n: usize, seed: u64) -> Vec<ParameterSample> {
    let mut rng = seeded_rng(seed, 0);
    (0..n).map(|_| DensityModel::default().sample(&mut rng, 5)).collect()
}

fn training(n: usize, seed: u64) -> Vec<ParameterSample> {
    let mut rng = seeded_rng(seed, 1);
    (0..n)
        .map(|_| DensityModel::default().sample_uniform_on_gamma(&mut rng, 5))
        .collect()
}

fn unit(m: &AffineModel, i: usize) -> DVector<f64> {
    let n = m.dim();
    m.xref_factor
        .unwhiten(&DVector::from_fn(n, |j, _| (i == j) as u8 as f64))
}

fn full_basis(m: &AffineModel, role: BasisRole) -> ReducedBasis {
    let cols: Vec<DVector<f64>> = (0..m.dim()).map(|i| unit(m, i)).collect();
    ReducedBasis::from_orthonormal(&m.xref, DMatrix::from_columns(&cols), role).unwrap()
}

fn xnorm(m: &AffineModel, v: &DVector<f64>) -> f64 {
    m.xref.quad_form(v).sqrt()
}

fn normalized(m: &AffineModel, v: &DVector<f64>) -> DVector<f64> {
    let mut u = v / xnorm(m, v);
    fix_sign(&mut u);
    u
}

fn assert_close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) {
    let err = (a - b).amax();
    assert!(err <= tol * b.amax(), "difference {err:e}");
}

fn config(mode: GreedyMode, weighting: Weighting, train: Vec<ParameterSample>, n: usize) -> GreedyConfig {
    GreedyConfig {
        max_basis: Some(n),
        ..GreedyConfig::new(mode, weighting, train)
    }
}

fn single_trajectory_set(m: &AffineModel, states: DMatrix<f64>) -> SnapshotSet {
    let u = Trajectory {
        states,
        direction: Direction::Forward,
    };
    SnapshotSet {
        samples: vec![ParameterSample::reference(5)],
        outputs: vec![m.detailed_output(&u)],
        primal: vec![u],
        dual: Vec::new(),
    }
}

#[test]
fn pod1_single_nonzero_snapshot() {
    let m = tiny();
    let v = m.solve_primal(&pdf_samples(1, 3)[0]).unwrap().state(7);
    let mut traj = DMatrix::zeros(m.dim(), 21);
    traj.set_column(7, &v);
    assert_close(&pod1(&m, &traj).unwrap(), &normalized(&m, &v), 1e-12);
}

#[test]
fn pod1_rank_one_trajectory() {
    let m = tiny();
    let w = m.solve_primal(&pdf_samples(1, 4)[0]).unwrap().final_state();
    let traj = DMatrix::from_fn(m.dim(), 21, |i, k| (k as f64 - 6.5) * w[i]);
    let mode = pod1(&m, &traj).unwrap();
    assert_close(&mode, &normalized(&m, &w), 1e-12);
    assert!((xnorm(&m, &mode) - 1.0).abs() < 1e-13);
}

#[test]
fn pod1_dominant_direction() {
    let m = tiny();
    let (e1, e2) = (unit(&m, 3), unit(&m, 17));
    let traj = DMatrix::from_columns(&[&e2 * 1.0, &e1 * 3.0, DVector::zeros(m.dim())]);
    assert_close(&pod1(&m, &traj).unwrap(), &normalized(&m, &e1), 1e-12);
}

#[test]
fn pod1_rejects_zero_and_wrong_size() {
    let m = tiny();
    assert!(matches!(
        pod1(&m, &DMatrix::zeros(m.dim(), 4)),
        Err(Error::ZeroTrajectory)
    ));
    assert!(matches!(
        pod1(&m, &DMatrix::zeros(m.dim() + 1, 4)),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn reference_pod_rank_one() {
    let m = tiny();
    let w = m.solve_primal(&pdf_samples(1, 5)[0]).unwrap().final_state();
    let states = DMatrix::from_fn(m.dim(), 21, |i, k| (k as f64).sqrt() * w[i]);
    let pod = pod_reference(&m, &single_trajectory_set(&m, states), 5).unwrap();
    assert!(pod.eigenvalues[1] <= 1e-12 * pod.eigenvalues[0]);
    assert_close(&pod.modes.column(0).into_owned(), &normalized(&m, &w), 1e-10);
}

#[test]
fn duplicated_sample_keeps_eigenvalues() {
    let m = tiny();
    let xi = pdf_samples(1, 6);
    let once = SnapshotSet::compute(&m, xi.clone(), false).unwrap();
    let twice = SnapshotSet::compute(&m, vec![xi[0].clone(), xi[0].clone()], false).unwrap();
    let a = pod_reference(&m, &once, 10).unwrap();
    let b = pod_reference(&m, &twice, 10).unwrap();
    for l in 0..10 {
        let (x, y) = (a.eigenvalues[l], b.eigenvalues[l]);
        assert!((x - y).abs() <= 1e-12 * a.eigenvalues[0], "{l}: {x:e} {y:e}");
    }
}

#[test]
fn reference_pod_structure_and_trace() {
    let m = tiny();
    let snaps = SnapshotSet::compute(&m, pdf_samples(6, 7), false).unwrap();
    let pod = pod_reference(&m, &snaps, 12).unwrap();
    assert_eq!(pod.num_modes(), 12);
    assert_eq!((pod.num_samples, pod.steps), (6, 20));
    let gram = pod.modes.tr_mul(&m.xref.mul_mat(&pod.modes));
    assert!((gram - DMatrix::identity(12, 12)).amax() < 1e-8);
    assert!(pod.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    assert!(pod.eigenvalues.iter().all(|&s| s >= -1e-10));

    let direct: f64 = snaps
        .primal
        .iter()
        .flat_map(|u| (1..=20).map(move |k| u.state(k)))
        .map(|v| m.xref.quad_form(&v))
        .sum::<f64>()
        * m.dt
        / 6.0;
    let total: f64 = pod.eigenvalues.iter().sum();
    assert!((total - direct).abs() <= 1e-12 * direct);
    let zero = mean_square_projection_error(&m, &DMatrix::zeros(m.dim(), 0), &snaps).unwrap();
    assert!((zero - total).abs() <= 1e-12 * total);
    assert!((pod.tail(0) - total).abs() <= 1e-12 * total);
}

#[test]
fn tail_identity_and_full_rank() {
    let m = tiny();
    let snaps = SnapshotSet::compute(&m, pdf_samples(8, 8), false).unwrap();
    let pod = pod_reference(&m, &snaps, m.dim()).unwrap();
    for n in 1..=12 {
        let direct = pod_projection_error(&m, &pod, &snaps, n).unwrap();
        let tail = pod.tail(n);
        assert!((direct - tail).abs() <= 1e-8 * tail, "N = {n}: {direct:e} vs {tail:e}");
    }
    let full = pod_projection_error(&m, &pod, &snaps, m.dim()).unwrap();
    assert!(full <= 1e-10 * pod.eigenvalues[0]);
    assert!(pod_projection_error(&m, &pod, &snaps, m.dim() + 1).is_err());
}

#[test]
fn pod_is_optimal_among_tested_bases() {
    let m = tiny();
    let snaps = SnapshotSet::compute(&m, pdf_samples(10, 9), false).unwrap();
    let pod = pod_reference(&m, &snaps, 8).unwrap();
    let greedy = pod_greedy(&m, &config(GreedyMode::Primal, Weighting::Uniform, training(30, 2), 8)).unwrap();
    let mut rng = seeded_rng(99, 0);
    for n in 1..=8 {
        let best = pod_projection_error(&m, &pod, &snaps, n).unwrap();
        let g =
            mean_square_projection_error(&m, &greedy.primal.truncated(n).unwrap().vectors().clone(), &snaps).unwrap();
        assert!(best <= g + 1e-10 * g, "N = {n}");
        let mut random = ReducedBasis::empty(m.dim(), BasisRole::Primal);
        while random.len() < n {
            let xi = DensityModel::default().sample(&mut rng, 5);
            let k = 1 + random.len() % 20;
            random.push(&m.xref, &m.solve_primal(&xi).unwrap().state(k)).unwrap();
        }
        let r = mean_square_projection_error(&m, random.vectors(), &snaps).unwrap();
        assert!(best <= r + 1e-10 * r, "N = {n}");
    }
}

#[test]
fn pod_guard_and_csv() {
    let m = tiny();
    let snaps = SnapshotSet::compute(&m, pdf_samples(2, 10), false).unwrap();
    let pod = pod_reference(&m, &snaps, 3).unwrap();
    let mut out = Vec::new();
    pod.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next(), Some("index,sigma"));
    assert_eq!(text.lines().count(), pod.eigenvalues.len() + 1);
    assert!(text.lines().nth(1).unwrap().starts_with("1,"));

    let big = SnapshotSet {
        samples: vec![snaps.samples[0].clone(); MAX_POD_SNAPSHOTS / 20 + 1],
        primal: vec![snaps.primal[0].clone(); MAX_POD_SNAPSHOTS / 20 + 1],
        dual: Vec::new(),
        outputs: vec![0.5; MAX_POD_SNAPSHOTS / 20 + 1],
    };
    assert!(matches!(pod_reference(&m, &big, 3), Err(Error::InvalidInput(_))));
}

#[test]
fn snapshot_set_checks() {
    let m = tiny();
    let snaps = SnapshotSet::compute(&m, pdf_samples(3, 11), true).unwrap();
    assert!(snaps.has_dual());
    assert_eq!(snaps.dual[0].direction, Direction::Backward);
    snaps.check(&m).unwrap();
    let mesh = build_benchmark_mesh(1.0).unwrap();
    let kl = kl_eigenpairs(&mesh, 2.0, 5).unwrap();
    let longer = build_affine_model(&mesh, &kl, 0.2, 21).unwrap();
    assert!(matches!(snaps.check(&longer), Err(Error::CacheMismatch(_))));
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some((1, 3.0)));
    assert_eq!(argmax(&[]), None);
}

#[test]
fn config_validation() {
    let t = training(3, 0);
    let mut c = config(GreedyMode::Primal, Weighting::Uniform, t.clone(), 3);
    c.validate().unwrap();
    c.max_basis = None;
    assert!(c.validate().is_err());
    c.tolerance = Some(1e-3);
    c.validate().unwrap();
    c.tolerance = Some(-1.0);
    assert!(c.validate().is_err());
    let empty = config(GreedyMode::Primal, Weighting::Uniform, Vec::new(), 3);
    assert!(empty.validate().is_err());
    let m = tiny();
    let wrong = config(
        GreedyMode::Primal,
        Weighting::Uniform,
        vec![ParameterSample::new(vec![0.0; 3], 1.0)],
        3,
    );
    assert!(matches!(pod_greedy(&m, &wrong), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn greedy_starts_at_largest_cooling() {
    let m = tiny();
    let t = training(15, 12);
    let out = pod_greedy(&m, &config(GreedyMode::Primal, Weighting::Uniform, t.clone(), 1)).unwrap();
    let best = t.iter().map(|x| x.xi_in).fold(f64::MIN, f64::max);
    let xi = t.iter().find(|x| x.xi_in == best).unwrap();
    let expected = normalized(&m, &m.solve_primal(xi).unwrap().final_state());
    assert_close(&out.primal.vector(0), &expected, 1e-12);
    assert_eq!(out.trace.steps.len(), 1);
}

/// The first iteration replaces the empty space by the snapshot at the only
/// training parameter; the estimator there falls by more than an order of
/// magnitude relative to the zero approximation, and keeps falling.
#[test]
fn single_training_parameter_converges_fast() {
    let m = tiny();
    let t = training(1, 13);
    let out = pod_greedy(&m, &config(GreedyMode::Primal, Weighting::Uniform, t.clone(), 4)).unwrap();
    let eps: Vec<f64> = out.trace.steps.iter().map(|s| s.estimator_max).collect();
    // Residual of the zero trajectory is the load at every step.
    let b = m.load(&t[0]).unwrap();
    let empty = (m.dt * m.steps as f64 / m.alpha_bar * b.dot(&m.xref_factor.solve(&b))).sqrt();
    assert!(eps[0] * 10.0 <= empty, "{empty:e} -> {eps:?}");
    assert!(eps.windows(2).all(|w| w[1] < w[0]), "{eps:?}");
}

#[test]
fn constant_density_keeps_selections() {
    let m = tiny();
    let t = training(25, 14);
    for mode in [GreedyMode::Primal, GreedyMode::Output] {
        let plain = pod_greedy(&m, &config(mode, Weighting::Uniform, t.clone(), 5)).unwrap();
        let mut weighted = config(mode, Weighting::Pdf, t.clone(), 5);
        weighted.density = Density::Constant(3.7);
        let weighted = pod_greedy(&m, &weighted).unwrap();
        let picks = |o: &GreedyOutcome| o.trace.steps.iter().map(|s| s.selected_index).collect::<Vec<_>>();
        assert_eq!(picks(&plain), picks(&weighted));
        for (a, b) in plain.trace.steps.iter().zip(&weighted.trace.steps) {
            assert!((3.7 * a.estimator_max - b.estimator_max).abs() <= 1e-12 * b.estimator_max);
        }
    }
}

#[test]
fn trace_matches_post_hoc_sweeps() {
    let m = tiny();
    let t = training(20, 15);
    for (mode, weighting) in [
        (GreedyMode::Primal, Weighting::Pdf),
        (GreedyMode::Output, Weighting::Uniform),
    ] {
        let c = config(mode, weighting, t.clone(), 5);
        let out = pod_greedy(&m, &c).unwrap();
        assert_eq!(out.trace.steps.len(), 5);
        for s in &out.trace.steps {
            let frozen = out.rom.truncated(s.primal_dim, s.dual_dim).unwrap();
            let values = estimator_sweep(&frozen, &c).unwrap();
            let (i, v) = argmax(&values).unwrap();
            assert_eq!(i, s.selected_index);
            assert!((v - s.estimator_max).abs() <= 1e-9 * v, "{v:e} {:e}", s.estimator_max);
            assert_eq!(s.selected, t[i]);
        }
    }
}

#[test]
fn output_mode_grows_both_spaces() {
    let m = tiny();
    let out = pod_greedy(&m, &config(GreedyMode::Output, Weighting::Pdf, training(20, 16), 6)).unwrap();
    for (i, s) in out.trace.steps.iter().enumerate() {
        assert_eq!((s.primal_dim, s.dual_dim), (i + 1, i + 1));
    }
    let dual = out.dual.unwrap();
    assert_eq!((out.primal.len(), dual.len()), (6, 6));
    assert_close(&dual.vector(0), &normalized(&m, &m.dual_final_state()), 1e-12);
}

#[test]
fn tolerance_stops_early() {
    let m = tiny();
    let t = training(10, 17);
    let full = pod_greedy(&m, &config(GreedyMode::Primal, Weighting::Uniform, t.clone(), 6)).unwrap();
    let mut c = config(GreedyMode::Primal, Weighting::Uniform, t, 6);
    let tol = full.trace.steps[2].estimator_max;
    c.tolerance = Some(tol);
    // The maximum over the training set need not decrease monotonically.
    let stop = full.trace.steps.iter().position(|s| s.estimator_max <= tol).unwrap() + 1;
    let out = pod_greedy(&m, &c).unwrap();
    assert_eq!(out.trace.steps.len(), stop);
    assert_eq!(out.primal.len(), stop);
    let key = |s: &GreedyStep| (s.primal_dim, s.estimator_max, s.selected_index);
    assert!(out
        .trace
        .steps
        .iter()
        .zip(&full.trace.steps)
        .all(|(a, b)| key(a) == key(b)));
}

#[test]
fn trace_csv_format() {
    let m = tiny();
    let out = pod_greedy(&m, &config(GreedyMode::Primal, Weighting::Uniform, training(5, 18), 2)).unwrap();
    let mut a = Vec::new();
    out.trace.write_csv(&mut a, false).unwrap();
    let text = String::from_utf8(a).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "iter,N,Ntilde,estimator_max,xi_in_selected,seconds");
    assert!(rows[1].starts_with("1,1,0,"));
    assert!(rows[2].starts_with("2,2,0,"));
    assert!(rows[1].ends_with(",0"));
}

#[test]
fn full_basis_statistics_vanish() {
    let m = tiny();
    let snaps = SnapshotSet::compute(&m, pdf_samples(4, 19), false).unwrap();
    let primal = full_basis(&m, BasisRole::Primal);
    let dual = full_basis(&m, BasisRole::Dual);
    let rom = ReducedModel {
        ops: project_operators(&m, &primal, Some(&dual)).unwrap(),
        riesz: compute_riesz_data(&m, &primal, Some(&dual)).unwrap(),
    };
    let producer = SolutionProducer::Galerkin {
        basis: &primal,
        ops: &rom.ops,
    };
    assert!(mc_rms_solution_error(&m, producer, &snaps, m.dim()).unwrap() <= 1e-9);
    let full = m.dim();
    assert!(mc_abs_output_error(&rom, &snaps, full, full).unwrap() <= 1e-9);
    assert!(mc_rms_solution_error(&m, producer, &snaps, full + 1).is_err());
}

#[test]
fn projection_producer_matches_pod_error() {
    let m = tiny();
    let snaps = SnapshotSet::compute(&m, pdf_samples(1, 20), false).unwrap();
    let pod = pod_reference(&m, &snaps, 6).unwrap();
    let column = mc_rms_column(&m, SolutionProducer::Projection { modes: &pod.modes }, &snaps, 6).unwrap();
    for (i, v) in column.iter().enumerate() {
        let direct = pod_projection_error(&m, &pod, &snaps, i + 1).unwrap().sqrt();
        assert!((v - direct).abs() <= 1e-10 * direct);
    }
}

#[test]
fn pod_projection_below_greedy_galerkin() {
    let m = tiny();
    let snaps = SnapshotSet::compute(&m, pdf_samples(15, 21), false).unwrap();
    let pod = pod_reference(&m, &snaps, 8).unwrap();
    let greedy = pod_greedy(&m, &config(GreedyMode::Primal, Weighting::Pdf, training(30, 3), 8)).unwrap();
    let producer = SolutionProducer::Galerkin {
        basis: &greedy.primal,
        ops: &greedy.rom.ops,
    };
    let galerkin = mc_rms_column(&m, producer, &snaps, 8).unwrap();
    let projection = mc_rms_column(&m, SolutionProducer::Projection { modes: &pod.modes }, &snaps, 8).unwrap();
    for n in 0..8 {
        assert!(projection[n] <= galerkin[n] * (1.0 + 1e-10), "N = {}", n + 1);
    }
}

#[test]
fn correction_helps_on_average() {
    let m = tiny();
    let out = pod_greedy(&m, &config(GreedyMode::Output, Weighting::Pdf, training(40, 22), 10)).unwrap();
    let snaps = SnapshotSet::compute(&m, pdf_samples(50, 23), false).unwrap();
    let corrected = mc_abs_output_error(&out.rom, &snaps, 10, 10).unwrap();
    let plain = mc_abs_output_error_uncorrected(&out.rom, &snaps, 10).unwrap();
    assert!(corrected >= 0.0 && plain >= 0.0);
    assert!(corrected <= plain, "{corrected:e} > {plain:e}");
    assert!(matches!(
        mc_abs_output_error(&out.rom.truncated(10, 0).unwrap(), &snaps, 10, 0),
        Err(Error::MissingDual)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pod1_mode_is_unit_and_sign_fixed(seed in 0u64..1000, cols in 1usize..6) {
        let m = tiny();
        let mut rng = seeded_rng(seed, 2);
        let traj = DMatrix::from_fn(m.dim(), cols, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let mode = pod1(&m, &traj).unwrap();
        prop_assert!((xnorm(&m, &mode) - 1.0).abs() < 1e-12);
        let i = mode.iamax();
        prop_assert!(mode[i] > 0.0);
    }
}
