//! Property tests for the structural invariants of each module.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sddpde::delay::{
    self, eval_f, eval_fd, split_f, AtomFunctional, DelayAtom, DelayDensity, DelayMeasure, DensityKind, PointMap,
    Squash, StateMean,
};
use sddpde::history::{sup_distance, HistoryBuffer, Knot, Segment};
use sddpde::invariance::{corollary_condition_b, default_h_ladder, subtangential_check, ConstraintSet};
use sddpde::models::{self, random_history, ModelConfig};
use sddpde::rhs::{DelayRhs, OuterKind, OuterMap};
use sddpde::spectral::{Boundary, SpatialGrid, SpectralOperator};
use sddpde::state::{Representation, StateVector};
use sddpde::stepper::{self, solve, Scheme, StepperConfig};

fn interval_op(boundary: Boundary, d: f64, n_modes: usize) -> SpectralOperator {
    SpectralOperator::laplacian(SpatialGrid::interval(1.0, n_modes, boundary), &[d]).unwrap()
}

fn point_op() -> SpectralOperator {
    SpectralOperator::laplacian(SpatialGrid::point(), &[0.0]).unwrap()
}

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Dirichlet), Just(Boundary::Neumann)]
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_spectral(op: &SpectralOperator, seed: u64) -> StateVector {
    delay::random_state(op, 1.0, &mut rng(seed))
}

fn mean_atom(base: f64, scale: f64, weight: f64) -> DelayAtom {
    DelayAtom {
        eta: AtomFunctional::StateMean(StateMean {
            window: None,
            species: 0,
            base,
            scale,
            squash: Squash::Tanh,
        }),
        weight: AtomFunctional::Constant(weight),
        full_segment: false,
    }
}

/// Dyadic numbers `k / 2^4`, for which the sums below are exact.
fn dyadic() -> impl Strategy<Value = f64> {
    (-32i32..=32).prop_map(|k| k as f64 / 16.0)
}

/// Scalar segment on `[-1, 0]` with dyadic values at dyadic knots.
fn dyadic_segment(values: &[f64]) -> Segment<'static> {
    let op = point_op();
    let n = values.len();
    let knots = values
        .iter()
        .enumerate()
        .map(|(i, v)| Knot::new(&op, -1.0 + i as f64 / (n - 1) as f64, StateVector::scalar(&[*v])).unwrap())
        .collect();
    Segment::new(1.0, knots).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semigroup_composes(b in boundary(), d in 0.0..2.0f64, s in 0.0..2.0f64, t in 0.0..2.0f64, seed in any::<u64>()) {
        let op = interval_op(b, d, 16);
        let v = random_spectral(&op, seed);
        let once = op.semigroup_apply(s + t, &v).unwrap();
        let twice = op.semigroup_apply(s, &op.semigroup_apply(t, &v).unwrap()).unwrap();
        for (x, y) in once.values().iter().zip(twice.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300));
        }
    }

    #[test]
    fn semigroup_contracts_without_growth(b in boundary(), d in 0.0..2.0f64, t in 0.0..5.0f64, seed in any::<u64>()) {
        let op = interval_op(b, d, 16);
        prop_assert_eq!(op.omega(), 0.0);
        let v = random_spectral(&op, seed);
        prop_assert!(op.norm(&op.semigroup_apply(t, &v).unwrap()) <= op.norm(&v) * (1.0 + 1e-15));
    }

    #[test]
    fn phi1_is_h_times_identity_for_small_h(b in boundary(), d in 0.0..0.003f64, seed in any::<u64>()) {
        // phi1(h) v - h v is about h^2 lambda v / 2, so lambda_max h must sit well below 1e-5
        let op = interval_op(b, d, 16);
        let v = random_spectral(&op, seed);
        let h = 1e-6;
        let w = op.phi1_apply(h, &v).unwrap();
        for (x, y) in w.values().iter().zip(v.values()) {
            prop_assert!((x - h * y).abs() <= 1e-5 * (h * y).abs());
        }
    }

    #[test]
    fn segment_reproduces_samples_at_knots(n in 2usize..40, w in 0.1..5.0f64, c in -2.0..2.0f64) {
        let op = point_op();
        let f = |th: f64| (w * th + c).sin();
        let seg = Segment::from_fn(&op, 0.0, 1.0, n, |th| StateVector::scalar(&[f(th)])).unwrap();
        for k in seg.knots() {
            let th = k.time - seg.anchor();
            prop_assert_eq!(seg.eval(th).unwrap().values()[0], f(th));
        }
    }

    #[test]
    fn buffer_segments_nest(n in 3usize..30, b_frac in 0.0..1.0f64, th_frac in 0.0..1.0f64) {
        let op = point_op();
        let mut buffer = HistoryBuffer::new(1.0).unwrap();
        for i in 0..=2 * n {
            let t = -1.0 + i as f64 / n as f64;
            buffer.push(Knot::new(&op, t, StateVector::scalar(&[(3.0 * t).cos()])).unwrap()).unwrap();
        }
        let b = b_frac;
        let theta = -th_frac;
        let seg = buffer.segment_at(b).unwrap();
        let via_segment = seg.eval(theta).unwrap().values()[0];
        let direct = buffer.value_at(b + theta).unwrap().values()[0];
        prop_assert!((via_segment - direct).abs() <= 1e-13);
    }

    #[test]
    fn recent_mutations_do_not_change_fd(seed in any::<u64>(), base in 0.45..0.55f64, scale in -0.2..0.2f64, k in 3usize..=4) {
        // eta in [base - |scale|, base + |scale|] stays inside [eta_ign, 1]; the cut sits on a knot
        let eta_ign = k as f64 / 16.0;
        let op = interval_op(Boundary::Neumann, 0.1, 8);
        let m = DelayMeasure::atoms_only(vec![mean_atom(base, scale, 0.75), DelayAtom::constant(1.0, 0.25)], 1.0, eta_ign);
        let mut r = rng(seed);
        let psi = random_history(&op, &mut r, 0.3, 1.0, 17, 1.5, false).unwrap();
        let before = eval_fd(&m, &PointMap::Nicholson { p1: 2.0 }, 0.3, &psi).unwrap();
        let mutated = delay::mutate_recent(&op, &psi, eta_ign, &mut r).unwrap();
        let after = eval_fd(&m, &PointMap::Nicholson { p1: 2.0 }, 0.3, &mutated).unwrap();
        prop_assert_eq!(before.values(), after.values());
    }

    #[test]
    fn fd_is_additive_over_disjoint_atoms_bit_exact(
        values in prop::collection::vec(dyadic(), 9),
        weights in prop::collection::vec(dyadic(), 3),
        eta_k in prop::collection::vec(0usize..=4, 3),
    ) {
        // atoms sit on knots, so every product and partial sum is a short dyadic
        let psi = dyadic_segment(&values);
        let atom = |i: usize| DelayAtom::constant(0.5 + eta_k[i] as f64 / 8.0, weights[i]);
        let a = DelayMeasure::atoms_only(vec![atom(0), atom(1)], 10.0, 0.5);
        let b = DelayMeasure::atoms_only(vec![atom(2)], 10.0, 0.5);
        let ab = DelayMeasure::atoms_only(vec![atom(0), atom(1), atom(2)], 10.0, 0.5);
        let p = PointMap::Identity;
        let lhs = eval_f(&ab, &p, 0.0, &psi).unwrap();
        let rhs = eval_f(&a, &p, 0.0, &psi).unwrap().add(&eval_f(&b, &p, 0.0, &psi).unwrap());
        prop_assert_eq!(lhs.values(), rhs.values());
    }

    #[test]
    fn fd_is_additive_up_to_rounding(seed in any::<u64>(), w in prop::collection::vec(-1.0..1.0f64, 4), e in prop::collection::vec(0.3..1.0f64, 4)) {
        let op = interval_op(Boundary::Dirichlet, 0.2, 8);
        let psi = random_history(&op, &mut rng(seed), 0.0, 1.0, 13, 1.0, false).unwrap();
        let atoms: Vec<DelayAtom> = (0..4).map(|i| DelayAtom::constant(e[i], w[i])).collect();
        let a = DelayMeasure::atoms_only(atoms[..2].to_vec(), 10.0, 0.3);
        let b = DelayMeasure::atoms_only(atoms[2..].to_vec(), 10.0, 0.3);
        let ab = DelayMeasure::atoms_only(atoms, 10.0, 0.3);
        let p = PointMap::Identity;
        let lhs = eval_f(&ab, &p, 0.0, &psi).unwrap();
        let rhs = eval_f(&a, &p, 0.0, &psi).unwrap().add(&eval_f(&b, &p, 0.0, &psi).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-14);
    }

    #[test]
    fn fd_scales_with_weights_for_linear_p(seed in any::<u64>(), k in -6i32..6, w in prop::collection::vec(-1.0..1.0f64, 3)) {
        // powers of two scale every product and sum exactly
        let c = 2f64.powi(k);
        let op = interval_op(Boundary::Neumann, 0.2, 8);
        let psi = random_history(&op, &mut rng(seed), 0.0, 1.0, 13, 1.0, false).unwrap();
        let make = |s: f64| DelayMeasure::atoms_only(
            vec![mean_atom(0.6, 0.1, s * w[0]), DelayAtom::constant(0.4, s * w[1]), DelayAtom::constant(1.0, s * w[2])],
            10.0,
            0.3,
        );
        let p = PointMap::Identity;
        let base = eval_fd(&make(1.0), &p, 0.0, &psi).unwrap();
        let scaled = eval_fd(&make(c), &p, 0.0, &psi).unwrap();
        let expect = base.scaled(c);
        prop_assert_eq!(scaled.values(), expect.values());
    }

    #[test]
    fn density_quadrature_is_converged(seed in any::<u64>(), level in 0.2..1.5f64, gain in -0.5..0.5f64) {
        let op = interval_op(Boundary::Neumann, 0.1, 8);
        let psi = random_history(&op, &mut rng(seed), 0.0, 1.0, 9, 1.0, true).unwrap();
        let density = DelayDensity {
            kind: DensityKind::StateModulated { level, gain, window: None, species: 0 },
            variation_hint: level * (1.0 + gain.abs()),
            full_segment: false,
        };
        let mut m = DelayMeasure::density_only(density, 3.0, 0.25, 1.0);
        let p = PointMap::Nicholson { p1: 2.0 };
        m.quad_nodes = 16;
        let coarse = eval_f(&m, &p, 0.0, &psi).unwrap();
        m.quad_nodes = 32;
        let fine = eval_f(&m, &p, 0.0, &psi).unwrap();
        let scale = fine.max_abs().max(1e-300);
        prop_assert!(coarse.max_abs_diff(&fine) <= 1e-10 * scale);
    }

    #[test]
    fn b_is_outer_map_of_split_parts(seed in any::<u64>(), d in 0.0..2.0f64, p1 in 0.5..4.0f64) {
        let model = models::preset_nicholson(&models::NicholsonParams {
            p1,
            d,
            delay: models::NicholsonDelay::StateMean { base: 0.6, scale: 0.2, eta_ign: 0.3, window: None },
            grid: models::GridSpec::interval(1.0, 8, Boundary::Neumann),
            ..Default::default()
        }).unwrap();
        let mut m = model.rhs.clone();
        m.channels[0].measure.density = Some(DelayDensity::constant(0.5));
        let psi = random_history(&model.op, &mut rng(seed), 1.0, 1.0, 9, 1.0, true).unwrap();
        let (fc, fd) = m.split_f(1.0, &psi).unwrap();
        let direct = m.outer.apply(1.0, &psi.head().nodal, &fc.add(&fd)).unwrap();
        let b = m.eval_b_nodal(1.0, &psi).unwrap();
        prop_assert_eq!(b.values(), direct.values());
        let ch = &m.channels[0];
        let (c2, d2) = split_f(&ch.measure, &ch.p, 1.0, &psi).unwrap();
        prop_assert_eq!(fc.values(), c2.values());
        prop_assert_eq!(fd.values(), d2.values());
    }

    #[test]
    fn density_only_b_is_lipschitz(seed in any::<u64>(), gain in -0.5..0.5f64, eps in 1e-4..1e-1f64) {
        let op = interval_op(Boundary::Neumann, 0.1, 8);
        let density = DelayDensity {
            kind: DensityKind::StateModulated { level: 0.5, gain, window: None, species: 0 },
            variation_hint: 0.5 * (1.0 + gain.abs()),
            full_segment: false,
        };
        // the density's variation moves by at most 0.5 |gain| per unit sup-change of the window mean
        let measure = DelayMeasure::density_only(density, 0.5 * (1.0 + gain.abs()), 0.25, 0.5 * gain.abs());
        let rhs = DelayRhs::new(measure, PointMap::Nicholson { p1: 2.0 }, OuterMap::affine(1.0));
        let mut r = rng(seed);
        let psi1 = random_history(&op, &mut r, 0.0, 1.0, 9, 1.0, true).unwrap();
        let bump = random_history(&op, &mut r, 0.0, 1.0, 9, eps, true).unwrap();
        let knots = psi1.knots().zip(bump.knots())
            .map(|(a, b)| Knot::new(&op, a.time, a.spectral.add(&b.spectral)).unwrap())
            .collect();
        let psi2 = Segment::new(1.0, knots).unwrap();
        let radius = psi1.sup_norm(&op).max(psi2.sup_norm(&op));
        let l = rhs.lipschitz_b(&op, radius).unwrap();
        let gap = op.norm(&rhs.eval_b_nodal(0.0, &psi1).unwrap().sub(&rhs.eval_b_nodal(0.0, &psi2).unwrap()));
        prop_assert!(gap <= l * sup_distance(&psi1, &psi2, &op).unwrap() + 1e-9);
    }

    #[test]
    fn frozen_and_picard_agree_to_second_order(u0 in 0.1..2.0f64, a in -1.5..1.5f64) {
        // B depends on psi(0) only: B = a u^2
        let op = point_op();
        let rhs = DelayRhs::new(
            DelayMeasure::density_only(DelayDensity::constant(0.0), 1.0, 1.0, 0.0),
            PointMap::Identity,
            OuterKind::Quadratic { a }.into(),
        );
        let phi = Segment::constant(&op, 0.0, 1.0, StateVector::scalar(&[u0])).unwrap();
        let buffer = HistoryBuffer::from_segment(&phi);
        let cfg = StepperConfig::new(Scheme::Picard, 0.1, 1.0);
        let gap = |h: f64| {
            let f = stepper::step_frozen(&op, &rhs, 0.0, h, &buffer).unwrap();
            let p = stepper::step_picard(&op, &rhs, 0.0, h, &buffer, &cfg).unwrap();
            (f.values()[0] - p.end.values()[0]).abs()
        };
        let (g1, g2) = (gap(0.02), gap(0.01));
        let c = (a * a * u0.powi(3)).abs().max(1e-12);
        prop_assert!(g1 <= 2.0 * c * 0.02 * 0.02);
        prop_assert!(g2 <= 0.3 * g1 + 1e-15);
    }

    #[test]
    fn method_of_steps_window_sees_only_phi(seed in any::<u64>(), threshold in -0.5..0.5f64, excess in any::<bool>()) {
        let params = models::SddParams {
            weight: if excess { models::SddWeight::Excess(threshold) } else { models::SddWeight::Unit },
            ..Default::default()
        };
        let model = models::preset_sdd_benchmark(&params).unwrap();
        let phi = random_history(&model.op, &mut rng(seed), 0.0, 1.0, 33, 1.0, false).unwrap();
        let res = solve(&model.op, &model.rhs, &phi, 0.0, &StepperConfig::new(Scheme::Picard, 0.01, 0.5)).unwrap();
        prop_assert!(res.completed(), "{:?}", res.status);
        prop_assert_eq!(res.extension_checks, 26);
    }

    #[test]
    fn solves_are_deterministic(seed in any::<u64>()) {
        let model = ModelConfig::Nicholson(Default::default()).build().unwrap();
        let phi = random_history(&model.op, &mut rng(seed), 0.0, 1.0, 9, 2.0, true).unwrap();
        let cfg = StepperConfig::new(Scheme::Picard, 0.05, 3.0);
        let a = solve(&model.op, &model.rhs, &phi, 0.0, &cfg).unwrap();
        let b = solve(&model.op, &model.rhs, &phi, 0.0, &cfg).unwrap();
        prop_assert_eq!(a.buffer.knots(), b.buffer.knots());
    }

    #[test]
    fn projection_realizes_the_distance(seed in any::<u64>(), lo in -1.0..0.0f64, width in 0.0..1.5f64) {
        let op = interval_op(Boundary::Neumann, 0.1, 8);
        let x = op.to_collocation(&delay::random_state(&op, 2.0, &mut rng(seed))).unwrap();
        for set in [ConstraintSet::nonneg_cone(), ConstraintSet::boxed(vec![lo], vec![lo + width])] {
            let p = set.project(0.0, &x).unwrap();
            prop_assert_eq!(set.distance(&op, 0.0, &p).unwrap(), 0.0);
            prop_assert_eq!(op.norm(&x.sub(&p)), set.distance(&op, 0.0, &x).unwrap());
        }
    }

    #[test]
    fn criteria_coincide_without_diffusion(seed in any::<u64>(), species in 0usize..2) {
        let model = ModelConfig::LotkaVolterra(Default::default()).build().unwrap();
        let set = ConstraintSet::nonneg_cone();
        let psi = models::boundary_history(&model.op, &mut rng(seed), 0.0, 1.0, 9, 2.0, species).unwrap();
        let h = default_h_ladder();
        // shift B into the violating direction so the ratios are not all zero
        let rhs = DelayRhs::new(
            DelayMeasure::atoms_only(vec![DelayAtom::constant(1.0, 1.0)], 1.0, 1.0),
            PointMap::Identity,
            OuterKind::Constant(vec![-0.5, 0.25]).into(),
        );
        let a = subtangential_check(&set, &model.op, &rhs, 0.0, &psi, &h).unwrap();
        let b = corollary_condition_b(&set, &model.op, &rhs, 0.0, &psi, &h).unwrap();
        for (x, y) in a.ratios.iter().zip(&b.ratios) {
            prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn interior_points_have_zero_ratio_for_small_h(seed in any::<u64>()) {
        let model = ModelConfig::Nicholson(Default::default()).build().unwrap();
        let set = ConstraintSet::nonneg_cone();
        let psi = random_history(&model.op, &mut rng(seed), 0.0, 1.0, 9, 2.0, true).unwrap();
        let rep = subtangential_check(&set, &model.op, &model.rhs, 0.0, &psi, &default_h_ladder()).unwrap();
        prop_assert_eq!(*rep.ratios.last().unwrap(), 0.0);
    }

    #[test]
    fn lotka_volterra_weights_are_normalized(seed in any::<u64>(), t in 0.0..10.0f64) {
        let model = ModelConfig::LotkaVolterra(Default::default()).build().unwrap();
        let psi = random_history(&model.op, &mut rng(seed), t, 1.0, 9, 2.0, true).unwrap();
        for ch in &model.rhs.channels {
            let s = delay::check_normalization(&ch.measure, t, &psi, 1e-12).unwrap();
            prop_assert!((s.total() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn representation_roundtrip_is_stable() {
    let op = interval_op(Boundary::Dirichlet, 0.1, 16);
    let v = random_spectral(&op, 9);
    let back = op.to_spectral(&op.to_collocation(&v).unwrap()).unwrap();
    assert_eq!(back.representation(), Representation::Spectral);
    assert!(back.max_abs_diff(&v) < 1e-13);
}
