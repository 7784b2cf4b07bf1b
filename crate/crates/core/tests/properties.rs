use flexlink::beam::{output_map, PlantDefinition};
use flexlink::canonical::{characteristic_coefficients, to_canonical};
use flexlink::controller::{
    control_law, phi_eps, phi_eps_derivative, settling_bound_controller, ControllerGains, Switching,
};
use flexlink::linalg::{controllability_matrix, eigenvalues, singular_values};
use flexlink::metrics::integral_indices;
use flexlink::scenario::{Overrides, Scenario, ScenarioFile};
use flexlink::sim::ObserverInit;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn plant_block_spectra() {
    let def = PlantDefinition::reference();
    let plant = def.build(2).unwrap();
    let omegas = def.modal_model().unwrap().frequencies(2).unwrap();
    let zeta = def.beam.damping_ratio;
    let rigid = plant.a.view((0, 0), (2, 2)).into_owned();
    for ev in eigenvalues(&rigid) {
        assert_eq!(ev.norm(), 0.0);
    }
    for (j, w) in omegas.iter().enumerate() {
        let r = 2 + 2 * j;
        let block = plant.a.view((r, r), (2, 2)).into_owned();
        for ev in eigenvalues(&block) {
            assert!((ev.re + zeta * w).abs() < 1e-10 * w, "mode {j}: {ev}");
            assert!((ev.norm() - w).abs() < 1e-10 * w, "mode {j}: {ev}");
        }
    }
}

#[test]
fn override_entries_are_bit_identical() {
    let def = PlantDefinition::reference();
    let plant = def.build(1).unwrap();
    let o = def.modal_overrides[0];
    assert_eq!(plant.a[(3, 2)], -(o.omega * o.omega));
    assert_eq!(plant.a[(3, 3)], -2.0 * def.beam.damping_ratio * o.omega);
    assert_eq!(plant.b[3], o.phi_prime_0);
    assert_eq!(plant.c[(0, 2)], o.phi_l / def.beam.length);
    assert_eq!(plant.c[(1, 2)], o.phi_prime_0);
}

#[test]
fn design_plant_is_controllable() {
    let plant = PlantDefinition::reference().build(1).unwrap();
    let sv = singular_values(&controllability_matrix(&plant.a, &plant.b));
    let largest = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|s| **s > 1e-8 * largest).count();
    assert_eq!(rank, 4, "singular values {sv:?}");
}

fn rk4(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>, u: f64, h: f64) -> DVector<f64> {
    let f = |x: &DVector<f64>| a * x + b * u;
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * h)));
    let k3 = f(&(x + &k2 * (0.5 * h)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[test]
fn canonical_and_physical_outputs_agree_under_random_inputs() {
    use rand::{Rng, SeedableRng};
    let plant = PlantDefinition::reference().build(1).unwrap();
    let sys = to_canonical(&plant).unwrap();
    let f_a = characteristic_coefficients(&plant.a);
    let f_c = characteristic_coefficients(&sys.a_c);
    for (x, y) in f_a.iter().zip(&f_c) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let h = 1e-3;
    for _ in 0..20 {
        let mut psi = DVector::from_fn(4, |_, _| rng.random_range(-0.1..0.1));
        let mut z = sys.transform_state(&psi);
        let mut worst = 0.0f64;
        let mut u = 0.0;
        for k in 0..5000 {
            if k % 100 == 0 {
                u = rng.random_range(-1.0..1.0);
            }
            psi = rk4(&plant.a, &plant.b, &psi, u, h);
            z = rk4(&sys.a_c, &sys.b_c, &z, u, h);
            let y = &plant.c * &psi;
            let yc = &sys.c_c * &z;
            worst = worst.max((y - yc).amax());
        }
        assert!(worst < 1e-6, "{worst:e}");
    }
}

#[test]
fn control_is_finite_on_a_grid_through_zero_surfaces() {
    let g = ControllerGains::default();
    let f = [0.0, 0.0, 421.4809, 0.41];
    let levels = [-1.0, -1e-3, 0.0, 1e-3, 1.0];
    let mut count = 0;
    for a in levels {
        for b in levels {
            for c in levels {
                for d in levels {
                    for sw in [Switching::Pure, Switching::Regularized] {
                        let out = control_law(&[a, b, c, d], &[0.0; 4], &g, &f, sw).unwrap();
                        assert!(out.u.is_finite());
                        count += 1;
                    }
                }
            }
        }
    }
    assert_eq!(count, 2 * 625);
    // A state with s_1 = 0 exactly: e1 = -(alpha e0 + kappa1 phi(e0) + kappa2 sig(e0, 2)).
    let e0: f64 = 0.5;
    let e1 = -(g.alpha[0] * e0 + g.kappa1[0] * phi_eps(e0, g.gamma1, g.eps) + g.kappa2[0] * e0 * e0.abs());
    let out = control_law(&[e0, e1, 0.0, 0.0], &[0.0; 4], &g, &f, Switching::Pure).unwrap();
    assert!(out.surfaces.s[1].abs() < 1e-15);
    assert!(out.u.is_finite());
}

/// Sampled `||e_y||^2 / 2` with a position-only estimation offset and the
/// design model as truth.
#[test]
fn observer_output_energy_does_not_grow() {
    let mut file = ScenarioFile::reference();
    file.sim.truth_modes = 1;
    file.sim.observer_init = ObserverInit::PhysicalOffset {
        offset: vec![0.01, 0.0, -0.002, 0.0],
    };
    let sc = Scenario::from_file(file, String::new(), &Overrides::default()).unwrap();
    let tr = sc.run().unwrap();
    let v: Vec<f64> = tr.e_y.iter().map(|e| 0.5 * (e[0] * e[0] + e[1] * e[1])).collect();
    assert!(v[0] > 1e-3);
    let violations = v.windows(2).filter(|w| w[1] > w[0] + 1e-6).count();
    assert_eq!(violations, 0);
}

proptest! {
    #[test]
    fn output_map_is_linear(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        x in prop::collection::vec(-1.0f64..1.0, 6),
        y in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let plant = PlantDefinition::reference().build(2).unwrap();
        let x = DVector::from_vec(x);
        let y = DVector::from_vec(y);
        let lhs = output_map(&plant, &(&x * a + &y * b)).unwrap();
        let (x1, x2) = output_map(&plant, &x).unwrap();
        let (y1, y2) = output_map(&plant, &y).unwrap();
        prop_assert!((lhs.0 - (a * x1 + b * y1)).abs() < 1e-12 * (1.0 + lhs.0.abs()) * 100.0);
        prop_assert!((lhs.1 - (a * x2 + b * y2)).abs() < 1e-12 * (1.0 + lhs.1.abs()) * 100.0);
    }

    #[test]
    fn phi_eps_is_odd_increasing_and_sub_unity(
        x in prop_oneof![-1e3f64..-1e-9, 1e-9f64..1e3],
        dx in 1e-9f64..1.0,
        gamma1 in 0.05f64..0.95,
        eps in 1e-3f64..2.0,
    ) {
        let p = phi_eps(x, gamma1, eps);
        prop_assert_eq!(phi_eps(-x, gamma1, eps), -p);
        prop_assert!(phi_eps(x + dx, gamma1, eps) > p);
        prop_assert!(phi_eps_derivative(x, gamma1, eps, 1) > 0.0);
        let xp = x * p;
        prop_assert!(xp > 0.0);
        let cap = (eps.powf(gamma1 - 1.0) * x * x).min(x.abs().powf(gamma1 + 1.0));
        prop_assert!(xp <= cap * (1.0 + 1e-12));
    }

    #[test]
    fn larger_c1_never_lengthens_t3(c1 in 0.1f64..50.0, extra in 0.0f64..50.0) {
        let mut g = ControllerGains { c1, ..ControllerGains::default() };
        let before = settling_bound_controller(&g).stages[3];
        g.c1 = c1 + extra;
        let after = settling_bound_controller(&g).stages[3];
        prop_assert!(after <= before);
    }

    #[test]
    fn smaller_error_has_smaller_indices(
        pairs in prop::collection::vec((-2.0f64..2.0, 0.0f64..1.0), 2..200),
    ) {
        let e2: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let e1: Vec<f64> = pairs.iter().map(|p| p.0 * p.1).collect();
        let t: Vec<f64> = (0..e1.len()).map(|k| k as f64 * 0.01).collect();
        let a = integral_indices(&e1, &t);
        let b = integral_indices(&e2, &t);
        prop_assert!(a.ise <= b.ise && a.iae <= b.iae && a.itse <= b.itse && a.itae <= b.itae);
    }

    #[test]
    fn later_pulse_weighs_more(shift in 1usize..400, width in 1usize..50) {
        let n = 1000;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.01).collect();
        let pulse = |start: usize| -> Vec<f64> {
            (0..n).map(|k| if k >= start && k < start + width { 1.0 } else { 0.0 }).collect()
        };
        let early = integral_indices(&pulse(10), &t);
        let late = integral_indices(&pulse(10 + shift), &t);
        prop_assert!(late.itse > early.itse && late.itae > early.itae);
        prop_assert!((late.ise - early.ise).abs() < 1e-12);
    }
}

#[test]
fn indices_converge_under_grid_refinement() {
    let fixture = |t: f64| (-0.5 * t).exp() * (3.0 * t).cos();
    let eval = |dt: f64| {
        let n = (10.0 / dt).round() as usize;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let e: Vec<f64> = t.iter().map(|t| fixture(*t)).collect();
        integral_indices(&e, &t)
    };
    let a = eval(1e-3);
    let b = eval(5e-4);
    for (x, y) in [(a.ise, b.ise), (a.iae, b.iae), (a.itse, b.itse), (a.itae, b.itae)] {
        assert!(((x - y) / y).abs() < 1e-3, "{x} vs {y}");
    }
}
