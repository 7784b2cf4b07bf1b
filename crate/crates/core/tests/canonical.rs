use flexlink::beam::PlantDefinition;
use flexlink::canonical::{characteristic_coefficients, to_canonical, CanonicalSystem};
use flexlink::linalg::{eigenvalue_mismatch, eigenvalues};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-2.0..2.0));
    let b = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
    (a, b, c)
}

/// `C (sI - A)^{-1} B` at a real `s`.
fn transfer(a: &DMatrix<f64>, b: &DVector<f64>, c: &DMatrix<f64>, s: f64) -> DVector<f64> {
    let n = a.nrows();
    let m = DMatrix::identity(n, n) * s - a;
    c * m.lu().solve(b).expect("s is not an eigenvalue")
}

fn companion_is_exact(sys: &CanonicalSystem) -> bool {
    let m = sys.order();
    for i in 0..m - 1 {
        for j in 0..m {
            let want = if j == i + 1 { 1.0 } else { 0.0 };
            if sys.a_c[(i, j)] != want {
                return false;
            }
        }
    }
    let last_ok = (0..m).all(|j| sys.a_c[(m - 1, j)] == -sys.f[j]);
    let b_ok = (0..m).all(|i| sys.b_c[i] == if i == m - 1 { 1.0 } else { 0.0 });
    last_ok && b_ok
}

#[test]
fn hundred_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut checked = 0;
    while checked < 100 {
        let (a, b, c) = random_system(&mut rng);
        let Ok(sys) = CanonicalSystem::from_matrices(&a, &b, &c) else {
            continue;
        };
        checked += 1;
        let mismatch = eigenvalue_mismatch(&eigenvalues(&a), &eigenvalues(&sys.a_c));
        assert!(mismatch <= 1e-8, "eigenvalue mismatch {mismatch:e}");
        assert!(companion_is_exact(&sys));
        // T A T^{-1} reproduces the companion matrix.
        let similar = &sys.t * &a * &sys.t_inv;
        assert!((similar - &sys.a_c).amax() < 1e-8 * a.amax().max(1.0) * sys.condition_number());
        let psi = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let back = sys.inverse_transform(&sys.transform_state(&psi));
        assert!((back - &psi).amax() < 1e-10, "round trip");
        for s in [7.3, -9.1, 13.7] {
            let g = transfer(&a, &b, &c, s);
            let gc = transfer(&sys.a_c, &sys.b_c, &sys.c_c, s);
            let scale = g.amax().max(1e-3);
            assert!((g - gc).amax() / scale < 1e-8, "transfer function at s = {s}");
        }
    }
}

#[test]
fn reference_plant_last_row() {
    let sys = to_canonical(&PlantDefinition::reference().build(1).unwrap()).unwrap();
    let want = [0.0, 0.0, -421.4809, -2.0 * 0.01 * 20.53];
    for (j, w) in want.iter().enumerate() {
        assert!((sys.a_c[(3, j)] - w).abs() < 1e-6, "entry {j}: {}", sys.a_c[(3, j)]);
    }
    assert!(companion_is_exact(&sys));
}

#[test]
fn two_mode_plant_is_controllable() {
    let plant = PlantDefinition::reference().build(2).unwrap();
    let sys = to_canonical(&plant).unwrap();
    assert_eq!(sys.order(), 6);
    let w1: f64 = 20.53;
    // Rigid double integrator: the two lowest coefficients vanish.
    assert!(sys.f[0].abs() < 1e-6 && sys.f[1].abs() < 1e-6);
    assert!(sys.f[2] > w1 * w1 * 1000.0);
}

fn diag_poly(roots: &[f64]) -> Vec<f64> {
    let mut p = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= r * c;
        }
        p = next;
    }
    p.pop();
    p
}

proptest! {
    #[test]
    fn characteristic_polynomial_of_diagonal(roots in prop::collection::vec(-3.0f64..3.0, 1..6)) {
        let a = DMatrix::from_diagonal(&DVector::from_vec(roots.clone()));
        let got = characteristic_coefficients(&a);
        let want = diag_poly(&roots);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-9 * w.abs().max(1.0));
        }
    }

    #[test]
    fn similarity_invariance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = random_system(&mut rng);
        prop_assume!(CanonicalSystem::from_matrices(&a, &b, &c).is_ok());
        let sys = CanonicalSystem::from_matrices(&a, &b, &c).unwrap();
        prop_assume!(sys.condition_number() < 1e6);
        // The canonical form does not depend on the coordinates of the input.
        let p = DMatrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { rng.random_range(-0.3..0.3) });
        let p_inv = p.clone().try_inverse().unwrap();
        let a2 = &p * &a * &p_inv;
        let b2 = &p * &b;
        let c2 = &c * &p_inv;
        let sys2 = CanonicalSystem::from_matrices(&a2, &b2, &c2).unwrap();
        for j in 0..4 {
            prop_assert!((sys.f[j] - sys2.f[j]).abs() < 1e-7 * sys.f[j].abs().max(1.0));
        }
        prop_assert!((&sys.c_c - &sys2.c_c).amax() < 1e-6 * sys.c_c.amax().max(1.0));
        prop_assert!(companion_is_exact(&sys2));
    }
}
