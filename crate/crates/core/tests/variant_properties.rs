use std::f64::consts::PI;

use chronograph::matfun::{self, c, CMatrix, CVector};
use chronograph::problem::TimeGraphProblem;
use chronograph::variants::{self, SchrodingerProblem};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar(h: f64, b: f64) -> SchrodingerProblem {
    SchrodingerProblem::new(
        TimeGraphProblem::builder()
            .scalar_edge("e", 1.0, h, 8)
            .scalar_block("e", "e", b)
            .g("e", CVector::from_element(1, c(1.0)))
            .build(),
    )
}

/// Random Hermitian `H = Q diag(λ) Q*` together with `B = 2cos(H)`.
fn commuting_pair(seed: u64, n: usize) -> (CMatrix, CMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = (&x + x.adjoint()) * c(0.5);
    let eig = matfun::hermitian_eig(&h).unwrap();
    let b = matfun::funm_hermitian(&eig, |l| c(2.0 * l.cos()));
    (h, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_unitarity_witnesses(theta in 0.05f64..(2.0 * PI - 0.05), b in -2.0f64..2.0) {
        let p = scalar(theta, b);
        if let Ok(r) = variants::unitarity_check(&p) {
            if r.defect <= 1e-10 {
                prop_assert!(r.propagator_defect <= 1e-9);
            }
            if r.defect >= 0.1 {
                prop_assert!(r.propagator_defect >= 0.05);
            }
        }
    }

    #[test]
    fn twice_cosine_coupling_is_unitary(seed in any::<u64>(), n in 1usize..=4) {
        let (h, b) = commuting_pair(seed, n);
        let p = SchrodingerProblem::new(
            TimeGraphProblem::builder().edge("e", 1.0, h, 8).block("e", "e", b).build(),
        );
        match variants::unitarity_check(&p) {
            Ok(r) => {
                prop_assert!(r.unitary, "defect {:e}", r.defect);
                prop_assert!(r.propagator_defect <= 1e-9);
            }
            Err(variants::VariantError::Solve(chronograph::Error::NotWellPosed { .. })) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn free_schrodinger_preserves_norm(seed in any::<u64>(), n in 1usize..=4) {
        let (h, _) = commuting_pair(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let g = CVector::from_fn(n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), 0.0));
        let p = SchrodingerProblem::new(TimeGraphProblem::builder().edge("e", 1.3, h, 16).g("e", g.clone()).build());
        let r = variants::schrodinger_solve(&p).unwrap();
        for s in &r.solutions[0].states {
            prop_assert!((s.norm() - g.norm()).abs() <= 1e-10);
        }
    }
}
