//! Matrix exponential against a 200-bit fixed-point Taylor series.

use chronograph::matfun::{self, c, CMatrix};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Float, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BITS: u32 = 200;
const TERMS: usize = 60;

#[derive(Clone)]
struct Fx {
    re: BigInt,
    im: BigInt,
}

fn fixed(x: f64) -> BigInt {
    if x == 0.0 {
        return BigInt::zero();
    }
    let (mantissa, exp, sign) = x.integer_decode();
    let shift = exp as i32 + BITS as i32;
    assert!(shift >= 0);
    BigInt::from(sign) * (BigInt::from(mantissa) << shift as u32)
}

fn to_f64(x: &BigInt) -> f64 {
    (x >> (BITS - 64)).to_f64().unwrap() * 2f64.powi(-64)
}

impl Fx {
    fn zero() -> Self {
        Fx { re: BigInt::zero(), im: BigInt::zero() }
    }

    fn from(z: Complex64) -> Self {
        Fx { re: fixed(z.re), im: fixed(z.im) }
    }

    fn mul(&self, o: &Fx) -> Fx {
        Fx {
            re: (&self.re * &o.re - &self.im * &o.im) >> BITS,
            im: (&self.re * &o.im + &self.im * &o.re) >> BITS,
        }
    }

    fn add(&mut self, o: &Fx) {
        self.re += &o.re;
        self.im += &o.im;
    }

    fn complex(&self) -> Complex64 {
        Complex64::new(to_f64(&self.re), to_f64(&self.im))
    }
}

type FxMat = Vec<Vec<Fx>>;

fn taylor_exp(a: &CMatrix, t: f64) -> CMatrix {
    let n = a.nrows();
    let x: FxMat = (0..n)
        .map(|i| (0..n).map(|j| Fx::from(a[(i, j)]).mul(&Fx::from(c(t)))).collect())
        .collect();
    let mut term: FxMat = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Fx::from(c(1.0)) } else { Fx::zero() }).collect())
        .collect();
    let mut sum = term.clone();
    for k in 1..=TERMS {
        let mut next = vec![vec![Fx::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = Fx::zero();
                for l in 0..n {
                    acc.add(&term[i][l].mul(&x[l][j]));
                }
                acc.re /= k;
                acc.im /= k;
                next[i][j] = acc;
            }
        }
        term = next;
        for i in 0..n {
            for j in 0..n {
                sum[i][j].add(&term[i][j]);
            }
        }
    }
    CMatrix::from_fn(n, n, |i, j| sum[i][j].complex())
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

#[test]
fn random_4x4_matches_high_precision_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..5 {
        let a = random_matrix(&mut rng, 4);
        let reference = taylor_exp(&a, 0.7);
        let got = matfun::expm(&a, 0.7).unwrap();
        let err = matfun::max_abs(&(&got - &reference)) / matfun::max_abs(&reference).max(1.0);
        assert!(err < 1e-12, "relative error {err:e}");
    }
}

#[test]
fn scaled_input_matches_high_precision_series() {
    // norm well above the Padé threshold so squaring is exercised
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_matrix(&mut rng, 3) * c(3.0);
    let reference = taylor_exp(&a, 0.7);
    let got = matfun::expm(&a, 0.7).unwrap();
    let err = matfun::max_abs(&(&got - &reference)) / matfun::max_abs(&reference);
    assert!(err < 1e-12, "relative error {err:e}");
}

#[test]
fn scalar_phi_values() {
    let one = CMatrix::from_element(1, 1, c(1.0));
    let e = std::f64::consts::E;
    let phi = matfun::phi_set(&one, 1.0).unwrap();
    assert!((phi.exp[(0, 0)].re - e).abs() < 1e-15);
    assert!((phi.phi1[(0, 0)].re - (e - 1.0)).abs() < 1e-15);
    assert!((phi.phi2[(0, 0)].re - (e - 2.0)).abs() < 1e-15);
}

#[test]
fn phi_of_zero_generator() {
    let z = CMatrix::zeros(2, 2);
    let phi = matfun::phi_set(&z, 0.3).unwrap();
    assert_eq!(phi.phi1, matfun::identity(2));
    assert!(matfun::max_abs(&(phi.phi2 - matfun::identity(2) * c(0.5))) < 1e-16);
}
