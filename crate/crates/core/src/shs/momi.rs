//! Mode-modulated input: a rational input U(s) = a(s)/b(s) whose denominator
//! has at least one root shared with no mode's poles, so the expected
//! responses stay distinguishable across scenarios.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shs::mode::ModeLibrary;

/// Tolerance below which two complex values count as a shared root.
pub const COPRIME_TOL: f64 = 1e-8;
/// Minimum distance between a denominator root and every mode eigenvalue for
/// the input to be accepted.
pub const POLE_DISTANCE_TOL: f64 = 1e-6;

/// Rational input a(s)/b(s); coefficients in descending powers of s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalInput {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    /// Input channel the realized signal drives.
    pub channel: usize,
}

/// Strip leading zero coefficients.
fn trim(coeffs: &[f64]) -> &[f64] {
    let first = coeffs.iter().position(|c| *c != 0.0).unwrap_or(coeffs.len());
    &coeffs[first..]
}

/// Roots of a polynomial (descending coefficients) via the companion matrix.
pub fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex<f64>>> {
    let c = trim(coeffs);
    if c.is_empty() {
        return Err(Error::Validation("zero polynomial has no roots".into()));
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Ok(vec![]);
    }
    let lead = c[0];
    let mut std_comp = DMatrix::zeros(deg, deg);
    for i in 0..deg - 1 {
        std_comp[(i, i + 1)] = 1.0;
    }
    for j in 0..deg {
        std_comp[(deg - 1, j)] = -c[deg - j] / lead;
    }
    Ok(std_comp.complex_eigenvalues().iter().copied().collect())
}

impl RationalInput {
    pub fn new(num: Vec<f64>, den: Vec<f64>, channel: usize) -> Result<Self> {
        let input = Self { num, den, channel };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        let den = trim(&self.den);
        if den.is_empty() {
            return Err(Error::Validation("denominator b(s) must be nonzero".into()));
        }
        let num = trim(&self.num);
        if num.len() > den.len() {
            return Err(Error::Validation(
                "input must be proper: deg a(s) <= deg b(s)".into(),
            ));
        }
        if !num.is_empty() {
            let nroots = poly_roots(num)?;
            let droots = poly_roots(den)?;
            for nr in &nroots {
                for dr in &droots {
                    if (nr - dr).norm() < COPRIME_TOL {
                        return Err(Error::Validation(format!(
                            "a(s) and b(s) share root {:.6}{:+.6}i",
                            nr.re, nr.im
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn den_roots(&self) -> Result<Vec<Complex<f64>>> {
        poly_roots(&self.den)
    }

    /// Realize the input as a sampled time signal u(t) = L^-1{a(s)/b(s)} at
    /// t = k*dt, k = 0..samples. Requires a strictly proper input (a Dirac
    /// impulse has no sample realization).
    pub fn realize(&self, dt: f64, samples: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let den = trim(&self.den);
        let num = trim(&self.num);
        if num.len() >= den.len() {
            return Err(Error::Validation(
                "only strictly proper inputs (deg a < deg b) have a signal realization".into(),
            ));
        }
        let deg = den.len() - 1;
        let lead = den[0];
        if num.is_empty() {
            return Ok(vec![0.0; samples]);
        }
        // Controllable canonical realization of the impulse response.
        let mut a = DMatrix::zeros(deg, deg);
        for i in 0..deg - 1 {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..deg {
            a[(deg - 1, j)] = -den[deg - j] / lead;
        }
        let mut c = DVector::zeros(deg);
        for (i, coeff) in num.iter().rev().enumerate() {
            c[i] = coeff / lead;
        }
        let step = (a * dt).exp();
        let mut x = DVector::zeros(deg);
        x[deg - 1] = 1.0;
        let mut out = Vec::with_capacity(samples);
        for _ in 0..samples {
            out.push(c.dot(&x));
            x = &step * &x;
        }
        Ok(out)
    }
}

/// Outcome of the distinguishability check.
#[derive(Debug, Clone, PartialEq)]
pub enum MomiVerdict {
    /// At least one denominator root is far from every mode eigenvalue.
    Accept { witness_root: Complex<f64> },
    /// Every root collides with some mode's spectrum; reports one collision.
    Reject {
        offending_mode: u32,
        shared_root: Complex<f64>,
    },
}

impl MomiVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, MomiVerdict::Accept { .. })
    }
}

/// Accept iff b(s) has at least one root whose distance to every eigenvalue of
/// every mode exceeds the pole-distance tolerance.
pub fn momi_check(input: &RationalInput, library: &ModeLibrary) -> Result<MomiVerdict> {
    input.validate()?;
    let roots = input.den_roots()?;
    let spectra: Vec<(u32, Vec<Complex<f64>>)> = library
        .modes()
        .iter()
        .map(|m| {
            (
                m.id,
                m.model.a.complex_eigenvalues().iter().copied().collect(),
            )
        })
        .collect();

    let mut first_collision: Option<(u32, Complex<f64>)> = None;
    for root in &roots {
        let mut clear = true;
        for (mode_id, eigs) in &spectra {
            if eigs.iter().any(|l| (l - root).norm() <= POLE_DISTANCE_TOL) {
                clear = false;
                if first_collision.is_none() {
                    first_collision = Some((*mode_id, *root));
                }
                break;
            }
        }
        if clear {
            return Ok(MomiVerdict::Accept { witness_root: *root });
        }
    }
    let (offending_mode, shared_root) = first_collision.ok_or_else(|| {
        Error::Validation("denominator has no roots; nothing can be distinguished".into())
    })?;
    Ok(MomiVerdict::Reject {
        offending_mode,
        shared_root,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shs::mode::{ClassLabel, Mode, ModeLibrary};
    use crate::ss::StateSpaceModel;
    use nalgebra::DMatrix;

    fn scalar_lib(a_vals: &[f64]) -> ModeLibrary {
        let modes = a_vals
            .iter()
            .enumerate()
            .map(|(i, &a)| Mode {
                id: i as u32,
                class_label: if i == 0 {
                    ClassLabel::Normal
                } else {
                    ClassLabel::Physical
                },
                model: StateSpaceModel::new(
                    DMatrix::from_element(1, 1, a),
                    DMatrix::from_element(1, 1, 1.0),
                    DMatrix::from_element(1, 1, 1.0),
                    vec!["x".into()],
                    vec!["u".into()],
                    vec!["y".into()],
                )
                .unwrap(),
                description: String::new(),
            })
            .collect();
        ModeLibrary::new(modes, 0).unwrap()
    }

    #[test]
    fn poly_roots_quadratic() {
        // (s+1)(s+2) = s^2 + 3s + 2
        let mut roots = poly_roots(&[1.0, 3.0, 2.0]).unwrap();
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((roots[0].re + 2.0).abs() < 1e-10 && roots[0].im.abs() < 1e-10);
        assert!((roots[1].re + 1.0).abs() < 1e-10);
    }

    #[test]
    fn shared_pole_is_rejected() {
        // b(s) = s, library contains an integrator mode (eigenvalue 0).
        let lib = scalar_lib(&[0.0, -1.0]);
        let input = RationalInput {
            num: vec![1.0],
            den: vec![1.0, 0.0],
            channel: 0,
        };
        match momi_check(&input, &lib).unwrap() {
            MomiVerdict::Reject {
                offending_mode,
                shared_root,
            } => {
                assert_eq!(offending_mode, 0);
                assert!(shared_root.norm() < 1e-12);
            }
            v => panic!("expected rejection, got {v:?}"),
        }
    }

    #[test]
    fn clear_root_is_accepted() {
        let lib = scalar_lib(&[-1.0, -2.0]);
        let input = RationalInput {
            num: vec![1.0],
            den: vec![1.0, 5.0], // root at -5
            channel: 0,
        };
        assert!(momi_check(&input, &lib).unwrap().is_accept());
    }

    #[test]
    fn non_coprime_is_error() {
        let input = RationalInput {
            num: vec![1.0, 1.0],            // s + 1
            den: vec![1.0, 3.0, 2.0],       // (s+1)(s+2)
            channel: 0,
        };
        assert!(input.validate().is_err());
    }

    #[test]
    fn realize_first_order_decay() {
        // 1/(s+5) -> e^{-5t}
        let input = RationalInput {
            num: vec![1.0],
            den: vec![1.0, 5.0],
            channel: 0,
        };
        let u = input.realize(0.01, 10).unwrap();
        for (k, v) in u.iter().enumerate() {
            let expect = (-5.0 * 0.01 * k as f64).exp();
            assert!((v - expect).abs() < 1e-10, "k={k}: {v} vs {expect}");
        }
    }

    #[test]
    fn realize_rejects_biproper() {
        let input = RationalInput {
            num: vec![2.0, 1.0],
            den: vec![1.0, 5.0],
            channel: 0,
        };
        assert!(input.validate().is_ok());
        assert!(input.realize(0.01, 4).is_err());
    }
}
