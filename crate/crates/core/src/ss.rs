//! Continuous-time LTI state-space triple with named axes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An (A, B, C) triple with n states, m inputs, p outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        state_names: Vec<String>,
        input_names: Vec<String>,
        output_names: Vec<String>,
    ) -> Result<Self> {
        let model = Self {
            a,
            b,
            c,
            state_names,
            input_names,
            output_names,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if self.b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B has {} rows, expected {}",
                self.b.nrows(),
                n
            )));
        }
        if self.c.ncols() != n {
            return Err(Error::Dimension(format!(
                "C has {} columns, expected {}",
                self.c.ncols(),
                n
            )));
        }
        if self.state_names.len() != n {
            return Err(Error::Dimension(format!(
                "{} state names for {} states",
                self.state_names.len(),
                n
            )));
        }
        if self.input_names.len() != self.b.ncols() {
            return Err(Error::Dimension(format!(
                "{} input names for {} inputs",
                self.input_names.len(),
                self.b.ncols()
            )));
        }
        if self.output_names.len() != self.c.nrows() {
            return Err(Error::Dimension(format!(
                "{} output names for {} outputs",
                self.output_names.len(),
                self.c.nrows()
            )));
        }
        for m in [&self.a, &self.b, &self.c] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite entry in system matrix".into()));
            }
        }
        Ok(())
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of inputs.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Number of outputs.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Largest real part over the eigenvalues of A (spectral abscissa).
    pub fn spectral_abscissa(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// True if every eigenvalue of A has a strictly negative real part.
    pub fn is_hurwitz(&self) -> bool {
        self.spectral_abscissa() < 0.0
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|s| s == name)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.input_names.iter().position(|s| s == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ssm(n: usize, m: usize, p: usize) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, m),
            DMatrix::zeros(p, n),
            (0..n).map(|i| format!("x{i}")).collect(),
            (0..m).map(|i| format!("u{i}")).collect(),
            (0..p).map(|i| format!("y{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn dimension_checks() {
        let ok = ssm(3, 2, 1);
        assert_eq!(ok.n(), 3);
        assert_eq!(ok.m(), 2);
        assert_eq!(ok.p(), 1);

        let mut bad = ok.clone();
        bad.state_names.pop();
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.b = DMatrix::zeros(2, 2);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = ssm(2, 1, 1);
        m.a[(0, 0)] = f64::NAN;
        assert!(m.validate().is_err());
    }

    #[test]
    fn hurwitz_detection() {
        let mut m = ssm(2, 1, 1);
        m.a[(0, 0)] = -1.0;
        m.a[(1, 1)] = -2.0;
        assert!(m.is_hurwitz());
        m.a[(1, 1)] = 0.5;
        assert!(!m.is_hurwitz());
    }
}
