//! Observability matrix and numerical rank.

use nalgebra::DMatrix;

use crate::shs::mode::Mode;

/// Stack [C; CA; ...; CA^{n-1}] and compute its numerical rank from singular
/// values with tolerance n * eps * sigma_max.
pub fn observability(mode: &Mode) -> (DMatrix<f64>, usize) {
    let n = mode.model.n();
    let p = mode.model.p();
    let mut obs = DMatrix::zeros(n * p, n);
    let mut block = mode.model.c.clone();
    for i in 0..n {
        obs.view_mut((i * p, 0), (p, n)).copy_from(&block);
        block = &block * &mode.model.a;
    }
    let svd = obs.clone().svd(false, false);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = n as f64 * f64::EPSILON * sigma_max;
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > tol && **s > 0.0)
        .count();
    (obs, rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shs::mode::ClassLabel;
    use crate::ss::StateSpaceModel;

    fn mode(a: DMatrix<f64>, c: DMatrix<f64>) -> Mode {
        let n = a.nrows();
        let p = c.nrows();
        Mode {
            id: 0,
            class_label: ClassLabel::Normal,
            model: StateSpaceModel::new(
                a,
                DMatrix::zeros(n, 1),
                c,
                (0..n).map(|i| format!("x{i}")).collect(),
                vec!["u".into()],
                (0..p).map(|i| format!("y{i}")).collect(),
            )
            .unwrap(),
            description: String::new(),
        }
    }

    fn double_integrator() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }

    #[test]
    fn observable_double_integrator() {
        let m = mode(double_integrator(), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let (obs, rank) = observability(&m);
        assert_eq!(obs, DMatrix::identity(2, 2));
        assert_eq!(rank, 2);
    }

    #[test]
    fn angle_unobservable_from_speed() {
        let m = mode(double_integrator(), DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        let (obs, rank) = observability(&m);
        assert_eq!(obs, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(rank, 1);
    }

    #[test]
    fn rank_invariant_under_row_scaling() {
        let m = mode(double_integrator(), DMatrix::from_row_slice(1, 2, &[0.5, 0.0]));
        let (_, rank) = observability(&m);
        assert_eq!(rank, 2);
    }
}
