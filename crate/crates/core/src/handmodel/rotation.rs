use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};

const DEGENERATE: f64 = 1e-12;

/// Gram-Schmidt map from a row-major 3x2 matrix `[a1 | a2]` to a rotation.
///
/// `b1 = a1/|a1|`, `b2 = normalize(a2 - (a2.b1) b1)`, `b3 = b1 x b2`; the
/// result has columns `b1, b2, b3`.
pub fn rot6d_to_matrix(a: &[f64; 6]) -> Result<Matrix3<f64>> {
    let a1 = Vector3::new(a[0], a[2], a[4]);
    let a2 = Vector3::new(a[1], a[3], a[5]);
    let n1 = a1.norm();
    if !(n1 > DEGENERATE) {
        return Err(Error::SingularRotation(format!("first column has norm {n1}")));
    }
    let b1 = a1 / n1;
    let u = a2 - b1 * a2.dot(&b1);
    let nu = u.norm();
    if !(nu > DEGENERATE * a2.norm().max(1.0)) {
        return Err(Error::SingularRotation(
            "second column is parallel to the first".into(),
        ));
    }
    let b2 = u / nu;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// First two columns of `r`, row-major.
pub fn matrix_to_rot6d(r: &Matrix3<f64>) -> [f64; 6] {
    [
        r[(0, 0)],
        r[(0, 1)],
        r[(1, 0)],
        r[(1, 1)],
        r[(2, 0)],
        r[(2, 1)],
    ]
}

pub fn axis_angle_to_matrix(w: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*w).into_inner()
}

/// Rotation vector (axis times angle) of a rotation matrix.
pub fn matrix_to_axis_angle(r: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Re-orthonormalize a 6D representation onto the rotation it encodes.
pub fn canonical_rot6d(a: &[f64; 6]) -> Result<[f64; 6]> {
    Ok(matrix_to_rot6d(&rot6d_to_matrix(a)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Matrix3<f64>, b: &Matrix3<f64>) -> bool {
        (a - b).abs().max() < 1e-12
    }

    #[test]
    fn identity_columns() {
        let r = rot6d_to_matrix(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(close(&r, &Matrix3::identity()));
    }

    #[test]
    fn scaled_and_skewed_columns_give_identity() {
        // a1 = (2,0,0), a2 = (1,1,0)
        let r = rot6d_to_matrix(&[2.0, 1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(close(&r, &Matrix3::identity()));
    }

    #[test]
    fn swapped_axes() {
        // a1 = (0,1,0), a2 = (1,0,0) -> b3 = (0,0,-1)
        let r = rot6d_to_matrix(&[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let expected = Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
        assert!(close(&r, &expected));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(matches!(
            rot6d_to_matrix(&[0.0; 6]),
            Err(Error::SingularRotation(_))
        ));
        // parallel columns
        assert!(rot6d_to_matrix(&[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn axis_angle_roundtrip() {
        let w = Vector3::new(0.3, -0.2, 0.9);
        let r = axis_angle_to_matrix(&w);
        assert!((matrix_to_axis_angle(&r) - w).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn output_is_a_rotation(a in prop::array::uniform6(-3.0f64..3.0)) {
            let a1 = Vector3::new(a[0], a[2], a[4]);
            let a2 = Vector3::new(a[1], a[3], a[5]);
            prop_assume!(a1.norm() > 1e-3);
            prop_assume!(a1.normalize().cross(&a2).norm() > 1e-3);
            let r = rot6d_to_matrix(&a).unwrap();
            prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }
}
