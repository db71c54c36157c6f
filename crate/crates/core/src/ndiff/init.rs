use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Tensor;
use crate::error::{Error, Result};

/// `gain · Q` with orthonormal rows (rows ≤ cols) or orthonormal columns.
///
/// Q comes from the QR factorisation of a standard-normal matrix, with column
/// signs fixed by the diagonal of R so the draw is uniform over the Stiefel
/// manifold.
pub fn orthogonal_init<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Result<Tensor> {
    if rows == 0 || cols == 0 {
        return Err(Error::Shape(format!("orthogonal init needs positive dims, got {rows}x{cols}")));
    }
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let sample = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = sample.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // q is tall x short with orthonormal columns.
    let mut out = Tensor::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            out.set(i, j, gain * v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gram(t: &Tensor, rows: bool) -> Tensor {
        if rows {
            t.matmul(&t.transpose()).unwrap()
        } else {
            t.transpose().matmul(t).unwrap()
        }
    }

    fn assert_scaled_identity(m: &Tensor, scale: f64) {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let want = if i == j { scale } else { 0.0 };
                assert!((m.get(i, j) - want).abs() < 1e-10, "({i},{j}) = {}", m.get(i, j));
            }
        }
    }

    #[test]
    fn square_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = orthogonal_init(4, 4, 1.0, &mut rng).unwrap();
        assert_scaled_identity(&gram(&q, false), 1.0);
    }

    #[test]
    fn wide_has_orthonormal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = orthogonal_init(2, 4, 1.0, &mut rng).unwrap();
        assert_scaled_identity(&gram(&q, true), 1.0);
    }

    #[test]
    fn tall_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthogonal_init(7, 3, 1.0, &mut rng).unwrap();
        assert_scaled_identity(&gram(&q, false), 1.0);
    }

    #[test]
    fn gain_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = orthogonal_init(5, 5, 2.0, &mut rng).unwrap();
        assert_scaled_identity(&gram(&q, false), 4.0);
    }

    #[test]
    fn seeded_draws_repeat() {
        let a = orthogonal_init(3, 6, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = orthogonal_init(3, 6, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(orthogonal_init(0, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }
}
