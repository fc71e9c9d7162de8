use rand::Rng;

use crate::dynamics::{BoxDomain, StateBatch};

use super::TrainError;

/// i.i.d. uniform states in the box with `‖x‖ ≥ cutoff_radius`.
///
/// Fails once more than 99% of draws have been rejected, judged after at
/// least `100·batch` attempts.
pub fn sample_uniform_box(
    domain: &BoxDomain,
    batch: usize,
    cutoff_radius: f64,
    rng: &mut impl Rng,
) -> Result<StateBatch, TrainError> {
    if batch == 0 {
        return Err(TrainError::Config("batch must be at least 1".into()));
    }
    let m = domain.dim();
    let r2 = cutoff_radius * cutoff_radius;
    let mut data = Vec::with_capacity(batch * m);
    let mut x = vec![0.0; m];
    let mut attempts = 0usize;
    let mut accepted = 0usize;
    while accepted < batch {
        for (i, v) in x.iter_mut().enumerate() {
            *v = rng.gen_range(domain.lo[i]..domain.hi[i]);
        }
        attempts += 1;
        if cutoff_radius <= 0.0 || x.iter().map(|v| v * v).sum::<f64>() >= r2 {
            data.extend_from_slice(&x);
            accepted += 1;
        } else if attempts >= 100 * batch && accepted * 100 < attempts {
            return Err(TrainError::Config(format!(
                "cutoff radius {cutoff_radius} rejects more than 99% of the box"
            )));
        }
    }
    Ok(StateBatch::new(m, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_stay_in_box_and_outside_cutoff() {
        let d = BoxDomain::symmetric(2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_uniform_box(&d, 500, 0.1, &mut rng).unwrap();
        assert_eq!(b.len(), 500);
        for r in b.rows() {
            assert!(r.iter().all(|v| (-1.0..1.0).contains(v)));
            assert!(r[0].hypot(r[1]) >= 0.1);
        }
    }

    #[test]
    fn fixed_seed_repeats() {
        let d = BoxDomain::symmetric(3, 0.5);
        let a = sample_uniform_box(&d, 64, 0.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_uniform_box(&d, 64, 0.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hopeless_cutoff_is_a_config_error() {
        let d = BoxDomain::symmetric(2, 1.0);
        let r = sample_uniform_box(&d, 10, 1.41, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(TrainError::Config(_))));
    }
}
