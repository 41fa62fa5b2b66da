use super::EncoderError;

/// Euclidean projection onto `{p : p >= 0, sum p = 1}` by sorting and
/// thresholding.
pub fn project_simplex(x: &[f64]) -> Result<Vec<f64>, EncoderError> {
    if let Some(&bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(EncoderError::NonFinite(bad));
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut p: Vec<f64> = x.iter().map(|&v| (v - theta).max(0.0)).collect();
    // remove the rounding residue so the sum is 1 to machine precision
    let s: f64 = p.iter().sum();
    if s > 0.0 && s != 1.0 {
        let k = p.iter().filter(|&&v| v > 0.0).count() as f64;
        let shift = (1.0 - s) / k;
        for v in p.iter_mut().filter(|v| **v > 0.0) {
            *v = (*v + shift).max(0.0);
        }
    }
    Ok(p)
}

/// Entries nonnegative and summing to one within `tol`.
pub fn on_simplex(p: &[f64], tol: f64) -> bool {
    !p.is_empty() && p.iter().all(|&v| v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(project_simplex(&[0.6, 0.6]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let p = project_simplex(&[0.3, 0.3, 0.4]).unwrap();
        for (a, b) in p.iter().zip([0.3, 0.3, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(project_simplex(&[f64::INFINITY]).is_err());
    }

    // Brute-force oracle: the projection minimizes distance over the simplex;
    // compare with the best of many random feasible points and vertices.
    #[test]
    fn no_feasible_point_is_closer() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..6);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = project_simplex(&x).unwrap();
            let d = |q: &[f64]| q.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let dp = d(&p);
            for _ in 0..200 {
                let mut q: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().ln()).collect();
                let s: f64 = q.iter().sum();
                q.iter_mut().for_each(|v| *v /= s);
                assert!(dp <= d(&q) + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn lands_on_simplex(x in prop::collection::vec(-10.0f64..10.0, 1..8)) {
            let p = project_simplex(&x).unwrap();
            prop_assert!(on_simplex(&p, 1e-12));
        }

        #[test]
        fn idempotent(x in prop::collection::vec(-10.0f64..10.0, 1..8)) {
            let p = project_simplex(&x).unwrap();
            let q = project_simplex(&p).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn permutation_equivariant(
            x in prop::collection::vec(-10.0f64..10.0, 1..8),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..x.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let px: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            let a = project_simplex(&x).unwrap();
            let b = project_simplex(&px).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((b[k] - a[i]).abs() <= 1e-12);
            }
        }

        #[test]
        fn order_preserving(x in prop::collection::vec(-10.0f64..10.0, 2..8)) {
            let p = project_simplex(&x).unwrap();
            for i in 0..x.len() {
                for j in 0..x.len() {
                    if x[i] >= x[j] {
                        prop_assert!(p[i] >= p[j]);
                    }
                }
            }
        }
    }
}
