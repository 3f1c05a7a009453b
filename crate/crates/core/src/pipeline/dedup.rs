use crate::gp::Dataset;

/// Greedy thinning: a row is kept when its Euclidean distance to every row
/// kept so far is at least `eps`. Order of first appearance is preserved.
pub fn deduplicate(data: &Dataset, eps: f64) -> Dataset {
    if eps <= 0.0 {
        return data.clone();
    }
    let eps2 = eps * eps;
    let mut keep: Vec<usize> = Vec::new();
    for (i, x) in data.rows().enumerate() {
        let far = keep.iter().all(|&k| {
            let d2: f64 = data.row(k).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            d2 >= eps2
        });
        if far {
            keep.push(i);
        }
    }
    data.select(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_eps_is_identity() {
        let d = Dataset::new(1, vec![1.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(deduplicate(&d, 0.0), d);
    }

    #[test]
    fn near_duplicates_collapse_to_first() {
        let d = Dataset::new(1, vec![0.0, 0.05, 1.0, 1.01], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let out = deduplicate(&d, 0.1);
        assert_eq!(out.labels(), &[5.0, 7.0]);
    }

    proptest! {
        #[test]
        fn kept_rows_are_separated_and_subset(
            xs in proptest::collection::vec(-2.0f64..2.0, 2..60),
            eps in 0.01f64..1.0,
        ) {
            let n = xs.len() / 2;
            let d = Dataset::new(2, xs[..2 * n].to_vec(), (0..n).map(|i| i as f64).collect()).unwrap();
            let out = deduplicate(&d, eps);
            prop_assert!(out.len() <= d.len());
            for i in 0..out.len() {
                for j in 0..i {
                    let d2: f64 = out.row(i).iter().zip(out.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                    prop_assert!(d2.sqrt() >= eps - 1e-12);
                }
            }
            // every dropped row is within eps of a kept one
            for x in d.rows() {
                let near = out.rows().any(|k| k.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < eps || k == x);
                prop_assert!(near);
            }
        }
    }
}
