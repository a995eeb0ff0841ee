//! Largest-remainder integer apportionment.

/// Splits `total` into integers proportional to `weights`, summing exactly to
/// `total`. Leftover units go to the largest fractional remainders; ties go to
/// the lower index. Returns all zeros when every weight is zero.
pub fn largest_remainder(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().filter(|w| w.is_finite() && **w > 0.0).sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|&w| if w.is_finite() && w > 0.0 { w / sum * total as f64 } else { 0.0 })
        .collect();
    let mut seats: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = seats.iter().sum();

    if assigned > total {
        // floating error pushed floors past the total; trim from the smallest remainders
        let mut order: Vec<usize> = (0..seats.len()).filter(|&i| seats[i] > 0).collect();
        order.sort_by(|&a, &b| (quotas[a] - quotas[a].floor()).total_cmp(&(quotas[b] - quotas[b].floor())).then(b.cmp(&a)));
        for &i in order.iter().take((assigned - total) as usize) {
            seats[i] -= 1;
        }
        return seats;
    }

    let mut order: Vec<usize> = (0..seats.len()).filter(|&i| quotas[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - assigned;
    if order.is_empty() {
        return seats;
    }
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        seats[i] += 1;
        left -= 1;
    }
    seats
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        assert_eq!(largest_remainder(&[1.0, 1.0], 2), vec![1, 1]);
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 2), vec![1, 1, 0]);
        // quotas 4.2, 3.5, 2.3 -> floors 4,3,2; one left goes to 3.5
        assert_eq!(largest_remainder(&[42.0, 35.0, 23.0], 10), vec![4, 4, 2]);
        assert_eq!(largest_remainder(&[0.0, 0.0], 5), vec![0, 0]);
        assert_eq!(largest_remainder(&[], 5), Vec::<u64>::new());
        assert_eq!(largest_remainder(&[3.0, 0.0, 1.0], 0), vec![0, 0, 0]);
        assert_eq!(largest_remainder(&[0.0, 2.0, 0.0], 7), vec![0, 7, 0]);
    }

    proptest! {
        #[test]
        fn conserves_total(weights in prop::collection::vec(0.0f64..1e6, 1..50), total in 0u64..1_000_000) {
            let seats = largest_remainder(&weights, total);
            let positive = weights.iter().any(|&w| w > 0.0);
            prop_assert_eq!(seats.iter().sum::<u64>(), if positive { total } else { 0 });
            let sum: f64 = weights.iter().sum();
            for (s, w) in seats.iter().zip(&weights) {
                if *w == 0.0 {
                    prop_assert_eq!(*s, 0);
                } else {
                    let quota = w / sum * total as f64;
                    prop_assert!((*s as f64 - quota).abs() < 1.0 + 1e-6);
                }
            }
        }
    }
}
