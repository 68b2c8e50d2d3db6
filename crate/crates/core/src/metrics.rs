//! Reported quantities: frame utility, spectrum utilization, Jain fairness,
//! winning percentage and episode mean reward.

use crate::domain::{AuctionOutcome, Request, VspProfile};
use crate::error::{Error, Result};

/// `sum_i (x_i * r_i - r_i^min)` over every bidder, winners or not.
///
/// The environment's reward is this value; it is accumulated in bidder order.
pub fn frame_utility(outcome: &AuctionOutcome, requests: &[Request], profiles: &[VspProfile]) -> f64 {
    let mut total = 0.0;
    for ((won, req), prof) in outcome.winners().iter().zip(requests).zip(profiles) {
        let granted = if *won { req.rate() } else { 0.0 };
        total += granted - prof.min_rate();
    }
    total
}

/// Blocks used over blocks available, counting only frames where the auction ran.
pub fn spectrum_utilization(outcomes: &[AuctionOutcome], block_counts: &[u32]) -> Result<f64> {
    utilization(outcomes, block_counts, true)
}

/// Like [`spectrum_utilization`] but also counts direct-assignment frames.
pub fn spectrum_utilization_all(outcomes: &[AuctionOutcome], block_counts: &[u32]) -> Result<f64> {
    utilization(outcomes, block_counts, false)
}

fn utilization(outcomes: &[AuctionOutcome], block_counts: &[u32], triggered_only: bool) -> Result<f64> {
    if outcomes.len() != block_counts.len() {
        return Err(Error::Dimension {
            context: "spectrum_utilization",
            expected: outcomes.len(),
            actual: block_counts.len(),
        });
    }
    let (used, avail) = outcomes
        .iter()
        .zip(block_counts)
        .filter(|(o, _)| !triggered_only || o.triggered())
        .fold((0u64, 0u64), |(u, a), (o, &j)| {
            (u + o.total_blocks_used() as u64, a + j as u64)
        });
    if avail == 0 {
        return Err(Error::Undefined("spectrum utilization over zero blocks"));
    }
    Ok(used as f64 / avail as f64)
}

/// Jain's index `(sum t)^2 / (n * sum t^2)`.
pub fn jain_fairness(totals: &[f64]) -> Result<f64> {
    if totals.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::invalid("jain_fairness", "negative or NaN entry"));
    }
    let sum: f64 = totals.iter().sum();
    let sq: f64 = totals.iter().map(|t| t * t).sum();
    if sum <= 0.0 {
        return Err(Error::Undefined("fairness of all-zero allocation"));
    }
    Ok(sum * sum / (totals.len() as f64 * sq))
}

/// Cumulative granted rate per bidder over a window of frames.
pub fn allocated_rate_totals<'a, I>(frames: I, bidders: usize) -> Vec<f64>
where
    I: IntoIterator<Item = (&'a AuctionOutcome, &'a [Request])>,
{
    let mut totals = vec![0.0; bidders];
    for (outcome, requests) in frames {
        for (i, req) in requests.iter().enumerate().take(bidders) {
            if outcome.won(i) {
                totals[i] += req.rate();
            }
        }
    }
    totals
}

/// Share of triggered auctions won by bidder at position `index`.
pub fn winning_percentage(outcomes: &[AuctionOutcome], index: usize) -> Result<f64> {
    let auctions: Vec<&AuctionOutcome> = outcomes.iter().filter(|o| o.triggered()).collect();
    if auctions.is_empty() {
        return Err(Error::Undefined("winning percentage without auctions"));
    }
    let wins = auctions
        .iter()
        .filter(|o| o.winners().get(index).copied().unwrap_or(false))
        .count();
    Ok(wins as f64 / auctions.len() as f64)
}

pub fn mean_episode_reward(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::Undefined("mean of empty reward sequence"));
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// Median of a non-empty sample (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Undefined("median of empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::default_profiles;
    use proptest::prelude::*;

    fn outcome(demands: &[u32], won: &[bool], triggered: bool) -> (AuctionOutcome, Vec<Request>) {
        let reqs: Vec<Request> = demands
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                if d == 0 {
                    Request::absent(i + 1)
                } else {
                    Request::new(i + 1, 1.0, 2.0, d, 33.22 * d as f64).unwrap()
                }
            })
            .collect();
        let n = reqs.len();
        let out = AuctionOutcome::new(
            &reqs,
            1000,
            won.to_vec(),
            vec![1.0; n],
            vec![1.0; n],
            vec![0.0; n],
            triggered,
        )
        .unwrap();
        (out, reqs)
    }

    #[test]
    fn utilization_examples() {
        let (a, _) = outcome(&[30, 30], &[true, true], true);
        let (b, _) = outcome(&[30, 30], &[true, false], true);
        assert_eq!(spectrum_utilization(std::slice::from_ref(&a), &[60]).unwrap(), 1.0);
        let (none, _) = outcome(&[30, 30], &[false, false], true);
        assert_eq!(spectrum_utilization(&[none], &[60]).unwrap(), 0.0);
        assert_eq!(spectrum_utilization(&[b.clone(), a.clone()], &[60, 60]).unwrap(), 0.75);
        let (direct, _) = outcome(&[10, 0], &[true, false], false);
        assert_eq!(
            spectrum_utilization(&[b.clone(), direct.clone()], &[60, 60]).unwrap(),
            0.5
        );
        assert_eq!(spectrum_utilization_all(&[b, direct], &[60, 60]).unwrap(), 40.0 / 120.0);
        assert!(spectrum_utilization(&[], &[]).is_err());
        assert!(spectrum_utilization(&[a], &[]).is_err());
    }

    #[test]
    fn jain_examples() {
        assert_eq!(jain_fairness(&[1.0; 4]).unwrap(), 1.0);
        assert_eq!(jain_fairness(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
        assert!((jain_fairness(&[2.0, 1.0, 1.0]).unwrap() - 16.0 / 18.0).abs() < 1e-15);
        assert!(jain_fairness(&[0.0, 0.0]).is_err());
        assert!(jain_fairness(&[]).is_err());
    }

    #[test]
    fn winning_percentage_examples() {
        let (w, _) = outcome(&[5, 5], &[true, false], true);
        let (d, _) = outcome(&[5, 5], &[true, true], false);
        let outs = vec![w.clone(), w.clone(), d];
        assert_eq!(winning_percentage(&outs, 0).unwrap(), 1.0);
        assert_eq!(winning_percentage(&outs, 1).unwrap(), 0.0);
        let (l, _) = outcome(&[5, 5], &[false, true], true);
        let mut many = vec![w; 170];
        many.extend(std::iter::repeat_n(l, 330));
        assert_eq!(winning_percentage(&many, 0).unwrap(), 0.34);
        let (d, _) = outcome(&[5], &[true], false);
        assert!(winning_percentage(&[d], 0).is_err());
    }

    #[test]
    fn mean_reward_examples() {
        assert_eq!(mean_episode_reward(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(mean_episode_reward(&[-4.5; 7]).unwrap(), -4.5);
        assert!(mean_episode_reward(&[]).is_err());
        let profiles = default_profiles();
        let (lost, reqs) = outcome(&[3, 3, 7, 3, 3], &[false; 5], true);
        let r = frame_utility(&lost, &reqs, &profiles);
        assert!((r - -465.08).abs() < 1e-9);
        assert!((mean_episode_reward(&[r; 10]).unwrap() - -465.08).abs() < 1e-9);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
    }

    proptest! {
        #[test]
        fn jain_bounds_and_scale(t in proptest::collection::vec(0.0f64..100.0, 1..12), k in 0.01f64..100.0) {
            prop_assume!(t.iter().any(|x| *x > 1e-6));
            let j = jain_fairness(&t).unwrap();
            let n = t.len() as f64;
            prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
            let scaled: Vec<f64> = t.iter().map(|x| x * k).collect();
            prop_assert!((jain_fairness(&scaled).unwrap() - j).abs() < 1e-9);
        }

        #[test]
        fn utilization_bounded_and_permutation_invariant(
            frames in proptest::collection::vec((1u32..30, 1u32..30, proptest::bool::ANY, proptest::bool::ANY), 1..20),
            rot in 0usize..20,
        ) {
            let mut outs = Vec::new();
            let mut caps = Vec::new();
            for (d1, d2, w1, w2) in &frames {
                let (o, _) = outcome(&[*d1, *d2], &[*w1, *w2], true);
                outs.push(o);
                caps.push(d1 + d2 + 5);
            }
            let u = spectrum_utilization(&outs, &caps).unwrap();
            prop_assert!((0.0..=1.0).contains(&u));
            let r = rot % outs.len();
            outs.rotate_left(r);
            caps.rotate_left(r);
            prop_assert_eq!(spectrum_utilization(&outs, &caps).unwrap(), u);
        }
    }

    #[test]
    fn jain_is_one_only_for_equal_entries() {
        assert!(jain_fairness(&[1.0, 1.0, 1.0001]).unwrap() < 1.0);
        assert_eq!(jain_fairness(&[3.5, 3.5, 3.5]).unwrap(), 1.0);
    }
}
