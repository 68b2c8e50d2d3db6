//! Non-learning comparison policies.

use crate::auction::{auction_triggered, eligible};
use crate::domain::{AuctionOutcome, FrameState, VspProfile};
use crate::error::Result;

/// Bid-density greedy allocator with pay-as-bid pricing.
///
/// Eligible requests are visited by bid per block, highest first (ties: higher
/// QCI priority, then lower index). Each is granted in full if it still fits,
/// otherwise skipped. Coefficients are 1 for participants, so weighted bids equal
/// raw bids.
pub fn greedy_allocate(profiles: &[VspProfile], frame: &FrameState) -> Result<AuctionOutcome> {
    let requests = frame.requests();
    let mut order: Vec<usize> = (0..requests.len())
        .filter(|&i| eligible(&requests[i], &profiles[i]))
        .collect();
    order.sort_by(|&a, &b| {
        let da = requests[a].bid() / requests[a].demand() as f64;
        let db = requests[b].bid() / requests[b].demand() as f64;
        db.total_cmp(&da)
            .then(profiles[a].qci_priority().cmp(&profiles[b].qci_priority()))
            .then(a.cmp(&b))
    });
    let mut remaining = frame.block_count();
    let mut winners = vec![false; requests.len()];
    for i in order {
        let need = requests[i].demand();
        if need <= remaining {
            winners[i] = true;
            remaining -= need;
        }
    }
    let coefficients: Vec<f64> = requests
        .iter()
        .map(|r| if r.participating() { 1.0 } else { 0.0 })
        .collect();
    let bids: Vec<f64> = requests.iter().map(|r| r.bid()).collect();
    let payments = bids
        .iter()
        .zip(&winners)
        .map(|(b, &w)| if w { *b } else { 0.0 })
        .collect();
    AuctionOutcome::new(
        requests,
        frame.block_count(),
        winners,
        coefficients,
        bids,
        payments,
        auction_triggered(requests, frame.available_bandwidth(), frame.block_bandwidth()),
    )
}

/// Coefficient scale of one for every bidder, whatever the state.
pub fn unit_policy(_state: &[f64], bidders: usize) -> Vec<f64> {
    vec![1.0; bidders]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{determine_winners, Instance};
    use crate::domain::Request;
    use crate::environment::{EnvConfig, SpectrumEnv};
    use proptest::prelude::*;

    fn profiles(n: usize) -> Vec<VspProfile> {
        (0..n).map(|i| VspProfile::new(i + 1, 1, 1.0, 1e6).unwrap()).collect()
    }

    fn frame(items: &[(u32, f64)], capacity: u32) -> FrameState {
        let reqs = items
            .iter()
            .enumerate()
            .map(|(i, &(n, b))| Request::new(i + 1, b, b, n, 100.0).unwrap())
            .collect();
        FrameState::new(0, capacity as f64 * 5e6, 5e6, 1e12, reqs).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let f = frame(&[(3, 10.0), (4, 12.0), (5, 21.0)], 7);
        let out = greedy_allocate(&profiles(3), &f).unwrap();
        assert_eq!(out.winners(), &[false, false, true]);
        let total: f64 = out
            .weighted_bids()
            .iter()
            .zip(out.winners())
            .filter(|(_, &w)| w)
            .map(|(b, _)| b)
            .sum();
        assert_eq!(total, 21.0);
        assert_eq!(out.payments(), &[0.0, 0.0, 21.0]);

        let empty = frame(&[], 7);
        assert!(greedy_allocate(&profiles(0), &empty).unwrap().is_empty());

        let single = frame(&[(4, 3.0)], 7);
        let out = greedy_allocate(&profiles(1), &single).unwrap();
        assert_eq!(out.winners(), &[true]);
        assert_eq!(out.total_blocks_used(), 4);
    }

    #[test]
    fn greedy_tie_break() {
        let p = vec![
            VspProfile::new(1, 4, 1.0, 1e6).unwrap(),
            VspProfile::new(2, 2, 1.0, 1e6).unwrap(),
            VspProfile::new(3, 2, 1.0, 1e6).unwrap(),
        ];
        let f = frame(&[(4, 8.0), (4, 8.0), (4, 8.0)], 4);
        assert_eq!(greedy_allocate(&p, &f).unwrap().winners(), &[false, true, false]);
    }

    #[test]
    fn unit_policy_examples() {
        assert_eq!(unit_policy(&[0.3; 15], 5), vec![1.0; 5]);
        assert_eq!(unit_policy(&[], 5), unit_policy(&[0.9; 15], 5));
        let mut env = SpectrumEnv::new(EnvConfig::default()).unwrap();
        let mut state = env.reset(4);
        for _ in 0..200 {
            let step = env.step(&unit_policy(&state, 5)).unwrap();
            assert!(step.outcome.total_blocks_used() <= step.frame.block_count());
            for (i, p) in step.outcome.payments().iter().enumerate() {
                assert!(*p >= 0.0 && *p <= step.outcome.weighted_bids()[i]);
            }
            state = step.next_state;
        }
    }

    proptest! {
        #[test]
        fn greedy_never_beats_knapsack(
            items in proptest::collection::vec((1u32..=20, 0.0f64..100.0), 0..10),
            cap in 0u32..60,
        ) {
            let f = frame(&items, cap);
            let p = profiles(items.len());
            let g = greedy_allocate(&p, &f).unwrap();
            prop_assert!(g.total_blocks_used() <= cap);
            let inst = Instance::new(
                items.iter().map(|x| x.1).collect(),
                items.iter().map(|x| x.0).collect(),
                vec![true; items.len()],
                vec![1; items.len()],
                cap,
            ).unwrap();
            let opt = inst.objective(&determine_winners(&inst));
            prop_assert!(inst.objective(g.winners()) <= opt + 1e-9);
            prop_assert_eq!(greedy_allocate(&p, &f).unwrap(), g);
        }
    }
}
