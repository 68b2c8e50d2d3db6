//! Priority-weighted VCG clearing: coefficient application, the trigger test,
//! exact 0/1-knapsack winner determination and Clarke pivot payments.
//!
//! Ties between allocations of equal weighted value are broken deterministically:
//! bidders are ranked by (QCI priority ascending, index ascending) and the
//! allocation whose indicator vector is lexicographically greatest in that rank
//! order wins. Objective values are always summed in bidder-index order so the
//! exact solver and the enumeration oracle report bit-identical objectives for the
//! same winner set.

use serde::{Deserialize, Serialize};

use crate::domain::{AuctionOutcome, FrameState, Request, VspProfile};
use crate::error::{Error, Result};

/// Relative tolerance under which two objectives count as tied.
const TIE_TOL: f64 = 1e-9;
/// Largest number of eligible items the enumeration oracle accepts.
pub const BRUTE_FORCE_LIMIT: usize = 20;

fn tol(reference: f64) -> f64 {
    TIE_TOL * reference.abs().max(1.0)
}

/// Weights of the coefficient function `c = scale * (qos_weight / q + truth_weight * theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientParams {
    qos_weight: f64,
    truth_weight: f64,
}

impl CoefficientParams {
    pub fn new(qos_weight: f64, truth_weight: f64) -> Result<Self> {
        if !(qos_weight >= 0.0 && truth_weight >= 0.0) {
            return Err(Error::invalid("coefficient weights", "must be >= 0"));
        }
        if !(qos_weight + truth_weight > 0.0) {
            return Err(Error::invalid("coefficient weights", "alpha + beta must be > 0"));
        }
        Ok(Self {
            qos_weight,
            truth_weight,
        })
    }

    pub fn qos_weight(&self) -> f64 {
        self.qos_weight
    }
    pub fn truth_weight(&self) -> f64 {
        self.truth_weight
    }
}

impl Default for CoefficientParams {
    fn default() -> Self {
        Self {
            qos_weight: 1.0,
            truth_weight: 1.0,
        }
    }
}

/// Bid coefficient for one bidder. Zero for non-participants.
///
/// Panics if `agent_scale` is negative.
pub fn compute_coefficient(
    profile: &VspProfile,
    request: &Request,
    params: &CoefficientParams,
    agent_scale: f64,
) -> f64 {
    assert!(
        agent_scale >= 0.0,
        "agent scale must be non-negative, got {agent_scale}"
    );
    if !request.participating() {
        return 0.0;
    }
    agent_scale * (params.qos_weight * profile.priority_weight() + params.truth_weight * request.theta())
}

/// True when the blocks requested exceed the available bandwidth: `w * sum(n) > BW_f`.
pub fn auction_triggered(requests: &[Request], available_bandwidth: f64, block_bandwidth: f64) -> bool {
    let demanded: u64 = requests.iter().map(|r| r.demand() as u64).sum();
    block_bandwidth * demanded as f64 > available_bandwidth
}

/// A bidder may win only if it participates, asks for blocks, and the rate it
/// would obtain meets its guaranteed minimum.
pub fn eligible(request: &Request, profile: &VspProfile) -> bool {
    request.participating() && request.demand() > 0 && request.rate() >= profile.min_rate()
}

/// Grants every eligible request in full. Used when capacity covers total demand.
pub fn direct_assignment(frame: &FrameState, eligibility: &[bool], coefficients: &[f64]) -> Result<AuctionOutcome> {
    let requests = frame.requests();
    check_len("direct_assignment.eligibility", requests.len(), eligibility.len())?;
    check_len("direct_assignment.coefficients", requests.len(), coefficients.len())?;
    let winners: Vec<bool> = requests
        .iter()
        .zip(eligibility)
        .map(|(r, &e)| e && r.participating() && r.demand() > 0)
        .collect();
    let weighted = weighted_bids(requests, coefficients);
    AuctionOutcome::new(
        requests,
        frame.block_count(),
        winners,
        coefficients.to_vec(),
        weighted,
        vec![0.0; requests.len()],
        false,
    )
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

fn weighted_bids(requests: &[Request], coefficients: &[f64]) -> Vec<f64> {
    requests.iter().zip(coefficients).map(|(r, c)| c * r.bid()).collect()
}

/// A winner-determination instance: one item per bidder.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    weighted_bids: Vec<f64>,
    demands: Vec<u32>,
    eligible: Vec<bool>,
    priorities: Vec<u32>,
    capacity: u32,
}

impl Instance {
    pub fn new(
        weighted_bids: Vec<f64>,
        demands: Vec<u32>,
        eligible: Vec<bool>,
        priorities: Vec<u32>,
        capacity: u32,
    ) -> Result<Self> {
        let n = weighted_bids.len();
        check_len("instance.demands", n, demands.len())?;
        check_len("instance.eligible", n, eligible.len())?;
        check_len("instance.priorities", n, priorities.len())?;
        if weighted_bids.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("instance.weighted_bids", "must be finite and >= 0"));
        }
        Ok(Self {
            weighted_bids,
            demands,
            eligible,
            priorities,
            capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.weighted_bids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weighted_bids.is_empty()
    }
    pub fn capacity(&self) -> u32 {
        self.capacity
    }
    pub fn weighted_bids(&self) -> &[f64] {
        &self.weighted_bids
    }
    pub fn demands(&self) -> &[u32] {
        &self.demands
    }
    pub fn eligibility(&self) -> &[bool] {
        &self.eligible
    }
    pub fn priorities(&self) -> &[u32] {
        &self.priorities
    }

    /// Copy of this instance with item `i` barred from winning.
    pub fn without(&self, i: usize) -> Self {
        let mut other = self.clone();
        other.eligible[i] = false;
        other
    }

    /// Same instance at a different block budget.
    pub fn with_capacity(&self, capacity: u32) -> Self {
        let mut other = self.clone();
        other.capacity = capacity;
        other
    }

    /// Items that can win, in tie-break rank order.
    fn ranked_candidates(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.eligible[i] && self.demands[i] <= self.capacity)
            .collect();
        idx.sort_by_key(|&i| (self.priorities[i], i));
        idx
    }

    /// Sum of weighted bids of the chosen items, accumulated in index order.
    pub fn objective(&self, winners: &[bool]) -> f64 {
        self.weighted_bids
            .iter()
            .zip(winners)
            .filter(|(_, &w)| w)
            .fold(0.0, |acc, (wb, _)| acc + wb)
    }

    pub fn blocks_used(&self, winners: &[bool]) -> u32 {
        self.demands
            .iter()
            .zip(winners)
            .filter(|(_, &w)| w)
            .map(|(d, _)| *d)
            .sum()
    }

    /// Suffix table: `table[k][c]` is the best value using ranked items `k..`
    /// with `c` blocks left.
    fn suffix_table(&self, ranked: &[usize]) -> Vec<Vec<f64>> {
        let cap = self.capacity as usize;
        let mut table = vec![vec![0.0f64; cap + 1]; ranked.len() + 1];
        for k in (0..ranked.len()).rev() {
            let item = ranked[k];
            let need = self.demands[item] as usize;
            let wb = self.weighted_bids[item];
            for c in 0..=cap {
                let skip = table[k + 1][c];
                table[k][c] = if need <= c {
                    skip.max(wb + table[k + 1][c - need])
                } else {
                    skip
                };
            }
        }
        table
    }

    fn optimum_value(&self) -> f64 {
        let ranked = self.ranked_candidates();
        self.suffix_table(&ranked)[0][self.capacity as usize]
    }
}

/// Exact winner determination by dynamic programming over block capacity.
pub fn determine_winners(instance: &Instance) -> Vec<bool> {
    let ranked = instance.ranked_candidates();
    let table = instance.suffix_table(&ranked);
    let mut winners = vec![false; instance.len()];
    let mut cap = instance.capacity as usize;
    for (k, &item) in ranked.iter().enumerate() {
        let need = instance.demands[item] as usize;
        if need > cap {
            continue;
        }
        let take = instance.weighted_bids[item] + table[k + 1][cap - need];
        let best = table[k][cap];
        if take >= best - tol(best) {
            winners[item] = true;
            cap -= need;
        }
    }
    winners
}

/// Exhaustive enumeration of every feasible winner set. Test oracle for
/// [`determine_winners`]; refuses more than [`BRUTE_FORCE_LIMIT`] candidates.
pub fn brute_force_winners(instance: &Instance) -> Result<Vec<bool>> {
    let ranked = instance.ranked_candidates();
    let k = ranked.len();
    if k > BRUTE_FORCE_LIMIT {
        return Err(Error::OracleTooLarge(k, BRUTE_FORCE_LIMIT));
    }
    // Bit (k-1-j) of a mask selects ranked[j], so larger masks are lexicographically
    // greater in rank order.
    let decode = |mask: u32| -> Vec<bool> {
        let mut w = vec![false; instance.len()];
        for (j, &item) in ranked.iter().enumerate() {
            if mask >> (k - 1 - j) & 1 == 1 {
                w[item] = true;
            }
        }
        w
    };
    let mut feasible = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for mask in 0..(1u32 << k) {
        let w = decode(mask);
        if instance.blocks_used(&w) > instance.capacity {
            continue;
        }
        let obj = instance.objective(&w);
        best = best.max(obj);
        feasible.push((mask, obj));
    }
    let chosen = feasible
        .iter()
        .filter(|(_, obj)| *obj >= best - tol(best))
        .map(|(mask, _)| *mask)
        .max()
        .unwrap_or(0);
    Ok(decode(chosen))
}

/// Clarke pivot payment per bidder: `W(-i) - (W* - wb_i)` for winners, zero
/// for losers. Results are clipped into `[0, wb_i]` to absorb float rounding.
pub fn clarke_payments(instance: &Instance, winners: &[bool]) -> Vec<f64> {
    (0..instance.len())
        .map(|i| {
            if !winners[i] {
                return 0.0;
            }
            let raw = clarke_externality(instance, winners, i);
            raw.clamp(0.0, instance.weighted_bids[i])
        })
        .collect()
}

/// Unclipped externality `W(-i) - sum_{j in S*, j != i} wb_j` of winner `i`.
pub fn clarke_externality(instance: &Instance, winners: &[bool], i: usize) -> f64 {
    let without = instance.without(i);
    let mut rest = winners.to_vec();
    rest[i] = false;
    without.optimum_value() - instance.objective(&rest)
}

/// Coefficients, eligibility and the full clearing of one frame.
///
/// `agent_scales` holds one non-negative scale per bidder.
pub fn clear_frame(
    profiles: &[VspProfile],
    frame: &FrameState,
    params: &CoefficientParams,
    agent_scales: &[f64],
) -> Result<AuctionOutcome> {
    let requests = frame.requests();
    check_len("clear_frame.profiles", requests.len(), profiles.len())?;
    check_len("clear_frame.scales", requests.len(), agent_scales.len())?;
    let coefficients: Vec<f64> = profiles
        .iter()
        .zip(requests)
        .zip(agent_scales)
        .map(|((p, r), &s)| compute_coefficient(p, r, params, s))
        .collect();
    let eligibility: Vec<bool> = profiles.iter().zip(requests).map(|(p, r)| eligible(r, p)).collect();
    if !auction_triggered(requests, frame.available_bandwidth(), frame.block_bandwidth()) {
        return direct_assignment(frame, &eligibility, &coefficients);
    }
    let instance = Instance::new(
        weighted_bids(requests, &coefficients),
        requests.iter().map(Request::demand).collect(),
        eligibility,
        profiles.iter().map(VspProfile::qci_priority).collect(),
        frame.block_count(),
    )?;
    let winners = determine_winners(&instance);
    let payments = clarke_payments(&instance, &winners);
    AuctionOutcome::new(
        requests,
        frame.block_count(),
        winners,
        coefficients,
        instance.weighted_bids,
        payments,
        true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::default_profiles;
    use proptest::prelude::*;

    fn three_items(capacity: u32) -> Instance {
        Instance::new(
            vec![10.0, 12.0, 21.0],
            vec![3, 4, 5],
            vec![true; 3],
            vec![1, 1, 1],
            capacity,
        )
        .unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let params = CoefficientParams::default();
        let q1 = VspProfile::new(1, 1, 10.0, 100.0).unwrap();
        let q2 = VspProfile::new(2, 2, 10.0, 100.0).unwrap();
        let full = Request::new(1, 10.0, 10.0, 2, 50.0).unwrap();
        let half = Request::new(2, 5.0, 10.0, 2, 50.0).unwrap();
        assert_eq!(compute_coefficient(&q1, &Request::absent(1), &params, 3.0), 0.0);
        assert_eq!(compute_coefficient(&q1, &full, &params, 1.0), 2.0);
        assert_eq!(compute_coefficient(&q2, &half, &params, 2.0), 2.0);
        assert!(CoefficientParams::new(0.0, 0.0).is_err());
        assert!(CoefficientParams::new(-1.0, 2.0).is_err());
    }

    #[test]
    fn trigger_examples() {
        let mk = |demands: &[u32]| -> Vec<Request> {
            demands
                .iter()
                .enumerate()
                .map(|(i, &d)| Request::new(i + 1, 1.0, 2.0, d, 100.0).unwrap())
                .collect()
        };
        assert!(auction_triggered(&mk(&[20, 20, 30]), 300e6, 5e6));
        assert!(!auction_triggered(&mk(&[0, 0]), 300e6, 5e6));
        assert!(!auction_triggered(&[], 300e6, 5e6));
        assert!(!auction_triggered(&mk(&[30, 30]), 300e6, 5e6));
    }

    #[test]
    fn eligibility_examples() {
        let p = &default_profiles()[0];
        assert!(eligible(&Request::new(1, 1.0, 2.0, 3, 100.0).unwrap(), p));
        assert!(!eligible(&Request::new(1, 1.0, 2.0, 3, 50.0).unwrap(), p));
        assert!(!eligible(&Request::absent(1), p));
        assert!(!eligible(&Request::new(1, 1.0, 2.0, 0, 100.0).unwrap(), p));
    }

    #[test]
    fn direct_assignment_examples() {
        let reqs = vec![
            Request::new(1, 1.0, 2.0, 10, 100.0).unwrap(),
            Request::new(2, 1.0, 2.0, 10, 100.0).unwrap(),
        ];
        let frame = FrameState::new(0, 300e6, 5e6, 300e6, reqs).unwrap();
        let out = direct_assignment(&frame, &[true, true], &[1.0, 1.0]).unwrap();
        assert_eq!(out.winners(), &[true, true]);
        assert_eq!(out.total_blocks_used(), 20);
        assert!(!out.triggered());
        assert_eq!(out.payments(), &[0.0, 0.0]);

        let frame = FrameState::new(0, 300e6, 5e6, 300e6, vec![Request::absent(1)]).unwrap();
        let out = direct_assignment(&frame, &[false], &[0.0]).unwrap();
        assert_eq!(out.winners(), &[false]);

        let frame = FrameState::new(
            0,
            300e6,
            5e6,
            300e6,
            vec![Request::new(1, 1.0, 2.0, 60, 500.0).unwrap()],
        )
        .unwrap();
        let out = direct_assignment(&frame, &[true], &[1.0]).unwrap();
        assert_eq!(out.winners(), &[true]);
        assert_eq!(out.total_blocks_used(), 60);
    }

    #[test]
    fn knapsack_examples() {
        let inst = three_items(7);
        let w = determine_winners(&inst);
        assert_eq!(w, vec![true, true, false]);
        assert_eq!(inst.objective(&w), 22.0);
        assert_eq!(brute_force_winners(&inst).unwrap(), w);

        let none = Instance::new(vec![5.0; 3], vec![1; 3], vec![false; 3], vec![1; 3], 10).unwrap();
        assert_eq!(determine_winners(&none), vec![false; 3]);

        let single = Instance::new(vec![5.0], vec![7], vec![true], vec![1], 7).unwrap();
        assert_eq!(determine_winners(&single), vec![true]);

        let empty = Instance::new(vec![], vec![], vec![], vec![], 7).unwrap();
        assert!(determine_winners(&empty).is_empty());
        assert!(brute_force_winners(&empty).unwrap().is_empty());

        assert_eq!(brute_force_winners(&three_items(0)).unwrap(), vec![false; 3]);
        assert_eq!(determine_winners(&three_items(0)), vec![false; 3]);
    }

    #[test]
    fn tie_break_prefers_priority_then_index() {
        // Two single-item optima of equal value; only one fits.
        let inst = Instance::new(vec![5.0, 5.0], vec![4, 4], vec![true; 2], vec![3, 1], 5).unwrap();
        assert_eq!(determine_winners(&inst), vec![false, true]);
        assert_eq!(brute_force_winners(&inst).unwrap(), vec![false, true]);
        let inst = Instance::new(vec![5.0, 5.0], vec![4, 4], vec![true; 2], vec![2, 2], 5).unwrap();
        assert_eq!(determine_winners(&inst), vec![true, false]);
        assert_eq!(brute_force_winners(&inst).unwrap(), vec![true, false]);
    }

    #[test]
    fn brute_force_guard() {
        let n = BRUTE_FORCE_LIMIT + 1;
        let inst = Instance::new(vec![1.0; n], vec![1; n], vec![true; n], vec![1; n], 100).unwrap();
        assert_eq!(
            brute_force_winners(&inst),
            Err(Error::OracleTooLarge(n, BRUTE_FORCE_LIMIT))
        );
    }

    #[test]
    fn clarke_examples() {
        let inst = three_items(7);
        let w = determine_winners(&inst);
        let p = clarke_payments(&inst, &w);
        assert_eq!(p, vec![9.0, 11.0, 0.0]);

        let solo = Instance::new(vec![8.0], vec![3], vec![true], vec![1], 7).unwrap();
        let w = determine_winners(&solo);
        assert_eq!(clarke_payments(&solo, &w), vec![0.0]);
    }

    #[test]
    fn clear_frame_runs_auction_when_oversubscribed() {
        let profiles = default_profiles();
        let reqs: Vec<Request> = (0..5)
            .map(|i| Request::new(i + 1, 50.0, 60.0, 14, 465.08).unwrap())
            .collect();
        let frame = FrameState::new(0, 300e6, 5e6, 300e6, reqs).unwrap();
        let out = clear_frame(&profiles, &frame, &CoefficientParams::default(), &[1.0; 5]).unwrap();
        assert!(out.triggered());
        assert_eq!(out.total_blocks_used(), 56);
        // Bidders 2 and 4 have the lowest priority weight and one of them must lose.
        assert!(out.won(0) && out.won(2) && out.won(4));
        assert_eq!(out.winners().iter().filter(|&&w| w).count(), 4);
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        (1usize..=10).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.0f64..100.0, n),
                proptest::collection::vec(1u32..=20, n),
                proptest::collection::vec(proptest::bool::weighted(0.85), n),
                proptest::collection::vec(1u32..=4, n),
                0u32..=60,
            )
                .prop_map(|(w, d, e, p, c)| Instance::new(w, d, e, p, c).unwrap())
        })
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(inst in arb_instance()) {
            let dp = determine_winners(&inst);
            let bf = brute_force_winners(&inst).unwrap();
            prop_assert_eq!(inst.objective(&dp), inst.objective(&bf));
            prop_assert_eq!(&dp, &bf);
            prop_assert!(inst.blocks_used(&dp) <= inst.capacity());
        }

        #[test]
        fn payments_individually_rational(inst in arb_instance()) {
            let w = determine_winners(&inst);
            let p = clarke_payments(&inst, &w);
            for i in 0..inst.len() {
                if w[i] {
                    let raw = clarke_externality(&inst, &w, i);
                    prop_assert!(raw >= -1e-9 && raw <= inst.weighted_bids()[i] + 1e-9);
                    prop_assert!(p[i] >= 0.0 && p[i] <= inst.weighted_bids()[i]);
                } else {
                    prop_assert_eq!(p[i], 0.0);
                }
            }
        }

        #[test]
        fn optimum_monotone_in_capacity(inst in arb_instance(), extra in 0u32..30) {
            let bigger = inst.with_capacity(inst.capacity() + extra);
            let a = inst.objective(&determine_winners(&inst));
            let b = bigger.objective(&determine_winners(&bigger));
            prop_assert!(b >= a - 1e-9);
        }

        #[test]
        fn raising_a_winning_bid_keeps_it_winning(inst in arb_instance(), k in 1.0001f64..10.0, pick in 0usize..10) {
            let w = determine_winners(&inst);
            let i = pick % inst.len();
            if w[i] {
                let mut bids = inst.weighted_bids().to_vec();
                bids[i] *= k;
                let raised = Instance::new(
                    bids,
                    inst.demands().to_vec(),
                    inst.eligibility().to_vec(),
                    inst.priorities().to_vec(),
                    inst.capacity(),
                ).unwrap();
                prop_assert!(determine_winners(&raised)[i]);
            }
        }

        #[test]
        fn coefficient_non_negative(scale in 0.0f64..10.0, theta in 0.0f64..=1.0, q in 1u32..=9, part in proptest::bool::ANY) {
            let profile = VspProfile::new(1, q, 1.0, 10.0).unwrap();
            let req = if part {
                Request::new(1, theta * 10.0, 10.0, 2, 5.0).unwrap()
            } else {
                Request::absent(1)
            };
            let c = compute_coefficient(&profile, &req, &CoefficientParams::default(), scale);
            prop_assert!(c >= 0.0);
            if !part { prop_assert_eq!(c, 0.0); }
        }
    }
}
