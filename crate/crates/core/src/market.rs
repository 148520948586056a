//! Seeded generation of small synthetic travel markets plus an exact
//! oracle welfare ceiling over capacity-feasible allocations.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{div_round, Cents, MICRO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Loose,
    Tight,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Loose => write!(f, "loose"),
            Regime::Tight => write!(f, "tight"),
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loose" => Ok(Regime::Loose),
            "tight" => Ok(Regime::Tight),
            other => Err(Error::InvalidConfig(format!("unknown regime: {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotel {
    pub hotel_id: String,
    pub name: String,
    pub stars: u8,
    pub nightly_cost_cents: Cents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Airline {
    pub airline_id: String,
    pub name: String,
    pub base_fare_cents: Cents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traveler {
    pub traveler_id: String,
    pub archetype: String,
    pub budget_cents: Cents,
    pub tau_micro: i64,
    /// Precomputed u_t(beta), keyed by bundle_id; covers every bundle.
    pub utility_cents: BTreeMap<String, Cents>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub bundle_id: String,
    pub display_name: String,
    pub hotel_id: String,
    pub airline_id: String,
    pub nights: u8,
    pub hotel_cost_cents: Cents,
    pub airline_cost_cents: Cents,
    pub extras_cost_cents: Cents,
    pub price_cents: Cents,
    pub commission_micro: i64,
    pub extras: Vec<String>,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub market_id: String,
    pub regime: Regime,
    pub seed: u64,
    pub hotels: Vec<Hotel>,
    pub airlines: Vec<Airline>,
    pub travelers: Vec<Traveler>,
    pub bundles: Vec<Bundle>,
}

impl Market {
    pub fn traveler(&self, id: &str) -> Option<&Traveler> {
        self.travelers.iter().find(|t| t.traveler_id == id)
    }

    pub fn bundle(&self, id: &str) -> Option<&Bundle> {
        self.bundles.iter().find(|b| b.bundle_id == id)
    }

    /// u_t(beta) - p(beta) for one traveler/bundle pair.
    pub fn surplus_cents(&self, traveler: &Traveler, bundle: &Bundle) -> Cents {
        traveler.utility_cents[&bundle.bundle_id] - bundle.price_cents
    }

    /// True when some (traveler, bundle) baseline surplus falls in the
    /// near-threshold window [tau*b + lower*b, tau*b + upper*b].
    pub fn has_near_threshold_pair(&self, lower_micro: i64, upper_micro: i64) -> bool {
        self.travelers.iter().any(|t| {
            self.bundles.iter().any(|b| {
                let s = self.surplus_cents(t, b) as i128 * MICRO as i128;
                let lo = (t.tau_micro + lower_micro) as i128 * t.budget_cents as i128;
                let hi = (t.tau_micro + upper_micro) as i128 * t.budget_cents as i128;
                lo <= s && s <= hi
            })
        })
    }

    pub fn file_name(&self) -> String {
        format!("market_{}_{}.json", self.regime, self.seed)
    }
}

/// traveler_id -> Some(bundle_id) or None (unassigned).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub assignment: BTreeMap<String, Option<String>>,
}

impl Allocation {
    pub fn empty() -> Self {
        Allocation::default()
    }

    pub fn assign(&mut self, traveler_id: &str, bundle_id: &str) {
        self.assignment.insert(traveler_id.to_string(), Some(bundle_id.to_string()));
    }
}

fn validate_allocation(market: &Market, allocation: &Allocation) -> Result<()> {
    let mut used: BTreeMap<&str, u32> = BTreeMap::new();
    for (tid, slot) in &allocation.assignment {
        if market.traveler(tid).is_none() {
            return Err(Error::InvalidAllocation(format!("unknown traveler {tid}")));
        }
        if let Some(bid) = slot {
            let bundle = market
                .bundle(bid)
                .ok_or_else(|| Error::InvalidAllocation(format!("unknown bundle {bid}")))?;
            let count = used.entry(bid.as_str()).or_insert(0);
            *count += 1;
            if *count > bundle.capacity {
                return Err(Error::InvalidAllocation(format!(
                    "bundle {bid} over capacity ({count} > {})",
                    bundle.capacity
                )));
            }
        }
    }
    Ok(())
}

/// Sum over assigned travelers of u_t(alpha(t)) - p(alpha(t)).
pub fn traveler_surplus(market: &Market, allocation: &Allocation) -> Result<Cents> {
    validate_allocation(market, allocation)?;
    let mut total = 0;
    for (tid, slot) in &allocation.assignment {
        if let Some(bid) = slot {
            let traveler = market.traveler(tid).unwrap();
            let bundle = market.bundle(bid).unwrap();
            total += market.surplus_cents(traveler, bundle);
        }
    }
    Ok(total)
}

/// Sum over assigned travelers of r(alpha(t)) * p(alpha(t)).
pub fn platform_revenue(market: &Market, allocation: &Allocation) -> Result<Cents> {
    validate_allocation(market, allocation)?;
    let mut total = 0;
    for (tid, slot) in &allocation.assignment {
        if let Some(bid) = slot {
            let _ = market.traveler(tid).unwrap();
            let bundle = market.bundle(bid).unwrap();
            total += div_round(
                bundle.commission_micro as i128 * bundle.price_cents as i128,
                MICRO as i128,
            ) as Cents;
        }
    }
    Ok(total)
}

/// Maximum achievable traveler surplus over capacity-feasible
/// allocations, with one maximizing allocation. Exact branch-and-bound
/// over traveler -> bundle assignment; the empty allocation is always
/// feasible, so the ceiling is nonnegative.
pub fn oracle_welfare_ceiling(market: &Market) -> (Cents, Allocation) {
    let n = market.travelers.len();
    // positive-surplus options per traveler, best first
    let options: Vec<Vec<(usize, Cents)>> = market
        .travelers
        .iter()
        .map(|t| {
            let mut opts: Vec<(usize, Cents)> = market
                .bundles
                .iter()
                .enumerate()
                .filter_map(|(j, b)| {
                    let s = market.surplus_cents(t, b);
                    (s > 0).then_some((j, s))
                })
                .collect();
            opts.sort_by_key(|&(_, s)| std::cmp::Reverse(s));
            opts
        })
        .collect();
    // optimistic bound: best positive surplus per remaining traveler,
    // capacities ignored
    let mut suffix_bound = vec![0; n + 1];
    for i in (0..n).rev() {
        suffix_bound[i] = suffix_bound[i + 1] + options[i].first().map_or(0, |&(_, s)| s);
    }

    struct Search<'a> {
        market: &'a Market,
        options: &'a [Vec<(usize, Cents)>],
        suffix_bound: &'a [Cents],
        remaining: Vec<u32>,
        chosen: Vec<Option<usize>>,
        best: Cents,
        best_chosen: Vec<Option<usize>>,
    }

    impl Search<'_> {
        fn descend(&mut self, i: usize, acc: Cents) {
            // best = 0 with the empty allocation is always on record, so
            // a branch that cannot strictly improve is safe to cut
            if acc + self.suffix_bound[i] <= self.best {
                return;
            }
            if i == self.market.travelers.len() {
                if acc > self.best {
                    self.best = acc;
                    self.best_chosen = self.chosen.clone();
                }
                return;
            }
            for &(j, s) in &self.options[i] {
                if self.remaining[j] == 0 {
                    continue;
                }
                self.remaining[j] -= 1;
                self.chosen[i] = Some(j);
                self.descend(i + 1, acc + s);
                self.chosen[i] = None;
                self.remaining[j] += 1;
            }
            self.descend(i + 1, acc);
        }
    }

    let mut search = Search {
        market,
        options: &options,
        suffix_bound: &suffix_bound,
        remaining: market.bundles.iter().map(|b| b.capacity).collect(),
        chosen: vec![None; n],
        best: 0,
        best_chosen: vec![None; n],
    };
    search.descend(0, 0);

    let mut allocation = Allocation::empty();
    for (i, slot) in search.best_chosen.iter().enumerate() {
        if let Some(j) = slot {
            allocation.assign(&market.travelers[i].traveler_id, &market.bundles[*j].bundle_id);
        }
    }
    (search.best, allocation)
}

const HOTEL_NAMES: [&str; 6] = [
    "Seaside Getaway",
    "Harbor Lights",
    "Old Town Inn",
    "Summit Lodge",
    "Garden Court",
    "Lakeview Resort",
];

const AIRLINE_NAMES: [&str; 3] = ["Bluebird Air", "Crestline", "Nimbus Airways"];

const EXTRAS_POOL: [&str; 10] = [
    "breakfast",
    "spa",
    "shuttle",
    "museum pass",
    "city tour",
    "late checkout",
    "lounge access",
    "dive trip",
    "guided hike",
    "theater tickets",
];

/// Archetype label and the extras it has affinity for.
const ARCHETYPES: [(&str, [&str; 3]); 5] = [
    ("beach", ["spa", "late checkout", "dive trip"]),
    ("culture", ["museum pass", "city tour", "theater tickets"]),
    ("luxury", ["spa", "lounge access", "late checkout"]),
    ("thrifty", ["breakfast", "shuttle", "city tour"]),
    ("adventure", ["guided hike", "dive trip", "shuttle"]),
];

/// Per-bundle commission rates, micro fraction: {5, 8, 10, 12, 15, 20}%.
const COMMISSION_RATES_MICRO: [i64; 6] = [50_000, 80_000, 100_000, 120_000, 150_000, 200_000];

struct RegimeKnobs {
    nightly_cost: (Cents, Cents),
    base_fare: (Cents, Cents),
    budget: (Cents, Cents),
    tau_micro: (i64, i64),
    extra_cost: (Cents, Cents),
}

// tight halves budget and price dispersion and raises tau draws
fn knobs(regime: Regime) -> RegimeKnobs {
    match regime {
        Regime::Loose => RegimeKnobs {
            nightly_cost: (30_000, 150_000),
            base_fare: (20_000, 90_000),
            budget: (80_000, 400_000),
            tau_micro: (20_000, 180_000),
            extra_cost: (2_000, 15_000),
        },
        Regime::Tight => RegimeKnobs {
            nightly_cost: (60_000, 120_000),
            base_fare: (38_000, 72_000),
            budget: (160_000, 320_000),
            tau_micro: (60_000, 220_000),
            extra_cost: (5_000, 11_500),
        },
    }
}

/// Deterministic seeded market: identical (seed, regime) yields a
/// byte-identical serialized Market.
pub fn generate_small_market(seed: u64, regime: Regime) -> Market {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match regime {
        Regime::Loose => 1,
        Regime::Tight => 2,
    });
    let k = knobs(regime);

    let n_hotels = rng.gen_range(3..=5usize);
    let hotels: Vec<Hotel> = (0..n_hotels)
        .map(|i| Hotel {
            hotel_id: format!("h{}", i + 1),
            name: HOTEL_NAMES[i].to_string(),
            stars: rng.gen_range(2..=5),
            nightly_cost_cents: rng.gen_range(k.nightly_cost.0..=k.nightly_cost.1),
        })
        .collect();

    let n_airlines = rng.gen_range(2..=3usize);
    let airlines: Vec<Airline> = (0..n_airlines)
        .map(|i| Airline {
            airline_id: format!("a{}", i + 1),
            name: AIRLINE_NAMES[i].to_string(),
            base_fare_cents: rng.gen_range(k.base_fare.0..=k.base_fare.1),
        })
        .collect();

    let n_bundles = rng.gen_range(6..=10usize);
    let bundles: Vec<Bundle> = (0..n_bundles)
        .map(|i| {
            let hotel = &hotels[rng.gen_range(0..n_hotels)];
            let airline = &airlines[rng.gen_range(0..n_airlines)];
            let nights = rng.gen_range(2..=5u8);
            let n_extras = rng.gen_range(0..=3usize);
            let mut extras = Vec::new();
            let mut extras_cost = 0;
            while extras.len() < n_extras {
                let e = EXTRAS_POOL[rng.gen_range(0..EXTRAS_POOL.len())].to_string();
                if !extras.contains(&e) {
                    extras.push(e);
                    extras_cost += rng.gen_range(k.extra_cost.0..=k.extra_cost.1);
                }
            }
            let hotel_cost = hotel.nightly_cost_cents * nights as Cents;
            let airline_cost = airline.base_fare_cents;
            Bundle {
                bundle_id: format!("b{}", i + 1),
                display_name: format!("{} x{} via {}", hotel.name, nights, airline.name),
                hotel_id: hotel.hotel_id.clone(),
                airline_id: airline.airline_id.clone(),
                nights,
                hotel_cost_cents: hotel_cost,
                airline_cost_cents: airline_cost,
                extras_cost_cents: extras_cost,
                price_cents: hotel_cost + airline_cost + extras_cost,
                commission_micro: COMMISSION_RATES_MICRO
                    [rng.gen_range(0..COMMISSION_RATES_MICRO.len())],
                extras,
                capacity: rng.gen_range(1..=2),
            }
        })
        .collect();

    let n_travelers = rng.gen_range(3..=6usize);
    let travelers: Vec<Traveler> = (0..n_travelers)
        .map(|i| {
            let (archetype, liked) = ARCHETYPES[rng.gen_range(0..ARCHETYPES.len())];
            let budget = rng.gen_range(k.budget.0..=k.budget.1);
            let tau_micro = rng.gen_range(k.tau_micro.0..=k.tau_micro.1);
            // u = p + b * frac; frac = archetype tilt + seeded noise,
            // clamped to +-0.20 so baseline surplus spans ~[-0.2b, +0.2b]
            let utility_cents: BTreeMap<String, Cents> = bundles
                .iter()
                .map(|b| {
                    let matches =
                        b.extras.iter().filter(|e| liked.contains(&e.as_str())).count() as i64;
                    let tilt = 30_000 * matches - 30_000;
                    let noise = rng.gen_range(-170_000..=150_000i64);
                    let frac = (tilt + noise).clamp(-200_000, 200_000);
                    let u = b.price_cents
                        + div_round(budget as i128 * frac as i128, MICRO as i128) as Cents;
                    (b.bundle_id.clone(), u)
                })
                .collect();
            Traveler {
                traveler_id: format!("t{}", i + 1),
                archetype: archetype.to_string(),
                budget_cents: budget,
                tau_micro,
                utility_cents,
            }
        })
        .collect();

    Market {
        market_id: format!("market_{regime}_{seed}"),
        regime,
        seed,
        hotels,
        airlines,
        travelers,
        bundles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;

    fn tiny_market(surplus: Cents) -> Market {
        let mut utility = BTreeMap::new();
        utility.insert("b1".to_string(), 100_000 + surplus);
        Market {
            market_id: "market_test_0".to_string(),
            regime: Regime::Loose,
            seed: 0,
            hotels: vec![Hotel {
                hotel_id: "h1".to_string(),
                name: "Seaside Getaway".to_string(),
                stars: 4,
                nightly_cost_cents: 40_000,
            }],
            airlines: vec![Airline {
                airline_id: "a1".to_string(),
                name: "Bluebird Air".to_string(),
                base_fare_cents: 20_000,
            }],
            travelers: vec![Traveler {
                traveler_id: "t1".to_string(),
                archetype: "beach".to_string(),
                budget_cents: 200_000,
                tau_micro: 50_000,
                utility_cents: utility,
            }],
            bundles: vec![Bundle {
                bundle_id: "b1".to_string(),
                display_name: "Seaside Getaway x2 via Bluebird Air".to_string(),
                hotel_id: "h1".to_string(),
                airline_id: "a1".to_string(),
                nights: 2,
                hotel_cost_cents: 80_000,
                airline_cost_cents: 20_000,
                extras_cost_cents: 0,
                price_cents: 100_000,
                commission_micro: 100_000,
                extras: vec![],
                capacity: 1,
            }],
        }
    }

    #[test]
    fn size_bounds_and_referential_integrity() {
        for seed in [42, 0, 7, 999] {
            for regime in [Regime::Loose, Regime::Tight] {
                let m = generate_small_market(seed, regime);
                assert!((3..=5).contains(&m.hotels.len()));
                assert!((2..=3).contains(&m.airlines.len()));
                assert!((3..=6).contains(&m.travelers.len()));
                assert!((6..=10).contains(&m.bundles.len()));
                for b in &m.bundles {
                    assert!(m.hotels.iter().any(|h| h.hotel_id == b.hotel_id));
                    assert!(m.airlines.iter().any(|a| a.airline_id == b.airline_id));
                    assert_eq!(
                        b.hotel_cost_cents + b.airline_cost_cents + b.extras_cost_cents,
                        b.price_cents
                    );
                }
                for t in &m.travelers {
                    assert_eq!(t.utility_cents.len(), m.bundles.len());
                    assert!(t.budget_cents > 0);
                    assert!(t.tau_micro > 0 && t.tau_micro < MICRO);
                }
            }
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = serde_json::to_vec(&generate_small_market(42, Regime::Loose)).unwrap();
        let b = serde_json::to_vec(&generate_small_market(42, Regime::Loose)).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_vec(&generate_small_market(42, Regime::Tight)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tight_regime_narrows_budget_spread() {
        // compare budget dispersion across 100 seeds per regime
        let spread = |regime| {
            let mut lo = Cents::MAX;
            let mut hi = Cents::MIN;
            for seed in 0..100u64 {
                for t in generate_small_market(seed, regime).travelers {
                    lo = lo.min(t.budget_cents);
                    hi = hi.max(t.budget_cents);
                }
            }
            hi - lo
        };
        assert!(spread(Regime::Tight) < spread(Regime::Loose) / 15 * 10);
    }

    #[test]
    fn near_threshold_coverage_self_check() {
        // generator contract: >= 60% of seeds place at least one pair in
        // the diagnostic window
        for regime in [Regime::Loose, Regime::Tight] {
            let hits = (0..100u64)
                .filter(|&s| {
                    generate_small_market(s, regime).has_near_threshold_pair(-100_000, 50_000)
                })
                .count();
            assert!(hits >= 60, "regime {regime}: only {hits}/100 seeds in window");
        }
    }

    #[test]
    fn surplus_and_revenue_arithmetic() {
        let m = tiny_market(20_000);
        assert_eq!(traveler_surplus(&m, &Allocation::empty()).unwrap(), 0);
        assert_eq!(platform_revenue(&m, &Allocation::empty()).unwrap(), 0);
        let mut a = Allocation::empty();
        a.assign("t1", "b1");
        assert_eq!(traveler_surplus(&m, &a).unwrap(), 20_000);
        // p = 1000.00, r = 10% -> 100.00
        assert_eq!(platform_revenue(&m, &a).unwrap(), 10_000);
    }

    #[test]
    fn invalid_allocations_rejected() {
        let m = tiny_market(0);
        let mut a = Allocation::empty();
        a.assign("t9", "b1");
        assert!(traveler_surplus(&m, &a).is_err());
        let mut a = Allocation::empty();
        a.assign("t1", "b9");
        assert!(traveler_surplus(&m, &a).is_err());
    }

    #[test]
    fn oracle_trivial_cases() {
        let m = tiny_market(5_000);
        let (ceiling, alloc) = oracle_welfare_ceiling(&m);
        assert_eq!(ceiling, 5_000);
        assert_eq!(alloc.assignment["t1"], Some("b1".to_string()));

        let m = tiny_market(-5_000);
        let (ceiling, alloc) = oracle_welfare_ceiling(&m);
        assert_eq!(ceiling, 0);
        assert!(alloc.assignment.is_empty());
    }

    /// Exhaustive enumeration over all (|B|+1)^|T| assignments; the
    /// independent oracle for the branch-and-bound.
    pub fn brute_force_ceiling(market: &Market) -> Cents {
        let n = market.travelers.len();
        let m = market.bundles.len();
        let mut best = 0;
        let mut choice = vec![0usize; n]; // 0 = none, 1..=m = bundle index + 1
        loop {
            let mut used = vec![0u32; m];
            let mut total = 0;
            let mut feasible = true;
            for (i, &c) in choice.iter().enumerate() {
                if c > 0 {
                    let j = c - 1;
                    used[j] += 1;
                    if used[j] > market.bundles[j].capacity {
                        feasible = false;
                        break;
                    }
                    total +=
                        market.surplus_cents(&market.travelers[i], &market.bundles[j]);
                }
            }
            if feasible && total > best {
                best = total;
            }
            // odometer increment
            let mut i = 0;
            loop {
                if i == n {
                    return best;
                }
                choice[i] += 1;
                if choice[i] <= m {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn oracle_matches_exhaustive_enumeration() {
        for seed in 0..25u64 {
            let m = generate_small_market(seed, Regime::Loose);
            let (ceiling, alloc) = oracle_welfare_ceiling(&m);
            assert_eq!(ceiling, brute_force_ceiling(&m), "seed {seed}");
            assert_eq!(traveler_surplus(&m, &alloc).unwrap(), ceiling);
        }
    }

    #[test]
    fn ceiling_dominates_random_allocations() {
        use rand::SeedableRng;
        let mut rng = StdRng::seed_from_u64(7);
        for seed in 0..10u64 {
            let m = generate_small_market(seed, Regime::Tight);
            let (ceiling, _) = oracle_welfare_ceiling(&m);
            assert!(ceiling >= 0);
            for _ in 0..1000 {
                let mut alloc = Allocation::empty();
                let mut remaining: Vec<u32> = m.bundles.iter().map(|b| b.capacity).collect();
                for t in &m.travelers {
                    let pick = rng.gen_range(0..=m.bundles.len());
                    if pick > 0 && remaining[pick - 1] > 0 {
                        remaining[pick - 1] -= 1;
                        alloc.assign(&t.traveler_id, &m.bundles[pick - 1].bundle_id);
                    }
                }
                assert!(ceiling >= traveler_surplus(&m, &alloc).unwrap());
            }
        }
    }
}
