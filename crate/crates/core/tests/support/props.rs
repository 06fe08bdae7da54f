//! Randomized checks shared by the property tests and the acceptance run.
//! Each `check_*` runs [`CASES`] generated instances.

use std::ops::RangeInclusive;

use proptest::prelude::*;
use proptest::sample::subsequence;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use vmrank_core::ranking::{competition_rank, Direction};
use vmrank_core::{default_taxonomy, pearson_percent, RankTable, Ranker, WeightVector};

use super::{dataset, oracle, vm_name};

pub const CASES: u32 = 1000;

const KEYS: [&str; 12] = [
    "l1_cache_latency_ns",
    "main_mem_latency_ns",
    "fork_latency_us",
    "pipe_bw_mbps",
    "mem_read_bw_mbps",
    "tcp_local_bw_mbps",
    "float_div_latency_ns",
    "int_mul_latency_ns",
    "double_add_latency_ns",
    "file_create_0k_us",
    "file_read_bw_mbps",
    "mmap_latency_us",
];

#[derive(Debug, Clone)]
pub struct Instance {
    pub keys: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
    pub weights: [f64; 4],
}

impl Instance {
    pub fn weight_vector(&self) -> WeightVector {
        WeightVector::new(self.weights).unwrap()
    }
}

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![
        3 => 0.01f64..1.0e4,
        1 => (1u8..4).prop_map(f64::from),
    ]
}

fn weight() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.0f64..=5.0, (0u8..=5).prop_map(f64::from),]
}

/// Random fleets; about half of them repeat the first VM's row in the
/// second, which forces exact score ties.
pub fn instance(
    m: RangeInclusive<usize>,
    n: RangeInclusive<usize>,
) -> impl Strategy<Value = Instance> {
    (
        subsequence(KEYS.to_vec(), n),
        m,
        [weight(), weight(), weight(), weight()],
        any::<bool>(),
    )
        .prop_flat_map(|(keys, m, w, dup)| {
            let n = keys.len();
            (
                Just(keys),
                prop::collection::vec(prop::collection::vec(value(), n), m),
                Just(w),
                Just(dup),
            )
        })
        .prop_map(|(keys, mut rows, weights, dup)| {
            if dup && rows.len() > 2 {
                rows[1] = rows[0].clone();
            }
            Instance {
                keys,
                rows,
                weights,
            }
        })
}

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        max_global_rejects: 50_000,
        ..Config::default()
    })
}

fn run<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

fn ranker() -> Ranker {
    Ranker::new(default_taxonomy())
}

/// Ranks in VM index order.
fn ranks_by_vm(table: &RankTable, m: usize) -> Vec<u32> {
    (0..m)
        .map(|i| table.rank_of(&vm_name(i)).unwrap())
        .collect()
}

fn scores_by_vm(table: &RankTable, m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            table
                .entries
                .iter()
                .find(|e| e.vm_id == vm_name(i))
                .and_then(|e| e.value)
                .unwrap()
        })
        .collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Every non-constant z column has mean 0 and population σ 1.
pub fn check_moments() -> Result<(), String> {
    run(instance(2..=10, 1..=8), |inst| {
        let nm = ranker()
            .normalize(&dataset("d", &inst.keys, &inst.rows))
            .unwrap();
        for (col, c) in nm.columns.iter().enumerate() {
            let a = inst
                .keys
                .iter()
                .position(|k| *k == c.stats.attribute_key)
                .unwrap();
            let raw: Vec<f64> = inst.rows.iter().map(|r| r[a]).collect();
            let z: Vec<f64> = nm.column(col).collect();
            let m = z.len() as f64;
            if raw.iter().all(|v| *v == raw[0]) {
                prop_assert!(z.iter().all(|v| *v == 0.0));
                continue;
            }
            let mean = z.iter().sum::<f64>() / m;
            let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt();
            prop_assert!(mean.abs() <= 1e-9, "mean {mean}");
            prop_assert!((sd - 1.0).abs() <= 1e-9, "stddev {sd}");
        }
        Ok(())
    })
}

/// Positive affine rescaling of any attribute leaves ranks unchanged.
pub fn check_affine_invariance() -> Result<(), String> {
    let strat = instance(2..=8, 1..=6).prop_flat_map(|inst| {
        let n = inst.keys.len();
        (
            Just(inst),
            prop::collection::vec((0.1f64..10.0, -1.0e3f64..1.0e3), n),
        )
    });
    run(strat, |(inst, maps)| {
        let w = inst.weight_vector();
        let m = inst.rows.len();
        let moved: Vec<Vec<f64>> = inst
            .rows
            .iter()
            .map(|r| r.iter().zip(&maps).map(|(x, (a, b))| a * x + b).collect())
            .collect();
        let before = ranker()
            .lightweight_rank(&dataset("a", &inst.keys, &inst.rows), &w)
            .unwrap();
        let after = ranker()
            .lightweight_rank(&dataset("b", &inst.keys, &moved), &w)
            .unwrap();
        let (sb, sa) = (scores_by_vm(&before, m), scores_by_vm(&after, m));
        prop_assume!(oracle::well_separated(&sb, 1e-9) && oracle::well_separated(&sa, 1e-9));
        for (x, y) in sb.iter().zip(&sa) {
            prop_assert!(close(*x, *y, 1e-9), "{x} vs {y}");
        }
        prop_assert_eq!(ranks_by_vm(&before, m), ranks_by_vm(&after, m));
        Ok(())
    })
}

/// With W_k = 0, any change to group k's attributes leaves scores and ranks
/// unchanged.
pub fn check_zero_weight_group() -> Result<(), String> {
    let strat = (instance(2..=8, 1..=8), 0usize..4).prop_flat_map(|(inst, g)| {
        let (m, n) = (inst.rows.len(), inst.keys.len());
        (
            Just(inst),
            Just(g),
            prop::collection::vec(prop::collection::vec(value(), n), m),
        )
    });
    run(strat, |(mut inst, g, fresh)| {
        inst.weights[g] = 0.0;
        let w = inst.weight_vector();
        let m = inst.rows.len();
        let tax = default_taxonomy();
        let mut changed = inst.rows.clone();
        for (a, key) in inst.keys.iter().enumerate() {
            if tax.get(key).unwrap().group.index() == g {
                for (row, src) in changed.iter_mut().zip(&fresh) {
                    row[a] = src[a];
                }
            }
        }
        let r = ranker();
        let before = r
            .lightweight_rank(&dataset("a", &inst.keys, &inst.rows), &w)
            .unwrap();
        let after = r
            .lightweight_rank(&dataset("b", &inst.keys, &changed), &w)
            .unwrap();
        prop_assert_eq!(scores_by_vm(&before, m), scores_by_vm(&after, m));
        prop_assert_eq!(ranks_by_vm(&before, m), ranks_by_vm(&after, m));
        Ok(())
    })
}

/// Hybrid ranking of a dataset against itself equals its lightweight
/// ranking, with doubled scores.
pub fn check_hybrid_self() -> Result<(), String> {
    run(instance(2..=10, 1..=8), |inst| {
        let w = inst.weight_vector();
        let m = inst.rows.len();
        let b = dataset("b", &inst.keys, &inst.rows);
        let r = ranker();
        let light = r.lightweight_rank(&b, &w).unwrap();
        let hybrid = r.hybrid_rank(&b, &b, &w).unwrap();
        prop_assert_eq!(ranks_by_vm(&light, m), ranks_by_vm(&hybrid, m));
        for (l, h) in scores_by_vm(&light, m).iter().zip(scores_by_vm(&hybrid, m)) {
            prop_assert_eq!(2.0 * l, h);
        }
        Ok(())
    })
}

/// Ranks lie in [1, m], start at 1, and a tie group of size g at rank r is
/// followed by rank r + g.
pub fn check_rank_law() -> Result<(), String> {
    let values = prop::collection::vec(
        prop_oneof![(0u8..6).prop_map(f64::from), -1.0e3f64..1.0e3],
        1..=30,
    );
    run((values, any::<bool>()), |(values, higher)| {
        let dir = if higher {
            Direction::HigherFirst
        } else {
            Direction::LowerFirst
        };
        let ranks = competition_rank(&values, dir, None).unwrap();
        let m = values.len() as u32;
        prop_assert!(ranks.iter().all(|r| (1..=m).contains(r)));
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted[0], 1);
        let mut i = 0;
        while i < sorted.len() {
            let r = sorted[i];
            let g = sorted[i..].iter().take_while(|x| **x == r).count();
            if i + g < sorted.len() {
                prop_assert_eq!(sorted[i + g], r + g as u32);
            }
            i += g;
        }
        let expected = if higher {
            oracle::ranks_higher_first(&values)
        } else {
            oracle::ranks_lower_first(&values)
        };
        prop_assert_eq!(ranks, expected);
        Ok(())
    })
}

fn rank_vector(len: RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((1u32..=12).prop_map(f64::from), len)
        .prop_filter("constant", |v| v.iter().any(|x| *x != v[0]))
}

/// Symmetric, bounded, and invariant under shifting or positively scaling
/// either vector.
pub fn check_correlation_laws() -> Result<(), String> {
    let strat = (2usize..=12).prop_flat_map(|m| {
        (
            rank_vector(m..=m),
            rank_vector(m..=m),
            -50.0f64..50.0,
            0.1f64..10.0,
        )
    });
    run(strat, |(a, b, shift, scale)| {
        let ab = pearson_percent(&a, &b).unwrap();
        let ba = pearson_percent(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!((-100.0..=100.0).contains(&ab));
        let moved: Vec<f64> = a.iter().map(|x| x * scale + shift).collect();
        prop_assert!((pearson_percent(&moved, &b).unwrap() - ab).abs() <= 1e-9);
        prop_assert!((pearson_percent(&b, &moved).unwrap() - ab).abs() <= 1e-9);
        Ok(())
    })
}

/// A tie-free ranking against its reverse gives −100.
pub fn check_reversal() -> Result<(), String> {
    let strat = (2usize..=20)
        .prop_flat_map(|m| Just((1..=m).map(|r| r as f64).collect::<Vec<_>>()).prop_shuffle());
    run(strat, |a| {
        let m = a.len() as f64;
        let reversed: Vec<f64> = a.iter().map(|r| m + 1.0 - r).collect();
        prop_assert!((pearson_percent(&a, &reversed).unwrap() + 100.0).abs() <= 1e-9);
        Ok(())
    })
}

/// Lightweight and hybrid rankings on small instances (m ≤ 4, n ≤ 4) match
/// the brute-force oracle, and Pearson matches the textbook formula for
/// vectors of length ≤ 6.
pub fn check_oracle_equivalence() -> Result<(), String> {
    let strat = instance(2..=4, 1..=4).prop_flat_map(|inst| {
        let (m, n) = (inst.rows.len(), inst.keys.len());
        (
            Just(inst),
            prop::collection::vec(prop::collection::vec(value(), n), m),
            (2usize..=6).prop_flat_map(|len| (rank_vector(len..=len), rank_vector(len..=len))),
        )
    });
    run(strat, |(inst, historic, (pa, pb))| {
        let w = inst.weight_vector();
        let m = inst.rows.len();
        let r = ranker();
        let cur = dataset("c", &inst.keys, &inst.rows);
        let hist = dataset("h", &inst.keys, &historic);

        let light = r.lightweight_rank(&cur, &w).unwrap();
        let want = oracle::scores(&inst.keys, &inst.rows, inst.weights);
        let got = scores_by_vm(&light, m);
        for (g, e) in got.iter().zip(&want) {
            prop_assert!(close(*g, *e, 1e-9), "score {g} vs oracle {e}");
        }

        let hybrid = r.hybrid_rank(&cur, &hist, &w).unwrap();
        let want_h: Vec<f64> = oracle::scores(&inst.keys, &historic, inst.weights)
            .iter()
            .zip(&want)
            .map(|(h, c)| c + h)
            .collect();
        let got_h = scores_by_vm(&hybrid, m);
        for (g, e) in got_h.iter().zip(&want_h) {
            prop_assert!(close(*g, *e, 1e-9), "hybrid score {g} vs oracle {e}");
        }

        let p = pearson_percent(&pa, &pb).unwrap();
        prop_assert!((p - oracle::pearson(&pa, &pb)).abs() <= 1e-9);

        prop_assume!(
            oracle::well_separated(&want, 1e-9)
                && oracle::well_separated(&got, 1e-9)
                && oracle::well_separated(&want_h, 1e-9)
                && oracle::well_separated(&got_h, 1e-9)
        );
        prop_assert_eq!(ranks_by_vm(&light, m), oracle::ranks_higher_first(&want));
        prop_assert_eq!(ranks_by_vm(&hybrid, m), oracle::ranks_higher_first(&want_h));
        Ok(())
    })
}

/// Every check with its name, in reporting order.
pub type Check = fn() -> Result<(), String>;

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("normalization moments", check_moments),
        ("affine invariance of ranks", check_affine_invariance),
        ("zero-weight group insensitivity", check_zero_weight_group),
        ("hybrid(B,B) equals lightweight(B)", check_hybrid_self),
        ("rank bounds and tie-gap law", check_rank_law),
        (
            "correlation symmetry, bounds, shift/scale",
            check_correlation_laws,
        ),
        ("correlation reversal", check_reversal),
        ("oracle equivalence (m<=4, n<=4)", check_oracle_equivalence),
    ]
}
