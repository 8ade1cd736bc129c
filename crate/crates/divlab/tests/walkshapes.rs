use std::collections::BTreeSet;

use divlab::arith::{sieve_primes, PrimeWindow};
use divlab::divgraph::SupportMask;
use divlab::walkshapes::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blocks(v: &[&[usize]]) -> Vec<Vec<usize>> {
    v.iter().map(|b| b.to_vec()).collect()
}

/// The ten-letter example with a cancelling pair of letters in class {4,7}.
fn ten_letter_shape() -> Shape {
    Shape::from_blocks(
        &blocks(&[&[1, 8], &[2, 9], &[3], &[4, 7], &[5, 6, 10]]),
        &[1, -1, 1, -1, 1, -1, 1, 1, 1, -1],
    )
    .unwrap()
}

fn class_of_position(shape: &Shape, pos1: usize) -> usize {
    shape.labels()[pos1 - 1]
}

#[test]
fn shape_of_partitions_by_equal_primes() {
    let s = shape_of(&[11, 13, 11, 17], &[1, 1, -1, -1]).unwrap();
    assert_eq!(s.blocks(), vec![vec![1, 3], vec![2], vec![4]]);
    let s = shape_of(&[7, 7, 7, 7], &[1, -1, 1, -1]).unwrap();
    assert_eq!(s.blocks(), vec![vec![1, 2, 3, 4]]);
    assert!(shape_of(&[7, 7, 7], &[1, 1, 1]).is_err());
    assert!(shape_of(&[7, 7], &[1]).is_err());
}

#[test]
fn shape_of_recovers_ten_letter_classes() {
    // Primes chosen so that equal primes sit exactly at the positions of each class.
    let p = [11, 13, 17, 19, 23, 23, 19, 11, 13, 23];
    let s = shape_of(&p, &[1, -1, 1, -1, 1, -1, 1, 1, 1, -1]).unwrap();
    assert_eq!(s.blocks(), blocks(&[&[1, 8], &[2, 9], &[3], &[4, 7], &[5, 6, 10]]));
    assert_eq!(s, ten_letter_shape());
}

#[test]
fn shape_text_round_trip() {
    let s = ten_letter_shape();
    let text = s.to_string();
    assert_eq!(text, "{1,8} {2,9} {3} {4,7} {5,6,10} +-+-+-+++-");
    assert_eq!(text.parse::<Shape>().unwrap(), s);
    assert!("{1,2} {2} ++".parse::<Shape>().is_err());
    assert!("{1} {2} +x".parse::<Shape>().is_err());
    assert!("{1} +-".parse::<Shape>().is_err());
}

#[test]
fn cancelling_pair_reduces_to_empty() {
    let s = Shape::new(&[0, 0], &[1, -1]).unwrap();
    let r = reduce_shape(&s);
    assert!(r.reduced.is_empty());
    assert_eq!(r.yellow, vec![0]);
    assert!(induced_walk_graph(&s).vertices.is_empty());
}

#[test]
fn reduced_word_is_fixed() {
    let s = Shape::new(&[0, 1, 0, 1], &[1, 1, -1, -1]).unwrap();
    let r = reduce_shape(&s);
    assert_eq!(r.reduced, s);
    assert!(r.yellow.is_empty());
    assert_eq!(r.iota, vec![0, 1, 2, 3]);
}

#[test]
fn ten_letter_reduction() {
    let s = ten_letter_shape();
    let r = reduce_shape(&s);
    assert_eq!(r.reduced_len(), 6);
    assert_eq!(r.yellow, vec![class_of_position(&s, 4)]);
    // w′ = x_[1] x_[2]⁻¹ x_[3] x_[1] x_[2] x_[5]⁻¹ keeps positions 1,2,3,8,9,10.
    assert_eq!(r.iota, vec![0, 1, 2, 7, 8, 9]);
    assert_eq!(r.reduced.signs(), &[1, -1, 1, 1, 1, -1]);
    assert_eq!(r.reduced.blocks(), blocks(&[&[1, 4], &[2, 5], &[3], &[6]]));
}

fn edge(s: &Shape, a: usize, b: usize) -> (usize, usize) {
    let (x, y) = (class_of_position(s, a), class_of_position(s, b));
    (x.min(y), x.max(y))
}

#[test]
fn four_class_walk_graph() {
    let s = Shape::from_blocks(&blocks(&[&[1, 4], &[2, 5], &[3], &[6]]), &[1, -1, 1, 1, 1, -1]).unwrap();
    let g = induced_walk_graph(&s);
    assert_eq!(g.vertices.len(), 4);
    let expected: BTreeSet<_> = [edge(&s, 1, 2), edge(&s, 2, 3), edge(&s, 1, 3), edge(&s, 2, 6)].into();
    assert_eq!(g.edges, expected);
    assert!(g.is_connected());
    assert!(g.vertices.iter().all(|&v| g.in_degree(v) >= 1));
}

#[test]
fn ten_letter_walk_graph_follows_adjacency_rule() {
    let s = ten_letter_shape();
    let g = induced_walk_graph(&s);
    assert_eq!(g.vertices.len(), 4);
    let c18 = edge(&s, 1, 1).0;
    let c3 = class_of_position(&s, 3);
    let c5 = class_of_position(&s, 5);
    // Edges through the yellow class {4,7}.
    assert!(g.edges.contains(&edge(&s, 3, 5)));
    assert!(g.edges.contains(&edge(&s, 6, 8)));
    let expected: BTreeSet<_> =
        [edge(&s, 1, 2), edge(&s, 2, 3), edge(&s, 3, 5), edge(&s, 6, 8), edge(&s, 9, 10)].into();
    assert_eq!(g.edges, expected);
    // Positions of {1,8} and {3} are always separated by a non-yellow class.
    assert!(!g.edges.contains(&(c18.min(c3), c18.max(c3))));
    assert_eq!(g.degree(c5), 3);
    assert!(g.is_connected());
}

#[test]
fn single_class_graph() {
    for signs in [[1, 1], [-1, -1]] {
        let s = Shape::new(&[0, 0], &signs).unwrap();
        let g = induced_walk_graph(&s);
        assert_eq!(g.vertices, vec![0]);
        assert!(g.edges.is_empty());
        assert!(g.arrows.is_empty());
    }
}

fn shape_strategy() -> impl Strategy<Value = Shape> {
    (1usize..=6).prop_flat_map(|k| {
        (proptest::collection::vec(0usize..4, 2 * k), proptest::collection::vec(any::<bool>(), 2 * k)).prop_map(
            |(labels, signs)| {
                let signs: Vec<i8> = signs.iter().map(|b| if *b { 1 } else { -1 }).collect();
                Shape::new(&labels, &signs).unwrap()
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reduction_is_idempotent(s in shape_strategy()) {
        let r = reduce_shape(&s);
        let rr = reduce_shape(&r.reduced);
        prop_assert_eq!(&rr.reduced, &r.reduced);
        prop_assert!(rr.yellow.is_empty());
        prop_assert_eq!(rr.iota, (0..r.reduced.len()).collect::<Vec<_>>());
        for (j, &i) in r.iota.iter().enumerate() {
            prop_assert_eq!(r.reduced.signs()[j], s.signs()[i]);
            prop_assert_eq!(r.class_map[r.reduced.labels()[j]], s.labels()[i]);
        }
    }

    #[test]
    fn vertices_are_reduced_classes(s in shape_strategy()) {
        let r = reduce_shape(&s);
        let g = induced_walk_graph(&s);
        let mut from_reduced = r.class_map.clone();
        from_reduced.sort_unstable();
        prop_assert_eq!(g.vertices.clone(), from_reduced);
        prop_assert!(g.is_connected());
        if g.vertices.len() >= 2 {
            for &v in &g.vertices {
                prop_assert!(g.in_degree(v) >= 1);
            }
        }
    }

    #[test]
    fn yellow_restriction_is_trivial(s in shape_strategy()) {
        let r = reduce_shape(&s);
        let code = dyck_code(&s, &r.yellow).unwrap();
        let yellow_letters = s.labels().iter().filter(|c| r.yellow.contains(c)).count();
        prop_assert_eq!(code.len(), yellow_letters);
    }

    #[test]
    fn shape_display_parses_back(s in shape_strategy()) {
        prop_assert_eq!(s.to_string().parse::<Shape>().unwrap(), s);
    }
}

#[test]
fn dyck_codes() {
    let s = ten_letter_shape();
    let yellow = vec![class_of_position(&s, 4)];
    assert_eq!(dyck_code(&s, &yellow).unwrap(), "()");
    // x x⁻¹ x⁻¹ y⁻¹ y x
    let w = Shape::new(&[0, 0, 0, 1, 1, 0], &[1, -1, -1, -1, 1, 1]).unwrap();
    assert_eq!(dyck_code(&w, &[0, 1]).unwrap(), "()(())");
    let bad = Shape::new(&[0, 1], &[1, 1]).unwrap();
    assert!(dyck_code(&bad, &[0, 1]).is_err());
}

#[test]
fn dyck_codes_of_trivial_words_are_catalan_bounded() {
    for m in 1..=4usize {
        let len = 2 * m;
        let mut codes = BTreeSet::new();
        // Alphabet x, x⁻¹, y, y⁻¹.
        for w in 0..4u32.pow(len as u32) {
            let letters: Vec<(usize, i8)> =
                (0..len).map(|t| (w >> (2 * t)) & 3).map(|d| ((d >> 1) as usize, if d & 1 == 0 { 1 } else { -1 })).collect();
            let labels: Vec<usize> = letters.iter().map(|l| l.0).collect();
            let signs: Vec<i8> = letters.iter().map(|l| l.1).collect();
            let s = Shape::new(&labels, &signs).unwrap();
            if !reduce_shape(&s).reduced.is_empty() {
                continue;
            }
            let all: Vec<usize> = (0..s.class_count()).collect();
            codes.insert(dyck_code(&s, &all).unwrap());
        }
        assert_eq!(codes.len() as u128, catalan(m as u64));
        assert!(catalan(m as u64) < 1u128 << (2 * m));
    }
}

fn pw_11_31() -> PrimeWindow {
    sieve_primes(11, 31).unwrap()
}

#[test]
fn distinct_primes_without_hits() {
    let pw = pw_11_31();
    let c = classify_indices(&[11, 13, 17, 19], &[1, 1, 1, 1], &pw).unwrap();
    assert_eq!(c.lone, (1..=4).collect());
    assert!(c.s.is_empty() && c.s0.is_empty() && c.s1.is_empty());
    assert!(c.recurrence_pairs.is_empty());
}

#[test]
fn alternating_pair_recurrences() {
    let pw = pw_11_31();
    let c = classify_indices(&[11, 13, 11, 13], &[1, 1, -1, -1], &pw).unwrap();
    assert!(c.lone.is_empty());
    assert_eq!(c.recurrence_pairs[0], RecurrencePair { i: 1, i_prime: 3, intervening: vec![2] });
    assert_eq!(c.recurrence_pairs[1], RecurrencePair { i: 2, i_prime: 4, intervening: vec![3] });
    assert!(classify_indices(&[11, 7], &[1, -1], &pw).is_err());
    assert!(classify_indices(&[11; 14], &[1; 14], &pw).is_err());
}

/// Second scan of the index sets, written with explicit step sums.
fn oracle_sets(p: &[u64], s: &[i8]) -> [BTreeSet<usize>; 4] {
    let n = p.len();
    let walk = |a: usize, b: usize| -> i64 {
        // β_a − β_b
        let sum = |upto: usize| (0..upto).map(|t| s[t] as i64 * p[t] as i64).sum::<i64>();
        sum(a) - sum(b)
    };
    let lone: BTreeSet<usize> = (1..=n).filter(|&i| (1..=n).all(|j| j == i || p[j - 1] != p[i - 1])).collect();
    let mut sets = [BTreeSet::new(), BTreeSet::new(), BTreeSet::new(), lone.clone()];
    for &i in &lone {
        let pi = p[i - 1] as i64;
        let between = |j: usize| lone.iter().any(|&x| (i < x && x <= j) || (j < x && x < i));
        for j in 1..=n {
            let div = walk(i, j) % pi == 0;
            if j != i && j != i - 1 {
                let case1 = div && walk(j, i - 1) != 0 && walk(j, i) != 0;
                let case2 = walk(i, j) == 0 && lone.contains(&j);
                if case1 || case2 {
                    sets[0].insert(i);
                }
                let moved = p.iter().any(|&q| {
                    q != p[i - 1]
                        && (0..j).filter(|&t| p[t] == q).map(|t| s[t] as i64).sum::<i64>()
                            != (0..i).filter(|&t| p[t] == q).map(|t| s[t] as i64).sum::<i64>()
                });
                if div && !between(j) && moved {
                    sets[2].insert(i);
                }
            }
            if div && between(j) {
                sets[1].insert(i);
            }
        }
    }
    sets
}

#[test]
fn classification_matches_independent_scan() {
    let pw = pw_11_31();
    let primes = pw.primes().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut nonempty = 0;
    for _ in 0..3000 {
        let p: Vec<u64> = (0..6).map(|_| primes[rng.random_range(0..primes.len())]).collect();
        let s: Vec<i8> = (0..6).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let c = classify_indices(&p, &s, &pw).unwrap();
        let [o_s, o_s0, o_s1, o_l] = oracle_sets(&p, &s);
        assert_eq!(c.lone, o_l);
        assert_eq!(c.s.keys().copied().collect::<BTreeSet<_>>(), o_s);
        assert_eq!(c.s0.keys().copied().collect::<BTreeSet<_>>(), o_s0);
        assert_eq!(c.s1.keys().copied().collect::<BTreeSet<_>>(), o_s1);
        // Every member of 𝐒 lies in 𝐒₀ or 𝐒₁.
        for i in c.s.keys() {
            assert!(c.s0.contains_key(i) || c.s1.contains_key(i), "{p:?} {s:?} index {i}");
        }
        nonempty += usize::from(!c.s.is_empty());
    }
    assert!(nonempty > 0);
}

fn brute_max_chain(p: &[u64], l: &BTreeSet<usize>) -> usize {
    let n = p.len();
    let pairs: Vec<(usize, usize)> = (1..=n)
        .flat_map(|i| (i + 1..=n).map(move |j| (i, j)))
        .filter(|&(i, j)| p[i - 1] == p[j - 1] && (i..=j).any(|t| !l.contains(&t)))
        .collect();
    fn best(pairs: &[(usize, usize)], floor: usize) -> usize {
        pairs.iter().filter(|pr| pr.0 >= floor).map(|pr| 1 + best(pairs, pr.1)).max().unwrap_or(0)
    }
    best(&pairs, 1)
}

#[test]
fn disjoint_recurrences_are_maximal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2000 {
        let n = rng.random_range(2..=10);
        let p: Vec<u64> = (0..n).map(|_| [11u64, 13, 17][rng.random_range(0..3)]).collect();
        let l: BTreeSet<usize> = (1..=n).filter(|_| rng.random_bool(0.6)).collect();
        let chain = max_disjoint_recurrences(&p, &l);
        assert_eq!(chain.len(), brute_max_chain(&p, &l));
        for w in chain.windows(2) {
            assert!(w[0].1 <= w[1].0);
        }
        for &(i, j) in &chain {
            assert!(i < j && p[i - 1] == p[j - 1] && (i..=j).any(|t| !l.contains(&t)));
        }
    }
}

#[test]
fn sieve_graph_without_threads() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = build_sieve_graph(2, 3, &[], &[0, 1, 0, 2]).unwrap();
    assert_eq!(g.cost(), 0);
    assert!(g.is_non_redundant());
    for _ in 0..200 {
        let sigma: Vec<i8> = (0..4).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let primes: Vec<u64> = (0..3).map(|_| [11u64, 13, 17][rng.random_range(0..3)]).collect();
        assert!(g.validate_tuple(&BTreeSet::new(), &sigma, &primes).unwrap().is_valid());
    }
    // With steps 1 and 3 both in l, their shared prime must divide the walk between them.
    let v = g.validate_tuple(&BTreeSet::from([1, 3]), &[1, 1, -1, 1], &[11, 13, 17]).unwrap();
    assert!(!v.divisibility);
    let v = g.validate_tuple(&BTreeSet::from([1, 3]), &[1, 1, -1, 1], &[13, 13, 17]).unwrap();
    assert!(v.is_valid());
    let distinct = build_sieve_graph(2, 3, &[], &[0, 1, 2, 3]).unwrap();
    let v = distinct.validate_tuple(&BTreeSet::from([1, 2, 3, 4]), &[1, -1, 1, 1], &[11, 13, 17, 19]).unwrap();
    assert!(v.is_valid());
}

#[test]
fn closed_thread_with_nonzero_sum_is_invalid() {
    let threads = [ThreadSpec { kind: ThreadKind::Closed, anchor: 1, length: 2 }];
    assert_eq!(sieve_edge_count(1, &threads), 4);
    let g = build_sieve_graph(1, 3, &threads, &[0, 1, 2, 3]).unwrap();
    let v = g.validate_tuple(&BTreeSet::new(), &[1, 1, 1, -1], &[11, 13, 17, 19]).unwrap();
    assert!(!v.sums && !v.is_valid());
    let v = g.validate_tuple(&BTreeSet::new(), &[1, 1, 1, -1], &[11, 13, 17, 17]).unwrap();
    assert!(v.sums);
}

#[test]
fn malformed_sieve_graphs_are_rejected() {
    let open = ThreadSpec { kind: ThreadKind::Open, anchor: 0, length: 3 };
    // Edges: h0 h1 | t0 t1 t2 | w1 w2.
    assert!(build_sieve_graph(1, 3, &[open], &[0, 1, 2, 3, 2, 4, 4]).is_err());
    assert!(build_sieve_graph(1, 3, &[open], &[0, 1, 2, 3, 5, 4, 6]).is_err());
    assert!(build_sieve_graph(1, 3, &[open], &[0, 1, 2, 3, 4, 2, 2]).is_err());
    assert!(build_sieve_graph(1, 2, &[open], &[0, 1, 2, 3, 5, 4, 4]).is_err());
    assert!(build_sieve_graph(1, 3, &[open], &[0, 1, 2]).is_err());
    let far = ThreadSpec { kind: ThreadKind::Open, anchor: 3, length: 1 };
    assert!(build_sieve_graph(1, 3, &[far], &[0, 1, 2, 3, 3]).is_err());
    let g = build_sieve_graph(1, 3, &[open], &[0, 1, 2, 2, 3, 4, 4]).unwrap();
    assert_eq!(g.cost(), 3);
    // A closed cycle whose class wraps around the anchor is still connected.
    let closed = ThreadSpec { kind: ThreadKind::Closed, anchor: 0, length: 4 };
    assert!(build_sieve_graph(1, 4, &[closed], &[0, 1, 2, 3, 3, 2]).is_ok());
    assert!(build_sieve_graph(1, 4, &[closed], &[0, 1, 2, 3, 2, 3]).is_err());
}

#[test]
fn redundancy_and_cost() {
    let t = ThreadSpec { kind: ThreadKind::Open, anchor: 1, length: 1 };
    // Two identical threads sharing every class are redundant.
    let g = build_sieve_graph(1, 2, &[t, t], &[0, 1, 2, 3, 3, 2, 3, 3]).unwrap();
    assert!(!g.is_non_redundant());
    assert_eq!(g.cost(), 2);
    let g = build_sieve_graph(1, 2, &[t, t], &[0, 1, 2, 3, 3, 4, 3, 3]).unwrap();
    assert!(g.is_non_redundant());
    assert_eq!(g.cost(), 3);
}

/// Condition-by-condition check using explicit walks found by search.
fn direct_validity(g: &SieveGraph, l: &BTreeSet<usize>, sigma: &[i8], primes: &[u64]) -> bool {
    let edges = g.edges();
    let w = |e: usize| sigma[e] as i64 * primes[g.classes()[e]] as i64;
    // (ii) closed threads sum to zero, open threads do not.
    for (t, spec) in g.threads().iter().enumerate() {
        let total: i64 = g.thread_edges(t).iter().map(|&e| w(e)).sum();
        if (spec.kind == ThreadKind::Closed) != (total == 0) {
            return false;
        }
    }
    // (iii) adjacent equivalent thread edges carry equal signs.
    for (t, spec) in g.threads().iter().enumerate() {
        let ids = g.thread_edges(t);
        for a in 0..ids.len() {
            let b = a + 1;
            if b == ids.len() && spec.kind == ThreadKind::Open {
                break;
            }
            let (e1, e2) = (ids[a], ids[b % ids.len()]);
            if g.classes()[e1] == g.classes()[e2] && sigma[e1] != sigma[e2] {
                return false;
            }
        }
    }
    // (i) walk sums between equivalent counted edges; with (ii) holding any
    // path between the tails represents every walk.
    let nv = g.vertex_count();
    let path_sum = |from: usize, to: usize| -> i64 {
        let mut prev: Vec<Option<(usize, i64)>> = vec![None; nv];
        let mut seen = vec![false; nv];
        seen[from] = true;
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            for (e, ed) in edges.iter().enumerate() {
                let (u, d) = if ed.tail == v { (ed.head, w(e)) } else if ed.head == v { (ed.tail, -w(e)) } else { continue };
                if !seen[u] {
                    seen[u] = true;
                    prev[u] = Some((v, d));
                    stack.push(u);
                }
            }
        }
        let mut total = 0;
        let mut cur = to;
        while cur != from {
            let (p, d) = prev[cur].unwrap();
            total += d;
            cur = p;
        }
        total
    };
    let counted = |e: usize| edges[e].thread.is_some() || l.contains(&(e + 1));
    for e1 in 0..edges.len() {
        for e2 in 0..edges.len() {
            if e1 != e2 && counted(e1) && counted(e2) && g.classes()[e1] == g.classes()[e2] {
                let p = primes[g.classes()[e1]] as i64;
                if path_sum(edges[e1].tail, edges[e2].tail) % p != 0 {
                    return false;
                }
            }
        }
    }
    true
}

#[test]
fn validity_matches_direct_checker() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let primes = [11u64, 13, 17, 19];
    let (mut built, mut valid) = (0, 0);
    for _ in 0..20000 {
        let k = rng.random_range(1..=2);
        let nt = rng.random_range(0..=2);
        let threads: Vec<ThreadSpec> = (0..nt)
            .map(|_| {
                let closed = rng.random_bool(0.5);
                ThreadSpec {
                    kind: if closed { ThreadKind::Closed } else { ThreadKind::Open },
                    anchor: rng.random_range(0..=2 * k),
                    length: rng.random_range(if closed { 2 } else { 1 }..=3),
                }
            })
            .collect();
        let ne = sieve_edge_count(k, &threads);
        let eq: Vec<usize> = (0..ne).map(|_| rng.random_range(0..4)).collect();
        let Ok(g) = build_sieve_graph(k, 3, &threads, &eq) else { continue };
        built += 1;
        let sigma: Vec<i8> = (0..ne).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let ps: Vec<u64> = (0..g.class_count()).map(|_| primes[rng.random_range(0..4)]).collect();
        let l: BTreeSet<usize> = (1..=2 * k).filter(|_| rng.random::<bool>()).collect();
        let v = g.validate_tuple(&l, &sigma, &ps).unwrap();
        let sums_ok = v.sums;
        if sums_ok {
            assert_eq!(v.is_valid(), direct_validity(&g, &l, &sigma, &ps));
        } else {
            assert!(!direct_validity(&g, &l, &sigma, &ps));
        }
        valid += usize::from(v.is_valid());
    }
    assert!(built > 1000 && valid > 50, "built {built}, valid {valid}");
}

#[test]
fn census_small_cases() {
    let c = shape_family_census(1, &[], 1, 0).unwrap();
    assert_eq!((c.count, c.partitions), (1, 1));
    assert!(c.bound >= 1);
    let c = shape_family_census(1, &[1, 2], 1, 0).unwrap();
    assert_eq!(c.count, 2);
    assert_eq!(c.bound, 25 * 4);
    assert_eq!(c.to_line(), "k=1 n={1,2} kappa=1 rho=0 partitions=2 count=2 bound=100");
    assert!(shape_family_census(4, &[1], 1, 0).is_err());
    assert!(shape_family_census(1, &[3], 1, 0).is_err());
}

#[test]
fn census_at_k3_respects_bound() {
    for mask in 0u32..64 {
        let n: Vec<usize> = (1..=6).filter(|i| mask >> (i - 1) & 1 == 1).collect();
        for kappa in 1..=3 {
            for rho in 0..=3 {
                let c = shape_family_census(3, &n, kappa, rho).unwrap();
                assert!(c.count as u128 <= c.bound);
                assert!(c.count <= c.partitions);
            }
        }
    }
}

#[test]
fn census_code_uses_few_dots() {
    for len in 1..=7 {
        for labels in set_partitions(len) {
            let adj = restricted_graph(&labels);
            let heavy: Vec<usize> = (0..adj.len()).filter(|&c| adj[c].len() > 2).collect();
            let kappa = heavy
                .iter()
                .map(|&c| labels.windows(2).filter(|w| w[0] == c && w[1] != c).count())
                .max()
                .unwrap_or(1)
                .max(1);
            let code = census_code(&labels);
            let dots = code.iter().filter(|l| **l == CodeLetter::Dot).count();
            let news = code.iter().filter(|l| **l == CodeLetter::New).count();
            assert_eq!(news, adj.len());
            assert!(dots <= (kappa - 1) * heavy.len() + 2, "{labels:?} {code:?}");
        }
    }
}

#[test]
fn set_partition_counts_are_bell_numbers() {
    let bell = [1, 1, 2, 5, 15, 52, 203, 877];
    for (n, b) in bell.iter().enumerate() {
        assert_eq!(set_partitions(n).len(), *b);
    }
}

#[test]
fn walk_sums_single_prime_by_hand() {
    let p = 13u64;
    let pw = PrimeWindow::from_primes(13, 13, vec![p]).unwrap();
    let support = SupportMask::full(1000, 200);
    let w = evaluate_walk_sums_on_support(&pw, &support, 1, WalkSumMode::Exact, 0).unwrap();
    let pf = p as f64;
    // Two zero-sum sign patterns; every l ⊂ {1,2} qualifies.
    let expected = 2.0 * (3.0 / (pf * pf) + 1.0 / pf);
    assert!((w.s1 - expected).abs() < 1e-14, "{} vs {expected}", w.s1);
}

#[test]
fn empty_support_gives_zero() {
    let pw = PrimeWindow::from_primes(11, 31, vec![11, 13, 17, 19]).unwrap();
    let support = SupportMask::empty(100_000, 5000);
    let w = evaluate_walk_sums_on_support(&pw, &support, 2, WalkSumMode::Exact, 0).unwrap();
    assert_eq!((w.s1, w.s2), (0.0, 0.0));
}

#[test]
fn exact_budget_is_enforced() {
    let pw = sieve_primes(11, 101).unwrap();
    let support = SupportMask::full(1000, 10);
    assert!(evaluate_walk_sums_on_support(&pw, &support, 4, WalkSumMode::Exact, 0).is_err());
    assert!(evaluate_walk_sums_on_support(&pw, &support, 1, WalkSumMode::MonteCarlo { samples: 1 }, 0).is_err());
}

#[test]
fn walk_sums_exact_and_sampled_agree() {
    let pw = PrimeWindow::from_primes(11, 31, vec![11, 13, 17, 19]).unwrap();
    let exact = evaluate_walk_sums(&pw, 100_000, 100_000, 4.0, 2, 2, WalkSumMode::Exact, 0).unwrap();
    let mc = evaluate_walk_sums(&pw, 100_000, 100_000, 4.0, 2, 2, WalkSumMode::MonteCarlo { samples: 20_000 }, 3)
        .unwrap();
    assert!(exact.s1 > 0.0 && exact.s2 > 0.0);
    assert!((mc.s1 - exact.s1).abs() <= 4.0 * mc.s1_std_error, "{mc:?} {exact:?}");
    assert!((mc.s2 - exact.s2).abs() <= 4.0 * mc.s2_std_error, "{mc:?} {exact:?}");
    assert!(mc.s1_std_error > 0.0);
}

#[test]
fn exact_walk_sums_ignore_prime_order() {
    let a = PrimeWindow::from_primes(11, 31, vec![11, 13, 17, 19]).unwrap();
    let support = SupportMask::from_fn(20_000, 4000, |i| i % 7 != 3);
    let x = evaluate_walk_sums_on_support(&a, &support, 2, WalkSumMode::Exact, 0).unwrap();
    let y = evaluate_walk_sums_in_order(&[19, 11, 17, 13], &support, 2, WalkSumMode::Exact, 0).unwrap();
    assert!(evaluate_walk_sums_in_order(&[19, 19], &support, 1, WalkSumMode::Exact, 0).is_err());
    assert!((x.s1 - y.s1).abs() <= 1e-12 * x.s1.abs().max(1.0));
    assert!((x.s2 - y.s2).abs() <= 1e-12 * x.s2.abs().max(1.0));
}

#[test]
fn membership_witness_is_first() {
    let support = SupportMask::full(1001, 100);
    let w = c_membership_witness(&support, &[11, 11], &[1, -1], &BTreeSet::from([1])).unwrap();
    assert_eq!(w, 1012);
    let w = c_membership_witness(&support, &[11, 11], &[1, -1], &BTreeSet::new()).unwrap();
    assert_eq!(w, 1002);
    let w = c_membership_witness(&support, &[11, 11], &[-1, 1], &BTreeSet::new()).unwrap();
    assert_eq!(w, 1013);
}
