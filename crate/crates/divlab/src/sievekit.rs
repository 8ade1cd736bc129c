//! Exact combinatorial sieves.
//!
//! Three layers live here. The abstract sieve works with any finite list
//! of propositions and an arbitrary `{0,1}`-valued weight `g` on subsets.
//! The composite-moduli sieve specialises it to arithmetic progressions
//! with squarefree moduli, where distinct subfamilies can share an
//! intersection and coefficients are recovered through a cross-cut sum.
//! The Kubilius comparator checks the independent-primes model against
//! exact counts on a window.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::arith::{build_factor_table, PrimeWindow};
use crate::error::{capacity, param, validation, Result};

/// Largest proposition set accepted by [`gstar_transform`].
pub const MAX_GSTAR_PROPS: usize = 20;
/// Largest proposition set accepted by [`check_whithe_identity`].
pub const MAX_WHITHE_PROPS: usize = 12;
/// Largest ground set accepted by [`crosscut_sum`].
pub const MAX_CROSSCUT_GROUND: usize = 16;
/// Largest family accepted by [`build_fqd`].
pub const MAX_FAMILY: usize = 16;
/// Cap on the size of an intersection closure.
pub const MAX_CLOSURE: usize = 1 << 16;

/// Prime factors of a positive integer by trial division.
pub fn prime_factors(mut q: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= q {
        if q % d == 0 {
            out.push(d);
            while q % d == 0 {
                q /= d;
            }
        }
        d += 1;
    }
    if q > 1 {
        out.push(q);
    }
    out
}

pub fn is_squarefree(q: u64) -> bool {
    if q == 0 {
        return false;
    }
    let mut m = q;
    let mut d = 2u64;
    while d * d <= m {
        if m % (d * d) == 0 {
            return false;
        }
        if m % d == 0 {
            m /= d;
        }
        d += 1;
    }
    true
}

/// An arithmetic progression `a + qℤ` with squarefree `q`, or the empty set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Progression {
    Empty,
    Class { q: u64, a: u64 },
}

impl Progression {
    /// `a + qℤ`, with `a` reduced modulo `q`.
    pub fn new(q: u64, a: i128) -> Result<Self> {
        if !is_squarefree(q) {
            return param(format!("modulus {q} is not squarefree"));
        }
        Ok(Progression::Class { q, a: a.rem_euclid(q as i128) as u64 })
    }

    /// All of ℤ.
    pub fn whole() -> Self {
        Progression::Class { q: 1, a: 0 }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Progression::Empty)
    }

    /// Modulus, or `None` for the empty progression (whose ω is +∞ by convention).
    pub fn modulus(&self) -> Option<u64> {
        match self {
            Progression::Empty => None,
            Progression::Class { q, .. } => Some(*q),
        }
    }

    /// `ω(𝔮(R))`, or `None` for the empty progression.
    pub fn omega(&self) -> Option<u32> {
        self.modulus().map(|q| prime_factors(q).len() as u32)
    }

    pub fn contains(&self, n: i128) -> bool {
        match *self {
            Progression::Empty => false,
            Progression::Class { q, a } => n.rem_euclid(q as i128) as u64 == a,
        }
    }

    /// Intersection by the Chinese remainder theorem.
    pub fn intersect(&self, other: &Self) -> Self {
        let (Progression::Class { q: q1, a: a1 }, Progression::Class { q: q2, a: a2 }) = (*self, *other) else {
            return Progression::Empty;
        };
        let g = q1.gcd(&q2);
        if (a1 % g) != (a2 % g) {
            return Progression::Empty;
        }
        let l = q1 / g * q2;
        // Solve x ≡ a1 (q1), x ≡ a2 (q2) with x = a1 + q1·t.
        let (q1i, q2i) = ((q1 / g) as i128, (q2 / g) as i128);
        let diff = (a2 as i128 - a1 as i128) / g as i128;
        let inv = mod_inverse(q1i.rem_euclid(q2i.max(1)), q2i.max(1));
        let t = (diff.rem_euclid(q2i.max(1)) * inv).rem_euclid(q2i.max(1));
        let x = (a1 as i128 + q1 as i128 * t).rem_euclid(l as i128);
        Progression::Class { q: l, a: x as u64 }
    }

    /// `R ⊂ self`.
    pub fn contains_progression(&self, r: &Self) -> bool {
        match (*self, *r) {
            (_, Progression::Empty) => true,
            (Progression::Empty, _) => false,
            (Progression::Class { q, a }, Progression::Class { q: qr, a: ar }) => qr % q == 0 && ar % q == a,
        }
    }

    /// The translate `self − β`.
    pub fn shift_down(&self, beta: i128) -> Self {
        match *self {
            Progression::Empty => Progression::Empty,
            Progression::Class { q, a } => Progression::Class { q, a: (a as i128 - beta).rem_euclid(q as i128) as u64 },
        }
    }
}

impl std::fmt::Display for Progression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Progression::Empty => write!(f, "∅"),
            Progression::Class { q, a } => write!(f, "{a} mod {q}"),
        }
    }
}

fn mod_inverse(a: i128, m: i128) -> i128 {
    if m == 1 {
        return 0;
    }
    let (mut old_r, mut r) = (a, m);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let qt = old_r / r;
        (old_r, r) = (r, old_r - qt * r);
        (old_s, s) = (s, old_s - qt * s);
    }
    old_s.rem_euclid(m)
}

/// A list of distinct progressions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgressionFamily {
    members: Vec<Progression>,
}

impl ProgressionFamily {
    pub fn new(members: Vec<Progression>) -> Result<Self> {
        let distinct: BTreeSet<_> = members.iter().collect();
        if distinct.len() != members.len() {
            return validation("family members must be pairwise distinct");
        }
        if members.iter().any(|m| m.is_empty()) {
            return validation("family members must be non-empty progressions");
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Progression] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The non-empty members of `𝒬^∩ = {⋂𝒮 : 𝒮 ⊂ 𝒬}`, always including ℤ.
    pub fn intersection_closure(&self) -> Result<Vec<Progression>> {
        let mut seen: BTreeSet<Progression> = BTreeSet::new();
        seen.insert(Progression::whole());
        let mut frontier = vec![Progression::whole()];
        while let Some(r) = frontier.pop() {
            for p in &self.members {
                let s = r.intersect(p);
                if !s.is_empty() && seen.insert(s) {
                    if seen.len() > MAX_CLOSURE {
                        return capacity("intersection closure exceeds capacity");
                    }
                    frontier.push(s);
                }
            }
        }
        Ok(seen.into_iter().collect())
    }

    /// True when `n` avoids every member.
    pub fn avoids(&self, n: i128) -> bool {
        self.members.iter().all(|p| !p.contains(n))
    }
}

/// A non-empty subset of `𝒬^∩ ∖ {∅}` closed under taking supersets within `𝒬^∩`.
#[derive(Clone, Debug)]
pub struct DownSet {
    members: BTreeSet<Progression>,
    closure: Vec<Progression>,
}

impl DownSet {
    /// Validates membership, non-emptiness and closure under containment.
    pub fn new(family: &ProgressionFamily, members: impl IntoIterator<Item = Progression>) -> Result<Self> {
        let members: BTreeSet<Progression> = members.into_iter().collect();
        if members.is_empty() {
            return validation("the set 𝔇 must be non-empty");
        }
        if members.iter().any(|m| m.is_empty()) {
            return validation("the empty progression cannot belong to 𝔇");
        }
        let closure = family.intersection_closure()?;
        let in_closure: BTreeSet<_> = closure.iter().copied().collect();
        if let Some(bad) = members.iter().find(|m| !in_closure.contains(m)) {
            return validation(format!("{bad} is not an intersection of family members"));
        }
        for r in &members {
            for s in &closure {
                if s.contains_progression(r) && !members.contains(s) {
                    return validation(format!("not closed under containment: {r} ⊂ {s} but {s} is missing"));
                }
            }
        }
        Ok(Self { members, closure })
    }

    /// The smallest valid set containing `generators`.
    pub fn upward_closure(
        family: &ProgressionFamily,
        generators: impl IntoIterator<Item = Progression>,
    ) -> Result<Self> {
        let closure = family.intersection_closure()?;
        let gens: Vec<Progression> = generators.into_iter().collect();
        let members: BTreeSet<Progression> = closure
            .iter()
            .copied()
            .filter(|s| gens.iter().any(|g| s.contains_progression(g)))
            .collect();
        Self::new(family, members)
    }

    /// `{R ∈ 𝒬^∩ : ω(𝔮(R)) ≤ m}`.
    pub fn by_omega(family: &ProgressionFamily, m: u32) -> Result<Self> {
        let closure = family.intersection_closure()?;
        let members = closure.iter().copied().filter(|r| r.omega().is_some_and(|w| w <= m));
        Self::new(family, members)
    }

    pub fn members(&self) -> impl Iterator<Item = &Progression> {
        self.members.iter()
    }

    pub fn contains(&self, r: &Progression) -> bool {
        self.members.contains(r)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The non-empty members of `𝒬^∩` (cached at construction).
    pub fn closure(&self) -> &[Progression] {
        &self.closure
    }
}

/// `g⋆(S) = Σ_{T⊂S} g(T)(−1)^{|T|}`, with subsets encoded as bitmasks.
pub fn gstar_transform(g: impl Fn(u32) -> bool, s: u32) -> Result<i64> {
    if s.count_ones() as usize > MAX_GSTAR_PROPS || (s >> MAX_GSTAR_PROPS) != 0 {
        return capacity(format!("at most {MAX_GSTAR_PROPS} propositions are supported"));
    }
    let mut total = 0i64;
    let mut t = s;
    loop {
        if g(t) {
            total += if t.count_ones() % 2 == 0 { 1 } else { -1 };
        }
        if t == 0 {
            break;
        }
        t = (t - 1) & s;
    }
    Ok(total)
}

/// Outcome of an exhaustive identity check.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IdentityReport {
    pub seed: Option<u64>,
    pub checked: u64,
    /// `(n, left side, right side)` for each failure.
    pub violations: Vec<(i128, i64, i64)>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Header `n	lhs	rhs`, one row per violation.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed {seed}");
        }
        let _ = writeln!(s, "# checked {}", self.checked);
        s.push_str("n\tlhs\trhs\n");
        for (n, l, r) in &self.violations {
            let _ = writeln!(s, "{n}\t{l}\t{r}");
        }
        s
    }
}

/// Evaluates both sides of the abstract sieve identity at every `n` in
/// `range`.
///
/// The propositions are ordered by their position in `props`. The right
/// side is `g⋆(𝐐(n))` plus the sum over non-empty `𝐒` of true
/// propositions whose smaller propositions are all false at `n`, of
/// `(−1)^{|𝐒|}(g(𝐒 ∖ min 𝐒) − g(𝐒))`.
pub fn check_whithe_identity<P, G>(
    props: &[P],
    g: G,
    range: std::ops::RangeInclusive<i128>,
) -> Result<IdentityReport>
where
    P: Fn(i128) -> bool + Sync,
    G: Fn(u32) -> bool + Sync,
{
    if props.len() > MAX_WHITHE_PROPS {
        return capacity(format!("at most {MAX_WHITHE_PROPS} propositions are supported"));
    }
    if !g(0) {
        return param("g(∅) must equal 1");
    }
    let (lo, hi) = (*range.start(), *range.end());
    let ns: Vec<i128> = if lo <= hi { (lo..=hi).collect() } else { vec![] };
    let results: Vec<Option<(i128, i64, i64)>> = ns
        .par_iter()
        .map(|&n| {
            let mut truth = 0u32;
            for (j, p) in props.iter().enumerate() {
                if p(n) {
                    truth |= 1 << j;
                }
            }
            let lhs = i64::from(truth == 0);
            let mut rhs = gstar_transform(&g, truth).expect("size checked above");
            // Non-empty subsets of the true propositions.
            let mut s = truth;
            while s != 0 {
                let min = s.trailing_zeros();
                let below_false = (0..min).all(|j| truth & (1 << j) == 0);
                if below_false {
                    let sign = if s.count_ones() % 2 == 0 { 1 } else { -1 };
                    let without_min = s & !(1 << min);
                    rhs += sign * (i64::from(g(without_min)) - i64::from(g(s)));
                }
                s = (s - 1) & truth;
            }
            (lhs != rhs).then_some((n, lhs, rhs))
        })
        .collect();
    Ok(IdentityReport {
        seed: None,
        checked: ns.len() as u64,
        violations: results.into_iter().flatten().collect(),
    })
}

/// `Σ_{𝒮 ⊂ 𝒞, ⋃𝒮 = X} (−1)^{|𝒮|}` for a list `𝒞` of subsets of `X`.
///
/// Subsets are bitmasks. The sum is evaluated as
/// `Σ_{W⊂X} (−1)^{|X∖W|} [no member of 𝒞 lies inside W]`, which costs
/// `O(2^{|X|}|X|)` regardless of `|𝒞|`. The bound `|sum| ≤ 2^{|X|}` is
/// checked before returning.
pub fn crosscut_sum(collection: &[u32], ground: u32) -> Result<i64> {
    let bits = ground.count_ones() as usize;
    if bits > MAX_CROSSCUT_GROUND {
        return capacity(format!("ground set larger than {MAX_CROSSCUT_GROUND}"));
    }
    if collection.iter().any(|c| c & !ground != 0) {
        return param("collection member is not a subset of the ground set");
    }
    // Compress the ground set to the low `bits` bits.
    let positions: Vec<u32> = (0..32).filter(|b| ground & (1 << b) != 0).collect();
    let compress = |m: u32| -> usize {
        positions.iter().enumerate().fold(0usize, |acc, (i, &b)| acc | (((m >> b) & 1) as usize) << i)
    };
    let size = 1usize << bits;
    let mut inside = vec![0u32; size];
    for &c in collection {
        inside[compress(c)] += 1;
    }
    // Zeta transform: inside[W] = number of members contained in W.
    for b in 0..bits {
        for w in 0..size {
            if w & (1 << b) != 0 {
                inside[w] += inside[w ^ (1 << b)];
            }
        }
    }
    let full = size - 1;
    let mut total = 0i64;
    for (w, &cnt) in inside.iter().enumerate() {
        if cnt == 0 {
            let missing = (full & !w).count_ones();
            total += if missing % 2 == 0 { 1 } else { -1 };
        }
    }
    debug_assert!(total.unsigned_abs() <= 1u64 << bits);
    if total.unsigned_abs() > 1u64 << bits {
        return Err(crate::DivlabError::Verification {
            message: format!("cross-cut sum {total} exceeds 2^{bits}"),
            witness: vec![],
        });
    }
    Ok(total)
}

/// Coefficients `c_R` of `F_{𝒬,𝔇} = Σ_{R∈𝔇} c_R 1_R`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SieveCoefficients {
    pub coefficients: BTreeMap<Progression, i64>,
}

impl SieveCoefficients {
    /// `F_{𝒬,𝔇}(n)`.
    pub fn evaluate(&self, n: i128) -> i64 {
        self.coefficients.iter().filter(|(r, _)| r.contains(n)).map(|(_, c)| c).sum()
    }
}

/// Computes every `c_R = Σ_{𝒮⊂𝒬, ⋂𝒮 = R} (−1)^{|𝒮|}`, `R ∈ 𝔇`.
///
/// Members of `𝒬` containing `R` are determined by their moduli, which
/// divide `𝔮(R)`; the subfamilies meeting exactly in `R` are the ones whose
/// prime sets cover the primes of `𝔮(R)`, so `c_R` is a cross-cut sum.
pub fn build_fqd(family: &ProgressionFamily, down: &DownSet) -> Result<SieveCoefficients> {
    if family.len() > MAX_FAMILY {
        return capacity(format!("families larger than {MAX_FAMILY} are not supported"));
    }
    let mut coefficients = BTreeMap::new();
    for r in down.members() {
        let q = r.modulus().expect("𝔇 excludes the empty set");
        let primes = prime_factors(q);
        let mask_of = |m: u64| -> u32 {
            primes.iter().enumerate().fold(0u32, |acc, (i, &p)| if m % p == 0 { acc | 1 << i } else { acc })
        };
        let collection: Vec<u32> = family
            .members()
            .iter()
            .filter(|p| p.contains_progression(r))
            .map(|p| mask_of(p.modulus().unwrap()))
            .collect();
        let ground = if primes.is_empty() { 0 } else { (1u32 << primes.len()) - 1 };
        let c = crosscut_sum(&collection, ground)?;
        if c.unsigned_abs() > 1u64 << primes.len() {
            return Err(crate::DivlabError::Verification {
                message: format!("|c_R| = {} exceeds 2^ω for R = {r}", c.abs()),
                witness: vec![],
            });
        }
        coefficients.insert(*r, c);
    }
    Ok(SieveCoefficients { coefficients })
}

/// `∂𝔇 = {R ∈ 𝔇 : P ∩ R ∉ 𝔇 for some P ∈ 𝒬}`.
pub fn inner_boundary(family: &ProgressionFamily, down: &DownSet) -> Vec<Progression> {
    down.members()
        .filter(|r| family.members().iter().any(|p| !down.contains(&p.intersect(r))))
        .copied()
        .collect()
}

/// `∂_out𝔇 = {D ∈ 𝒬^∩ ∖ 𝔇 : D = P ∩ R, P ∈ 𝒬, R ∈ 𝔇}`, empty set omitted.
pub fn outer_boundary(family: &ProgressionFamily, down: &DownSet) -> Vec<Progression> {
    let mut out = BTreeSet::new();
    for r in down.members() {
        for p in family.members() {
            let d = p.intersect(r);
            if !d.is_empty() && !down.contains(&d) {
                out.insert(d);
            }
        }
    }
    out.into_iter().collect()
}

/// Result of [`sieve_pointwise_check`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SieveReport {
    pub checked: u64,
    /// Largest `|c_R| / 2^{ω(𝔮(R))}` seen.
    pub max_coefficient_ratio: f64,
    /// `n` where the `∂𝔇` envelope fails.
    pub inner_violations: Vec<i128>,
    /// `n` where the `∂_out𝔇` envelope fails.
    pub outer_violations: Vec<i128>,
}

impl SieveReport {
    pub fn passed(&self) -> bool {
        self.inner_violations.is_empty() && self.outer_violations.is_empty() && self.max_coefficient_ratio <= 1.0
    }
}

/// Checks `|1_{n ∉ ⋃𝒬} − F(n)| ≤ Σ_{R∈∂𝔇} 2^{ω(𝔮(R))} 1_R(n)` and the
/// analogous `3^{ω}` envelope over `∂_out𝔇` at every `n` in `range`.
pub fn sieve_pointwise_check(
    family: &ProgressionFamily,
    down: &DownSet,
    range: std::ops::RangeInclusive<i128>,
) -> Result<SieveReport> {
    let coeffs = build_fqd(family, down)?;
    let max_ratio = coeffs
        .coefficients
        .iter()
        .map(|(r, c)| c.abs() as f64 / 2f64.powi(r.omega().unwrap() as i32))
        .fold(0.0, f64::max);
    let inner: Vec<(Progression, i64)> = inner_boundary(family, down)
        .into_iter()
        .map(|r| (r, 1i64 << r.omega().unwrap()))
        .collect();
    let outer: Vec<(Progression, i64)> = outer_boundary(family, down)
        .into_iter()
        .map(|r| (r, 3i64.pow(r.omega().unwrap())))
        .collect();
    let (lo, hi) = (*range.start(), *range.end());
    let ns: Vec<i128> = if lo <= hi { (lo..=hi).collect() } else { vec![] };
    let flags: Vec<(i128, bool, bool)> = ns
        .par_iter()
        .map(|&n| {
            let err = (i64::from(family.avoids(n)) - coeffs.evaluate(n)).abs();
            let env_in: i64 = inner.iter().filter(|(r, _)| r.contains(n)).map(|(_, w)| w).sum();
            let env_out: i64 = outer.iter().filter(|(r, _)| r.contains(n)).map(|(_, w)| w).sum();
            (n, err > env_in, err > env_out)
        })
        .collect();
    Ok(SieveReport {
        checked: ns.len() as u64,
        max_coefficient_ratio: max_ratio,
        inner_violations: flags.iter().filter(|f| f.1).map(|f| f.0).collect(),
        outer_violations: flags.iter().filter(|f| f.2).map(|f| f.0).collect(),
    })
}

/// Progressions describing the complement of Y_ℓ, shifted by each offset.
///
/// For every admissible chain `(p₁,σ₁),…,(p_l,σ_l)` with `l < ell`, the
/// integers satisfying the chain divisibilities together with one escape
/// condition (a prime `p₀` outside the chain dividing `n` and `n + β_l`,
/// or `β_l = 0`) form a progression; every non-empty one is collected and
/// translated to `P − β_i`.
pub fn enumerate_w_family(ell: usize, pw: &PrimeWindow, beta: &[i64]) -> Result<ProgressionFamily> {
    if ell > 3 || pw.len() > 10 {
        return capacity("enumeration supports ell ≤ 3 and at most 10 primes");
    }
    let primes = pw.primes();
    let mut base: BTreeSet<Progression> = BTreeSet::new();

    fn rec(
        primes: &[u64],
        ell: usize,
        chain: &mut Vec<(u64, i64)>,
        prog: Progression,
        beta: i128,
        out: &mut BTreeSet<Progression>,
    ) {
        if !chain.is_empty() {
            if beta == 0 {
                out.insert(prog);
            }
            for &p0 in primes {
                if chain.iter().any(|&(q, _)| q == p0) {
                    continue;
                }
                // p₀ | n and p₀ | n + β forces p₀ | β.
                if beta % p0 as i128 == 0 {
                    let r = prog.intersect(&Progression::Class { q: p0, a: 0 });
                    if !r.is_empty() {
                        out.insert(r);
                    }
                }
            }
        }
        if chain.len() + 1 >= ell {
            return;
        }
        for &p in primes {
            for s in [1i64, -1] {
                if let Some(&(lp, ls)) = chain.last() {
                    if lp == p && ls == -s {
                        continue;
                    }
                }
                if let Some(first) = chain.iter().position(|&(q, _)| q == p) {
                    if chain[first..].iter().any(|&(q, _)| q != p) {
                        continue;
                    }
                }
                let cond = Progression::Class { q: p, a: (-beta).rem_euclid(p as i128) as u64 };
                let next = prog.intersect(&cond);
                if next.is_empty() {
                    continue;
                }
                chain.push((p, s));
                rec(primes, ell, chain, next, beta + (s * p as i64) as i128, out);
                chain.pop();
            }
        }
    }

    rec(primes, ell, &mut Vec::new(), Progression::whole(), 0, &mut base);
    let mut shifted = BTreeSet::new();
    for p in &base {
        for &b in beta {
            shifted.insert(p.shift_down(b as i128));
        }
    }
    ProgressionFamily::new(shifted.into_iter().collect())
}

/// Input to the Kubilius comparator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KubiliusSpec {
    /// Squarefree modulus of the progression `a + qℤ`.
    pub q: u64,
    pub a: u64,
    /// Shifts `α₁, …, α_ℓ`.
    pub alphas: Vec<i64>,
    /// Exclusion sets `𝒫_i`, one per shift.
    pub excluded: Vec<Vec<u64>>,
    /// `pattern[i][j]` is `δ_i(p_j)` for the `j`-th prime of the window.
    pub pattern: Vec<Vec<bool>>,
}

impl KubiliusSpec {
    /// A spec with no exclusions and the pattern in which only the listed
    /// `(i, p)` pairs have `δ_i(p) = 1`.
    pub fn with_hits(q: u64, a: u64, alphas: Vec<i64>, pw: &PrimeWindow, hits: &[(usize, u64)]) -> Self {
        let l = alphas.len();
        let mut pattern = vec![vec![false; pw.len()]; l];
        for &(i, p) in hits {
            if let Ok(j) = pw.primes().binary_search(&p) {
                pattern[i][j] = true;
            }
        }
        Self { q, a, alphas, excluded: vec![vec![]; l], pattern }
    }

    fn validate_shape(&self, pw: &PrimeWindow) -> Result<()> {
        if !is_squarefree(self.q) {
            return param(format!("q = {} is not squarefree", self.q));
        }
        let l = self.alphas.len();
        if l == 0 {
            return param("at least one shift is required");
        }
        if self.excluded.len() != l || self.pattern.len() != l {
            return param("exclusion sets and pattern rows must match the number of shifts");
        }
        if self.pattern.iter().any(|row| row.len() != pw.len()) {
            return param("pattern rows must have one entry per prime");
        }
        for set in &self.excluded {
            for &p in set {
                if !pw.contains(p) || self.q % p == 0 {
                    return param(format!("excluded prime {p} must lie in 𝐏 and not divide q"));
                }
            }
        }
        Ok(())
    }

    /// The first consistency constraint violated by the pattern, if any.
    pub fn inconsistency(&self, pw: &PrimeWindow) -> Option<String> {
        let l = self.alphas.len();
        for (j, &p) in pw.primes().iter().enumerate() {
            let pi = p as i64;
            for i in 0..l {
                let di = self.pattern[i][j];
                for k in 0..l {
                    let dk = self.pattern[k][j];
                    let divides = (self.alphas[i] - self.alphas[k]).rem_euclid(pi) == 0;
                    if divides && di != dk {
                        return Some(format!("p = {p} divides α_{} − α_{} but δ differs", i + 1, k + 1));
                    }
                    if di && !divides && dk {
                        return Some(format!("p = {p} cannot divide both n + α_{} and n + α_{}", i + 1, k + 1));
                    }
                }
                if self.q % p == 0 {
                    let forced = (self.a as i64 + self.alphas[i]).rem_euclid(pi) == 0;
                    if di != forced {
                        return Some(format!("p = {p} divides q, so δ_{}(p) is forced to {}", i + 1, u8::from(forced)));
                    }
                }
                if di && self.excluded[i].contains(&p) {
                    return Some(format!("p = {p} is excluded for shift {}", i + 1));
                }
            }
        }
        None
    }
}

/// Model probability of a pattern, with a flag for inconsistent input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelProbability {
    pub value: BigRational,
    /// `None` when the pattern is consistent, else the violated constraint.
    pub inconsistency: Option<String>,
}

/// `ℙ(Z_p^{(i)} = δ_i(p) for all p, i)` in the independent-primes model.
///
/// The factor for `p` is 1 when `p | q`, `1/p` when some `δ_i(p) = 1`, and
/// `1 − ρ(p)/p` when every `δ_i(p) = 0`, where `ρ(p)` counts the distinct
/// residues of the shifts modulo `p`.
pub fn kubilius_model_prob(spec: &KubiliusSpec, pw: &PrimeWindow) -> Result<ModelProbability> {
    spec.validate_shape(pw)?;
    if let Some(reason) = spec.inconsistency(pw) {
        return Ok(ModelProbability { value: BigRational::zero(), inconsistency: Some(reason) });
    }
    let mut value = BigRational::one();
    for (j, &p) in pw.primes().iter().enumerate() {
        if spec.q % p == 0 {
            continue;
        }
        let any_hit = spec.pattern.iter().any(|row| row[j]);
        let pb = BigInt::from(p);
        if any_hit {
            value *= BigRational::new(BigInt::one(), pb);
        } else {
            let rho = spec.alphas.iter().map(|a| a.rem_euclid(p as i64)).collect::<BTreeSet<_>>().len();
            value *= BigRational::new(&pb - BigInt::from(rho), pb);
        }
    }
    Ok(ModelProbability { value, inconsistency: None })
}

/// Exact counts of divisibility signatures over a window.
///
/// A signature lists the pairs `(i, j)` with `p_j | n + α_i`. Counts are
/// taken over `n ≡ a (mod q)` in `(start, start + len]`.
#[derive(Clone, Debug)]
pub struct SignatureCounts {
    pub window_start: u64,
    pub window_len: u64,
    pub counts: HashMap<Vec<(u8, u16)>, u64>,
}

impl SignatureCounts {
    pub fn count_of(&self, spec: &KubiliusSpec) -> u64 {
        let mut sig = Vec::new();
        for (i, row) in spec.pattern.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                if d {
                    sig.push((i as u8, j as u16));
                }
            }
        }
        sig.sort_unstable();
        self.counts.get(&sig).copied().unwrap_or(0)
    }
}

/// Tabulates divisibility signatures of `(n + α_1, …, n + α_ℓ)`.
pub fn signature_counts(
    q: u64,
    a: u64,
    alphas: &[i64],
    pw: &PrimeWindow,
    window_start: u64,
    window_len: u64,
) -> Result<SignatureCounts> {
    let mut all = signature_counts_by_residue(q, alphas, pw, window_start, window_len)?;
    Ok(all.swap_remove((a % q) as usize))
}

/// Signature counts for every residue class modulo `m` in one pass over
/// the window; entry `r` restricts to `n ≡ r (mod m)`.
pub fn signature_counts_by_residue(
    m: u64,
    alphas: &[i64],
    pw: &PrimeWindow,
    window_start: u64,
    window_len: u64,
) -> Result<Vec<SignatureCounts>> {
    if m == 0 || m > 1 << 16 {
        return param("residue modulus must lie in [1, 65536]");
    }
    if alphas.is_empty() || alphas.len() > 255 || pw.len() > u16::MAX as usize {
        return param("unsupported number of shifts or primes");
    }
    let lo_shift = *alphas.iter().min().unwrap();
    let hi_shift = *alphas.iter().max().unwrap();
    let base = window_start as i64 + lo_shift;
    if base < 1 {
        return param("shifted window must start at a positive integer");
    }
    let span = window_len + (hi_shift - lo_shift) as u64;
    let table = build_factor_table(base as u64, span, pw)?;
    let index: HashMap<u64, u16> = pw.primes().iter().enumerate().map(|(j, &p)| (p, j as u16)).collect();
    let first = window_start + 1;
    type Key = (u32, Vec<(u8, u16)>);
    let counts = (0..window_len)
        .into_par_iter()
        .fold(HashMap::new, |mut acc: HashMap<Key, u64>, off| {
            let n = first + off;
            let mut sig = Vec::new();
            for (i, &alpha) in alphas.iter().enumerate() {
                let m = (n as i64 + alpha) as u64;
                let idx = table.index_of(m).expect("shift lies inside the table");
                for p in table.divisors(idx) {
                    sig.push((i as u8, index[p]));
                }
            }
            sig.sort_unstable();
            *acc.entry(((n % m) as u32, sig)).or_insert(0) += 1;
            acc
        })
        .reduce(HashMap::new, |mut x, y| {
            for (k, v) in y {
                *x.entry(k).or_insert(0) += v;
            }
            x
        });
    let mut out: Vec<SignatureCounts> = (0..m)
        .map(|_| SignatureCounts { window_start, window_len, counts: HashMap::new() })
        .collect();
    for ((r, sig), c) in counts {
        out[r as usize].counts.insert(sig, c);
    }
    Ok(out)
}

impl SignatureCounts {
    /// Merges counts of disjoint residue classes.
    pub fn merge(mut self, other: &SignatureCounts) -> Self {
        for (k, v) in &other.counts {
            *self.counts.entry(k.clone()).or_insert(0) += v;
        }
        self
    }
}

/// Exact window density against the model value for one pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct KubiliusComparison {
    pub count: u64,
    pub exact_density: BigRational,
    pub model_value: BigRational,
    pub relative_error: f64,
    pub inconsistency: Option<String>,
}

fn compare_from_count(spec: &KubiliusSpec, pw: &PrimeWindow, count: u64, len: u64) -> Result<KubiliusComparison> {
    let model = kubilius_model_prob(spec, pw)?;
    let model_value = model.value / BigInt::from(spec.q);
    let count = if model.inconsistency.is_some() { 0 } else { count };
    let exact_density = BigRational::new(BigInt::from(count), BigInt::from(len));
    let relative_error = if model_value.is_zero() {
        if exact_density.is_zero() { 0.0 } else { f64::INFINITY }
    } else {
        let diff = (&exact_density - &model_value) / &model_value;
        diff.to_f64().unwrap_or(f64::INFINITY).abs()
    };
    Ok(KubiliusComparison { count, exact_density, model_value, relative_error, inconsistency: model.inconsistency })
}

/// Compares the exact density of a pattern on `(start, start + len]` with
/// `(1/q)·ℙ(pattern)`.
pub fn kubilius_compare(spec: &KubiliusSpec, pw: &PrimeWindow, window_start: u64, window_len: u64) -> Result<KubiliusComparison> {
    spec.validate_shape(pw)?;
    let counts = signature_counts(spec.q, spec.a, &spec.alphas, pw, window_start, window_len)?;
    kubilius_compare_with(spec, pw, &counts)
}

/// As [`kubilius_compare`], reusing precomputed signature counts.
pub fn kubilius_compare_with(spec: &KubiliusSpec, pw: &PrimeWindow, counts: &SignatureCounts) -> Result<KubiliusComparison> {
    spec.validate_shape(pw)?;
    let mut count = counts.count_of(spec);
    // The coprimality conditions are implied by a consistent pattern; an
    // excluded prime marked as dividing makes the pattern inconsistent.
    if spec.inconsistency(pw).is_some() {
        count = 0;
    }
    compare_from_count(spec, pw, count, counts.window_len)
}

/// All consistent patterns (no exclusions) whose non-zero part involves
/// at most `max_events` primes, for a fixed progression and shift set.
///
/// An event at `p ∤ q` picks one residue class among the shifts: every
/// `i` with `α_i` in that class gets `δ_i(p) = 1`. Primes dividing `q`
/// take their forced values.
pub fn consistent_patterns(q: u64, a: u64, alphas: &[i64], pw: &PrimeWindow, max_events: usize) -> Vec<KubiliusSpec> {
    let l = alphas.len();
    let primes = pw.primes();
    let mut base = vec![vec![false; primes.len()]; l];
    let mut free = Vec::new();
    for (j, &p) in primes.iter().enumerate() {
        if q % p == 0 {
            for i in 0..l {
                base[i][j] = (a as i64 + alphas[i]).rem_euclid(p as i64) == 0;
            }
        } else {
            free.push(j);
        }
    }
    // Residue classes of the shifts modulo each free prime.
    let classes = |j: usize| -> Vec<Vec<usize>> {
        let p = primes[j] as i64;
        let mut by: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &al) in alphas.iter().enumerate() {
            by.entry(al.rem_euclid(p)).or_default().push(i);
        }
        by.into_values().collect()
    };
    let mut out = Vec::new();
    fn rec(
        free: &[usize],
        start: usize,
        left: usize,
        pattern: &mut Vec<Vec<bool>>,
        classes: &dyn Fn(usize) -> Vec<Vec<usize>>,
        emit: &mut dyn FnMut(&Vec<Vec<bool>>),
    ) {
        emit(pattern);
        if left == 0 {
            return;
        }
        for f in start..free.len() {
            let j = free[f];
            for class in classes(j) {
                for &i in &class {
                    pattern[i][j] = true;
                }
                rec(free, f + 1, left - 1, pattern, classes, emit);
                for &i in &class {
                    pattern[i][j] = false;
                }
            }
        }
    }
    let mut emit = |p: &Vec<Vec<bool>>| {
        out.push(KubiliusSpec { q, a, alphas: alphas.to_vec(), excluded: vec![vec![]; l], pattern: p.clone() });
    };
    rec(&free, 0, max_events, &mut base, &classes, &mut emit);
    out
}
