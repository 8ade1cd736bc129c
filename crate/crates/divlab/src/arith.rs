//! Prime sieving, windowed factorization and the arithmetic functions
//! λ, Ω and ω_P.
//!
//! Windows are half-open on the left: a window with start `N` and length
//! `len` covers the integers `N+1, …, N+len`. Index `i` of every per-n
//! column refers to `n = N + 1 + i`.

use std::io::{Read, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{param, DivlabError, Result};

/// Largest admissible upper end for [`sieve_primes`].
pub const MAX_PRIME_BOUND: u64 = 1 << 40;

/// Number of integers handled per segment by the windowed sieves.
pub const SIEVE_BLOCK: usize = 1 << 18;

/// Magic bytes opening a serialized [`FactorTable`].
pub const TABLE_MAGIC: &[u8; 8] = b"DIVLAB1\0";

/// A set 𝐏 of primes in `[h0, h]` together with its exact Mertens sum
/// 𝓛 = Σ 1/p.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimeWindow {
    h0: u64,
    h: u64,
    primes: Vec<u64>,
    mertens: BigRational,
    complete: bool,
}

impl PrimeWindow {
    /// Builds a window from an explicit list of primes, which need not
    /// contain every prime of `[h0, h]`.
    pub fn from_primes(h0: u64, h: u64, primes: Vec<u64>) -> Result<Self> {
        if h0 < 2 || h < h0 {
            return param(format!("need 2 <= h0 <= h, got h0={h0}, h={h}"));
        }
        for w in primes.windows(2) {
            if w[0] >= w[1] {
                return param("prime list must be strictly ascending");
            }
        }
        for &p in &primes {
            if p < h0 || p > h {
                return param(format!("prime {p} outside [{h0}, {h}]"));
            }
            if !is_prime(p) {
                return param(format!("{p} is not prime"));
            }
        }
        let mertens = reciprocal_sum(&primes);
        Ok(Self { h0, h, primes, mertens, complete: false })
    }

    pub fn h0(&self) -> u64 {
        self.h0
    }

    pub fn h(&self) -> u64 {
        self.h
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// True when the window holds every prime of `[h0, h]`.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// The exact Mertens sum 𝓛.
    pub fn mertens(&self) -> &BigRational {
        &self.mertens
    }

    /// 𝓛 rounded to the nearest double.
    pub fn mertens_f64(&self) -> f64 {
        rational_to_f64(&self.mertens)
    }

    /// Largest prime of the window (0 if empty).
    pub fn max_prime(&self) -> u64 {
        self.primes.last().copied().unwrap_or(0)
    }

    pub fn contains(&self, p: u64) -> bool {
        self.primes.binary_search(&p).is_ok()
    }
}

/// Converts an exact rational to the nearest representable double.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Deterministic Miller–Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        b %= n;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        r
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// All primes `p <= n`, by the plain sieve of Eratosthenes.
pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i.saturating_mul(i);
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Integer square root (floor).
pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut r = (n as f64).sqrt() as u64;
    while r.saturating_mul(r) > n {
        r -= 1;
    }
    while (r + 1).saturating_mul(r + 1) <= n {
        r += 1;
    }
    r
}

/// Primes in `[lo, hi]` by a segmented sieve.
pub fn primes_in_range(lo: u64, hi: u64) -> Vec<u64> {
    if hi < 2 || hi < lo {
        return Vec::new();
    }
    let lo = lo.max(2);
    let base = primes_up_to(isqrt(hi));
    let mut out = Vec::new();
    let mut start = lo;
    loop {
        let end = hi.min(start.saturating_add(SIEVE_BLOCK as u64 - 1));
        let len = (end - start + 1) as usize;
        let mut composite = vec![false; len];
        for &p in &base {
            if p * p > end {
                break;
            }
            let first = (start.div_ceil(p) * p).max(p * p);
            let mut m = first;
            while m <= end {
                composite[(m - start) as usize] = true;
                m += p;
            }
        }
        out.extend(
            composite
                .iter()
                .enumerate()
                .filter(|(_, &c)| !c)
                .map(|(i, _)| start + i as u64),
        );
        if end == hi {
            break;
        }
        start = end + 1;
    }
    out
}

/// The window of all primes in `[h0, h]`.
pub fn sieve_primes(h0: u64, h: u64) -> Result<PrimeWindow> {
    if h0 < 2 || h < h0 {
        return param(format!("need 2 <= h0 <= h, got h0={h0}, h={h}"));
    }
    if h > MAX_PRIME_BOUND {
        return param(format!("h={h} exceeds the supported bound 2^40"));
    }
    let primes = primes_in_range(h0, h);
    let mertens = reciprocal_sum(&primes);
    Ok(PrimeWindow { h0, h, primes, mertens, complete: true })
}

/// Exact Σ 1/p over a list of distinct primes.
///
/// Uses a product tree: for distinct primes the fraction with denominator
/// Π p is already in lowest terms, so no gcd work is needed.
pub fn reciprocal_sum(primes: &[u64]) -> BigRational {
    fn tree(ps: &[u64]) -> (BigInt, BigInt) {
        match ps.len() {
            0 => (BigInt::zero(), BigInt::from(1u8)),
            1 => (BigInt::from(1u8), BigInt::from(ps[0])),
            n => {
                let (a, b) = tree(&ps[..n / 2]);
                let (c, d) = tree(&ps[n / 2..]);
                (&a * &d + &c * &b, b * d)
            }
        }
    }
    let (num, den) = tree(primes);
    BigRational::new(num, den)
}

/// Exact Σ 1/p over the primes of `pw` lying in `[lo, hi]`.
pub fn mertens_partial(pw: &PrimeWindow, lo: u64, hi: u64) -> BigRational {
    if lo > hi {
        return BigRational::zero();
    }
    let a = pw.primes.partition_point(|&p| p < lo);
    let b = pw.primes.partition_point(|&p| p <= hi);
    reciprocal_sum(&pw.primes[a..b])
}

/// Computes Ω(n) for `n` in `[lo, lo + out.len())` into `out`.
///
/// `small_primes` must contain every prime up to `sqrt(lo + out.len() - 1)`.
/// Prime powers are stepped through directly; after all of them the
/// product of located prime powers is compared with `n`, and any leftover
/// cofactor is a single prime.
pub fn big_omega_segment(lo: u64, out: &mut [u8], small_primes: &[u64]) {
    let len = out.len();
    if len == 0 {
        return;
    }
    let hi = lo + len as u64 - 1;
    let mut acc = vec![1u64; len];
    out.fill(0);
    for &p in small_primes {
        if p.saturating_mul(p) > hi {
            break;
        }
        let mut pk = p;
        loop {
            let first = lo.div_ceil(pk) * pk;
            let mut m = first;
            while m <= hi {
                let i = (m - lo) as usize;
                out[i] += 1;
                acc[i] *= p;
                m += pk;
            }
            match pk.checked_mul(p) {
                Some(next) if next <= hi => pk = next,
                _ => break,
            }
        }
    }
    for i in 0..len {
        let n = lo + i as u64;
        if n > 1 && acc[i] != n {
            out[i] += 1;
        }
    }
}

/// Computes Ω over `[lo, lo+len)` using parallel blocks of [`SIEVE_BLOCK`].
pub fn big_omega_range(lo: u64, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    if len == 0 {
        return out;
    }
    let hi = lo + len as u64 - 1;
    let small = primes_up_to(isqrt(hi));
    out.par_chunks_mut(SIEVE_BLOCK)
        .enumerate()
        .for_each(|(b, chunk)| {
            big_omega_segment(lo + (b * SIEVE_BLOCK) as u64, chunk, &small);
        });
    out
}

/// Per-n arithmetic data over the window `(N, N+len]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorTable {
    window_start: u64,
    window_len: u64,
    primes: Vec<u64>,
    offsets: Vec<usize>,
    divisors: Vec<u64>,
    big_omega: Vec<u8>,
    liouville: Vec<i8>,
}

/// Builds the factor table of `(window_start, window_start + window_len]`
/// relative to the primes of `pw`.
pub fn build_factor_table(
    window_start: u64,
    window_len: u64,
    pw: &PrimeWindow,
) -> Result<FactorTable> {
    if window_start < 1 || window_len < 1 {
        return param("window_start and window_len must be at least 1");
    }
    let end = match window_start.checked_add(window_len) {
        Some(e) if e <= (1u64 << 62) => e,
        _ => return param("window end overflows the supported integer width"),
    };
    let len = usize::try_from(window_len)
        .map_err(|_| DivlabError::Parameter("window length exceeds memory".into()))?;
    let lo = window_start + 1;
    let big_omega = big_omega_range(lo, len);
    let liouville: Vec<i8> = big_omega.iter().map(|&o| if o % 2 == 0 { 1 } else { -1 }).collect();

    // Divisors from 𝐏, collected per block and stitched together in order.
    let block_lists: Vec<Vec<(usize, u64)>> = (0..len.div_ceil(SIEVE_BLOCK))
        .into_par_iter()
        .map(|b| {
            let s = lo + (b * SIEVE_BLOCK) as u64;
            let e = (s + SIEVE_BLOCK as u64 - 1).min(end);
            let mut hits = Vec::new();
            for &p in &pw.primes {
                let mut m = s.div_ceil(p) * p;
                while m <= e {
                    hits.push(((m - lo) as usize, p));
                    m += p;
                }
            }
            hits.sort_unstable();
            hits
        })
        .collect();
    let mut offsets = Vec::with_capacity(len + 1);
    let mut divisors = Vec::new();
    offsets.push(0);
    let mut cursor = 0usize;
    for hits in block_lists {
        for (i, p) in hits {
            while cursor < i {
                offsets.push(divisors.len());
                cursor += 1;
            }
            divisors.push(p);
        }
    }
    while cursor < len {
        offsets.push(divisors.len());
        cursor += 1;
    }
    Ok(FactorTable {
        window_start,
        window_len,
        primes: pw.primes.clone(),
        offsets,
        divisors,
        big_omega,
        liouville,
    })
}

impl FactorTable {
    pub fn window_start(&self) -> u64 {
        self.window_start
    }

    pub fn window_len(&self) -> u64 {
        self.window_len
    }

    pub fn len(&self) -> usize {
        self.big_omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.big_omega.is_empty()
    }

    /// The prime set the divisor lists were computed against.
    pub fn prime_set(&self) -> &[u64] {
        &self.primes
    }

    /// The integer at column `i`.
    pub fn n_at(&self, i: usize) -> u64 {
        self.window_start + 1 + i as u64
    }

    /// Column of `n`, if it lies in the window.
    pub fn index_of(&self, n: u64) -> Option<usize> {
        if n > self.window_start && n <= self.window_start + self.window_len {
            Some((n - self.window_start - 1) as usize)
        } else {
            None
        }
    }

    /// Primes of 𝐏 dividing the integer at column `i`, ascending.
    pub fn divisors(&self, i: usize) -> &[u64] {
        &self.divisors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// ω_P at column `i`.
    pub fn omega_p(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn big_omega(&self, i: usize) -> u8 {
        self.big_omega[i]
    }

    pub fn liouville(&self, i: usize) -> i8 {
        self.liouville[i]
    }

    pub fn big_omega_column(&self) -> &[u8] {
        &self.big_omega
    }

    pub fn liouville_column(&self) -> &[i8] {
        &self.liouville
    }

    /// Σ_n ω_P(n) over the window.
    pub fn total_omega_p(&self) -> u64 {
        self.divisors.len() as u64
    }

    /// Writes the columnar binary form: the magic bytes followed by
    /// little-endian 64-bit fields (window start, window length, prime
    /// count, the primes, divisor offsets, flattened divisors, Ω, λ).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let put = |x: u64, w: &mut W| w.write_all(&x.to_le_bytes());
        w.write_all(TABLE_MAGIC)?;
        put(self.window_start, &mut w)?;
        put(self.window_len, &mut w)?;
        put(self.primes.len() as u64, &mut w)?;
        for &p in &self.primes {
            put(p, &mut w)?;
        }
        put(self.divisors.len() as u64, &mut w)?;
        for &o in &self.offsets {
            put(o as u64, &mut w)?;
        }
        for &d in &self.divisors {
            put(d, &mut w)?;
        }
        for &o in &self.big_omega {
            put(o as u64, &mut w)?;
        }
        for &l in &self.liouville {
            put(l as i64 as u64, &mut w)?;
        }
        Ok(())
    }

    /// Reads a table written by [`FactorTable::write_binary`].
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TABLE_MAGIC {
            return Err(DivlabError::Format("bad magic bytes".into()));
        }
        let get = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let window_start = get(&mut r)?;
        let window_len = get(&mut r)?;
        let np = get(&mut r)? as usize;
        let primes = (0..np).map(|_| get(&mut r)).collect::<Result<Vec<_>>>()?;
        let nd = get(&mut r)? as usize;
        let len = window_len as usize;
        let offsets = (0..=len)
            .map(|_| get(&mut r).map(|x| x as usize))
            .collect::<Result<Vec<_>>>()?;
        let divisors = (0..nd).map(|_| get(&mut r)).collect::<Result<Vec<_>>>()?;
        let big_omega = (0..len)
            .map(|_| get(&mut r).map(|x| x as u8))
            .collect::<Result<Vec<_>>>()?;
        let liouville = (0..len)
            .map(|_| get(&mut r).map(|x| x as i64 as i8))
            .collect::<Result<Vec<_>>>()?;
        if offsets.last() != Some(&nd) || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(DivlabError::Format("inconsistent divisor offsets".into()));
        }
        Ok(Self { window_start, window_len, primes, offsets, divisors, big_omega, liouville })
    }
}
