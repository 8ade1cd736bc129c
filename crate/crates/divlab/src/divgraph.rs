//! The divisibility operator A on an integer window and its exceptional
//! sets.
//!
//! For `n, m` in the window with `|n − m| = p ∈ 𝐏` the matrix entry is
//! `1_{p|n} − 1/p` (note that `p | n` iff `p | m`), and every other entry
//! is zero. A support mask restricts the operator on both sides: inputs
//! outside the support are ignored and outputs outside it are zero.

use std::io::{Read, Write};

use bitvec::prelude::*;
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive};
use rayon::prelude::*;

use crate::arith::{FactorTable, PrimeWindow};
use crate::error::{capacity, param, DivlabError, Result};

/// Largest window handled by [`assemble_dense`].
pub const DENSE_CAPACITY: usize = 4096;

/// Default per-integer node budget for the Y_ℓ search.
pub const DEFAULT_NODE_BUDGET: u64 = 100_000;

/// A subset of a window, stored as a bitset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportMask {
    window_start: u64,
    bits: BitVec<u64, Lsb0>,
    count: usize,
}

impl SupportMask {
    /// Every position of the window selected.
    pub fn full(window_start: u64, len: usize) -> Self {
        Self { window_start, bits: bitvec![u64, Lsb0; 1; len], count: len }
    }

    /// No position selected.
    pub fn empty(window_start: u64, len: usize) -> Self {
        Self { window_start, bits: bitvec![u64, Lsb0; 0; len], count: 0 }
    }

    pub fn from_fn(window_start: u64, len: usize, f: impl Fn(usize) -> bool) -> Self {
        let mut bits = BitVec::with_capacity(len);
        for i in 0..len {
            bits.push(f(i));
        }
        let count = bits.count_ones();
        Self { window_start, bits, count }
    }

    pub fn from_bools(window_start: u64, flags: &[bool]) -> Self {
        Self::from_fn(window_start, flags.len(), |i| flags[i])
    }

    pub fn window_start(&self) -> u64 {
        self.window_start
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of selected positions (cached popcount).
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        let old = self.bits[i];
        if old != value {
            self.bits.set(i, value);
            if value {
                self.count += 1;
            } else {
                self.count -= 1;
            }
        }
    }

    /// Selected positions in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        self.bits.iter_ones().collect()
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let bits = self.bits.clone() & other.bits.clone();
        let count = bits.count_ones();
        Ok(Self { window_start: self.window_start, bits, count })
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let bits = self.bits.clone() | other.bits.clone();
        let count = bits.count_ones();
        Ok(Self { window_start: self.window_start, bits, count })
    }

    pub fn complement(&self) -> Self {
        let bits = !self.bits.clone();
        let count = bits.count_ones();
        Self { window_start: self.window_start, bits, count }
    }

    /// True when every selected position of `self` is selected in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.len() == other.len() && self.bits.iter_ones().all(|i| other.bits[i])
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() || self.window_start != other.window_start {
            return param("masks cover different windows");
        }
        Ok(())
    }

    /// Serializes as an 8-byte header (window start and window length,
    /// each a little-endian `u32`) followed by the raw bitset, one bit per
    /// position, least significant bit first.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let start = u32::try_from(self.window_start)
            .map_err(|_| DivlabError::Format("window start exceeds 32 bits".into()))?;
        let len = u32::try_from(self.len())
            .map_err(|_| DivlabError::Format("window length exceeds 32 bits".into()))?;
        w.write_all(&start.to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
        let mut bytes = vec![0u8; self.len().div_ceil(8)];
        for i in self.bits.iter_ones() {
            bytes[i / 8] |= 1 << (i % 8);
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 8];
        r.read_exact(&mut head)?;
        let start = u32::from_le_bytes(head[..4].try_into().unwrap()) as u64;
        let len = u32::from_le_bytes(head[4..].try_into().unwrap()) as usize;
        let mut bytes = vec![0u8; len.div_ceil(8)];
        r.read_exact(&mut bytes)?;
        if len % 8 != 0 && bytes.last().is_some_and(|b| b >> (len % 8) != 0) {
            return Err(DivlabError::Format("padding bits set in mask".into()));
        }
        Ok(Self::from_fn(start, len, |i| bytes[i / 8] >> (i % 8) & 1 == 1))
    }
}

/// The operator A on a window, restricted to a support mask.
#[derive(Clone, Debug)]
pub struct OperatorSpec {
    table: FactorTable,
    pw: PrimeWindow,
    support: SupportMask,
}

impl OperatorSpec {
    pub fn new(table: FactorTable, pw: PrimeWindow, support: SupportMask) -> Result<Self> {
        if support.len() != table.len() || support.window_start() != table.window_start() {
            return param("support mask does not match the factor table window");
        }
        if table.prime_set() != pw.primes() {
            return param("factor table was built against a different prime set");
        }
        Ok(Self { table, pw, support })
    }

    /// Operator on the whole window (full support).
    pub fn full(table: FactorTable, pw: PrimeWindow) -> Self {
        let support = SupportMask::full(table.window_start(), table.len());
        Self { table, pw, support }
    }

    pub fn table(&self) -> &FactorTable {
        &self.table
    }

    pub fn prime_window(&self) -> &PrimeWindow {
        &self.pw
    }

    pub fn support(&self) -> &SupportMask {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.table.len()
    }

    /// A copy of this operator restricted to `support`.
    pub fn with_support(&self, support: SupportMask) -> Result<Self> {
        Self::new(self.table.clone(), self.pw.clone(), support)
    }

    /// Matrix entry between columns `i` and `j` (zero unless both are in
    /// the support and `|n_i − n_j| ∈ 𝐏`).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if !self.support.get(i) || !self.support.get(j) {
            return 0.0;
        }
        let d = i.abs_diff(j) as u64;
        if d == 0 || !self.pw.contains(d) {
            return 0.0;
        }
        edge_weight(self.table.n_at(i), d)
    }
}

/// The weight `1_{p|n} − 1/p` of the edge from `n` to `n ± p`.
#[inline]
pub fn edge_weight(n: u64, p: u64) -> f64 {
    if n % p == 0 {
        1.0 - 1.0 / p as f64
    } else {
        -1.0 / p as f64
    }
}

/// Applies the support-restricted operator to `f`.
pub fn apply_operator(spec: &OperatorSpec, f: &[f64]) -> Result<Vec<f64>> {
    let len = spec.dim();
    if f.len() != len {
        return param(format!("vector length {} != window length {len}", f.len()));
    }
    let mut out = vec![0.0; len];
    apply_into(spec, f, &mut out);
    Ok(out)
}

pub(crate) fn apply_into(spec: &OperatorSpec, f: &[f64], out: &mut [f64]) {
    let len = spec.dim();
    let primes = spec.pw.primes();
    let support = &spec.support;
    let start = spec.table.window_start() + 1;
    out.par_chunks_mut(4096).enumerate().for_each(|(c, chunk)| {
        for (k, slot) in chunk.iter_mut().enumerate() {
            let i = c * 4096 + k;
            if !support.get(i) {
                *slot = 0.0;
                continue;
            }
            let n = start + i as u64;
            let mut acc = 0.0;
            for &p in primes {
                let pu = p as usize;
                if pu >= len {
                    break;
                }
                let mut s = 0.0;
                if i >= pu && support.get(i - pu) {
                    s += f[i - pu];
                }
                if i + pu < len && support.get(i + pu) {
                    s += f[i + pu];
                }
                if s != 0.0 {
                    acc += edge_weight(n, p) * s;
                }
            }
            *slot = acc;
        }
    });
}

/// Dense matrix of the support-restricted operator.
pub fn assemble_dense(spec: &OperatorSpec) -> Result<DMatrix<f64>> {
    let len = spec.dim();
    if len > DENSE_CAPACITY {
        return capacity(format!("window length {len} exceeds dense capacity {DENSE_CAPACITY}"));
    }
    let mut m = DMatrix::zeros(len, len);
    for &p in spec.pw.primes() {
        let pu = p as usize;
        if pu >= len {
            break;
        }
        for i in 0..len - pu {
            let j = i + pu;
            if spec.support.get(i) && spec.support.get(j) {
                let w = edge_weight(spec.table.n_at(i), p);
                m[(i, j)] = w;
                m[(j, i)] = w;
            }
        }
    }
    Ok(m)
}

/// The largest ω_P allowed in X₀, i.e. ⌊K·𝓛⌋ computed exactly.
pub fn x0_threshold(k: f64, pw: &PrimeWindow) -> Result<u64> {
    if !(k >= 0.0) || !k.is_finite() {
        return param(format!("K must be a finite non-negative number, got {k}"));
    }
    let kr = BigRational::from_f64(k)
        .ok_or_else(|| DivlabError::Parameter(format!("K={k} is not representable")))?;
    let t = (kr * pw.mertens()).floor().to_integer();
    Ok(t.to_u64().unwrap_or(u64::MAX))
}

/// X₀ = {n : ω_P(n) ≤ K𝓛}.
pub fn compute_x0_mask(table: &FactorTable, pw: &PrimeWindow, k: f64) -> Result<SupportMask> {
    let t = x0_threshold(k, pw)?;
    Ok(SupportMask::from_fn(table.window_start(), table.len(), |i| {
        (table.omega_p(i) as u64) <= t
    }))
}

/// Result of the per-integer exclusion search for Y_ℓ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainVerdict {
    /// No admissible chain produces an escape condition.
    Kept,
    /// A witnessing chain was found.
    Excluded,
    /// The node budget ran out before the search finished.
    Undecided,
}

/// Y_ℓ mask together with the number of budget-limited decisions.
#[derive(Clone, Debug)]
pub struct YlMask {
    pub mask: SupportMask,
    pub undecided: usize,
}

/// Decides whether `n` is removed from Y_ℓ.
///
/// `n` is removed when some chain `(p₁,σ₁),…,(p_l,σ_l)` with `1 ≤ l < ell`,
/// `p_j | n + σ₁p₁ + … + σ_{j−1}p_{j−1}`, obeying the two admissibility
/// rules, ends with `β_l = 0` or with a prime `p₀ ∈ 𝐏` outside the chain
/// dividing both `n` and `n + β_l`.
pub fn yl_verdict(n: u64, primes: &[u64], ell: usize, node_budget: u64) -> ChainVerdict {
    let divs_n: Vec<u64> = primes.iter().copied().filter(|&p| n % p == 0).collect();
    let mut chain: Vec<(u64, i8)> = Vec::with_capacity(ell);
    let mut nodes = 0u64;

    fn admissible(chain: &[(u64, i8)], p: u64, s: i8) -> bool {
        if let Some(&(lp, ls)) = chain.last() {
            if lp == p && ls == -s {
                return false;
            }
        }
        if let Some(first) = chain.iter().position(|&(q, _)| q == p) {
            if chain[first..].iter().any(|&(q, _)| q != p) {
                return false;
            }
        }
        true
    }

    fn escapes(divs_n: &[u64], chain: &[(u64, i8)], beta: i128) -> bool {
        if beta == 0 {
            return true;
        }
        divs_n
            .iter()
            .any(|&p0| beta % p0 as i128 == 0 && chain.iter().all(|&(q, _)| q != p0))
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        n: u64,
        primes: &[u64],
        divs_n: &[u64],
        ell: usize,
        chain: &mut Vec<(u64, i8)>,
        beta: i128,
        nodes: &mut u64,
        budget: u64,
    ) -> ChainVerdict {
        if !chain.is_empty() && escapes(divs_n, chain, beta) {
            return ChainVerdict::Excluded;
        }
        if chain.len() + 1 >= ell {
            return ChainVerdict::Kept;
        }
        let cur = n as i128 + beta;
        let mut undecided = false;
        for &p in primes {
            if cur.rem_euclid(p as i128) != 0 {
                continue;
            }
            for s in [1i8, -1] {
                if !admissible(chain, p, s) {
                    continue;
                }
                *nodes += 1;
                if *nodes > budget {
                    return ChainVerdict::Undecided;
                }
                chain.push((p, s));
                let v = dfs(n, primes, divs_n, ell, chain, beta + s as i128 * p as i128, nodes, budget);
                chain.pop();
                match v {
                    ChainVerdict::Excluded => return v,
                    ChainVerdict::Undecided => undecided = true,
                    ChainVerdict::Kept => {}
                }
                if undecided {
                    return ChainVerdict::Undecided;
                }
            }
        }
        ChainVerdict::Kept
    }

    dfs(n, primes, &divs_n, ell, &mut chain, 0, &mut nodes, node_budget)
}

/// Y_ℓ restricted to the window. Undecided integers are treated as
/// excluded and counted.
pub fn compute_yl_mask(
    table: &FactorTable,
    pw: &PrimeWindow,
    ell: usize,
    node_budget: u64,
) -> Result<YlMask> {
    if ell < 1 {
        return param("ell must be at least 1");
    }
    if node_budget < 1 {
        return param("node_budget must be at least 1");
    }
    let verdicts: Vec<ChainVerdict> = (0..table.len())
        .into_par_iter()
        .map(|i| yl_verdict(table.n_at(i), pw.primes(), ell, node_budget))
        .collect();
    let undecided = verdicts.iter().filter(|v| **v == ChainVerdict::Undecided).count();
    let mask = SupportMask::from_fn(table.window_start(), table.len(), |i| {
        verdicts[i] == ChainVerdict::Kept
    });
    Ok(YlMask { mask, undecided })
}

/// Sizes of the exceptional sets next to the corresponding upper bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ExclusionReport {
    pub window_len: usize,
    pub k: f64,
    pub ell: usize,
    pub x0_excluded: usize,
    pub yl_excluded: usize,
    pub union_excluded: usize,
    pub yl_undecided: usize,
    pub x0_density: f64,
    pub yl_density: f64,
    pub union_density: f64,
    /// `e^{−(K log K − K + 1)𝓛}`.
    pub x0_bound_density: f64,
    /// `(3^ℓ 𝓛^ℓ (log H / log H₀ + 1 + 1/𝓛) N/H₀ + 3^ℓ H^{ℓ+1}) / N`.
    pub yl_bound_density: f64,
}

/// Density bound for the complement of X₀.
pub fn x0_bound_density(k: f64, mertens: f64) -> f64 {
    let klogk = if k > 0.0 { k * k.ln() } else { 0.0 };
    (-(klogk - k + 1.0) * mertens).exp()
}

/// Density bound for the complement of Y_ℓ on a window of length `n`.
pub fn yl_bound_density(ell: usize, pw: &PrimeWindow, n: usize) -> f64 {
    let l = pw.mertens_f64();
    let (h0, h) = (pw.h0() as f64, pw.h() as f64);
    let three = 3f64.powi(ell as i32);
    let log_ratio = if h0 > 1.0 { h.ln() / h0.ln() } else { f64::INFINITY };
    three * l.powi(ell as i32) * (log_ratio + 1.0 + 1.0 / l) / h0
        + three * h.powi(ell as i32 + 1) / n as f64
}

/// Tabulates the complements of X₀ and Y_ℓ against their bounds.
pub fn exclusion_report(
    table: &FactorTable,
    pw: &PrimeWindow,
    k: f64,
    ell: usize,
) -> Result<ExclusionReport> {
    let x0 = compute_x0_mask(table, pw, k)?;
    let yl = compute_yl_mask(table, pw, ell, DEFAULT_NODE_BUDGET)?;
    let both = x0.intersect(&yl.mask)?;
    let n = table.len();
    let x0_excluded = n - x0.count();
    let yl_excluded = n - yl.mask.count();
    let union_excluded = n - both.count();
    let dens = |c: usize| c as f64 / n as f64;
    Ok(ExclusionReport {
        window_len: n,
        k,
        ell,
        x0_excluded,
        yl_excluded,
        union_excluded,
        yl_undecided: yl.undecided,
        x0_density: dens(x0_excluded),
        yl_density: dens(yl_excluded),
        union_density: dens(union_excluded),
        x0_bound_density: x0_bound_density(k, pw.mertens_f64()),
        yl_bound_density: yl_bound_density(ell, pw, n),
    })
}

/// Exact lower bound `Σ_{p|n₀, p∈𝐏} (1 − 2/p + 1/p²)` for `⟨δ, A²δ⟩`.
pub fn heavy_vertex_lower_bound(n0: u64, pw: &PrimeWindow) -> BigRational {
    let mut acc = BigRational::from_integer(BigInt::from(0));
    for &p in pw.primes() {
        if n0 % p == 0 {
            let pr = BigInt::from(p);
            let pm1 = &pr - 1u8;
            acc += BigRational::new(&pm1 * &pm1, &pr * &pr);
        }
    }
    acc
}

/// Exact `⟨δ_i, A²δ_i⟩ = Σ_j a_{ij}²` for the support-restricted operator.
pub fn delta_a2_delta(spec: &OperatorSpec, i: usize) -> BigRational {
    let mut acc = BigRational::from_integer(BigInt::from(0));
    if !spec.support.get(i) {
        return acc;
    }
    let len = spec.dim();
    let n = spec.table.n_at(i);
    for &p in spec.pw.primes() {
        let pu = p as usize;
        let w = if n % p == 0 {
            BigRational::new(BigInt::from(p - 1), BigInt::from(p))
        } else {
            BigRational::new(BigInt::from(-1), BigInt::from(p))
        };
        let sq = &w * &w;
        if i >= pu && spec.support.get(i - pu) {
            acc += &sq;
        }
        if i + pu < len && spec.support.get(i + pu) {
            acc += &sq;
        }
    }
    acc
}

/// Smallest positive integer `n ≡ 0 (mod Π primes)` lying in `(lo, hi]`,
/// used to plant a vertex with prescribed prime divisors.
pub fn plant_multiple(primes: &[u64], lo: u64, hi: u64) -> Option<u64> {
    let m = primes.iter().fold(BigInt::from(1), |acc, &p| acc.lcm(&BigInt::from(p)));
    let m = m.to_u64()?;
    let n = (lo / m + 1) * m;
    (n <= hi).then_some(n)
}

/// `|x|` of an exact rational as a double.
pub fn abs_f64(r: &BigRational) -> f64 {
    r.abs().to_f64().unwrap_or(f64::NAN)
}
