//! Chowla-type correlations of the Liouville function.
//!
//! Every sum over `n` is evaluated exactly by streaming segments of
//! [`SEGMENT`] integers through the Ω sieve, with one integer of overlap so
//! that `f₂(n+1)` is available at segment edges. Integrals of the step
//! functions `S(t)` and `Z(t)` are evaluated piece by piece on their exact
//! breakpoints, so no quadrature error enters.
//!
//! The functions here cover logarithmic averages, the weighted-average
//! identity relating them to `Z(T)`, averages of `|S(t)|` over scales and
//! their `Z°` counterpart, counts `π_k`, the shifted double sum over primes
//! with Ω restrictions, exponential sums over primes in a dyadic range, and
//! sampled short-interval sums of λ.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arith::{big_omega_segment, isqrt, primes_up_to, PrimeWindow};
use crate::error::{capacity, param, DivlabError, Result};

/// Segment length for streamed sieving.
pub const SEGMENT: usize = 1 << 22;
/// Largest `x` accepted by the streamed sums.
pub const MAX_X: u64 = 1 << 40;
/// Constant in the asserted residual bound `C · log H / 𝓛`.
pub const RADARO_CONSTANT: f64 = 10.0;

/// An arithmetic function of `Ω(n)` with values in `{−1, 0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithFn {
    Constant,
    Liouville,
    /// `1` when `lo ≤ Ω(n) ≤ hi`, else `0`.
    OmegaIndicator { lo: u8, hi: u8 },
    /// `λ(n)` when `lo ≤ Ω(n) ≤ hi`, else `0`.
    LiouvilleOmega { lo: u8, hi: u8 },
}

impl ArithFn {
    #[inline]
    pub fn eval(self, omega: u8) -> i32 {
        let sign = if omega % 2 == 0 { 1 } else { -1 };
        match self {
            ArithFn::Constant => 1,
            ArithFn::Liouville => sign,
            ArithFn::OmegaIndicator { lo, hi } => i32::from((lo..=hi).contains(&omega)),
            ArithFn::LiouvilleOmega { lo, hi } => {
                if (lo..=hi).contains(&omega) {
                    sign
                } else {
                    0
                }
            }
        }
    }
}

impl fmt::Display for ArithFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let range = |lo: u8, hi: u8| if lo == hi { lo.to_string() } else { format!("{lo}-{hi}") };
        match *self {
            ArithFn::Constant => write!(f, "constant"),
            ArithFn::Liouville => write!(f, "liouville"),
            ArithFn::OmegaIndicator { lo, hi } => write!(f, "omega:{}", range(lo, hi)),
            ArithFn::LiouvilleOmega { lo, hi } => write!(f, "liouville:{}", range(lo, hi)),
        }
    }
}

impl FromStr for ArithFn {
    type Err = DivlabError;

    /// Accepts `constant`, `liouville`, `omega:K`, `omega:LO-HI`,
    /// `liouville:K` and `liouville:LO-HI`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || DivlabError::Format(format!("unknown function kind `{s}`"));
        let range = |r: &str| -> Result<(u8, u8)> {
            let (lo, hi) = match r.split_once('-') {
                Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
                None => {
                    let k = r.trim().parse().map_err(|_| bad())?;
                    (k, k)
                }
            };
            if lo > hi {
                return Err(bad());
            }
            Ok((lo, hi))
        };
        match s.trim().split_once(':') {
            None => match s.trim() {
                "constant" => Ok(ArithFn::Constant),
                "liouville" => Ok(ArithFn::Liouville),
                _ => Err(bad()),
            },
            Some(("omega", r)) => range(r).map(|(lo, hi)| ArithFn::OmegaIndicator { lo, hi }),
            Some(("liouville", r)) => range(r).map(|(lo, hi)| ArithFn::LiouvilleOmega { lo, hi }),
            Some(_) => Err(bad()),
        }
    }
}

/// The summand `g(n) = f₁(n) f₂(n + shift)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Correlation {
    pub f1: ArithFn,
    pub f2: ArithFn,
    pub shift: u64,
}

impl Correlation {
    pub fn new(f1: ArithFn, f2: ArithFn) -> Self {
        Self { f1, f2, shift: 1 }
    }

    /// `λ(n) λ(n+1)`.
    pub fn chowla() -> Self {
        Self::new(ArithFn::Liouville, ArithFn::Liouville)
    }

    pub fn constant() -> Self {
        Self::new(ArithFn::Constant, ArithFn::Constant)
    }

    pub fn with_shift(self, shift: u64) -> Self {
        Self { shift, ..self }
    }
}

fn small_primes_for(hi: u64) -> Vec<u64> {
    primes_up_to(isqrt(hi) + 1)
}

/// `g(n)` for `n ∈ [lo, lo + len)`.
fn g_segment(corr: &Correlation, lo: u64, len: usize, small: &[u64]) -> Vec<i32> {
    let shift = corr.shift as usize;
    let mut om = vec![0u8; len + shift];
    big_omega_segment(lo, &mut om, small);
    (0..len).map(|i| corr.f1.eval(om[i]) * corr.f2.eval(om[i + shift])).collect()
}

/// Maps `f(segment_start, segment_len)` over segments covering `[lo, hi]`,
/// keeping segment order.
fn map_segments<T: Send>(lo: u64, hi: u64, f: impl Fn(u64, usize) -> T + Sync + Send) -> Vec<T> {
    if hi < lo {
        return Vec::new();
    }
    let count = (hi - lo) / SEGMENT as u64 + 1;
    (0..count)
        .into_par_iter()
        .map(|s| {
            let a = lo + s * SEGMENT as u64;
            let len = (hi - a + 1).min(SEGMENT as u64) as usize;
            f(a, len)
        })
        .collect()
}

/// Sequential stream of `g(n)` for consecutive `n`.
struct GStream<'a> {
    corr: &'a Correlation,
    small: &'a [u64],
    next_lo: u64,
    vals: Vec<i32>,
    pos: usize,
}

impl<'a> GStream<'a> {
    fn new(corr: &'a Correlation, small: &'a [u64], start: u64) -> Self {
        Self { corr, small, next_lo: start, vals: Vec::new(), pos: 0 }
    }

    #[inline]
    fn next_value(&mut self) -> i32 {
        if self.pos == self.vals.len() {
            self.vals = g_segment(self.corr, self.next_lo, SEGMENT, self.small);
            self.next_lo += SEGMENT as u64;
            self.pos = 0;
        }
        self.pos += 1;
        self.vals[self.pos - 1]
    }
}

fn check_scale(x: u64, w: f64) -> Result<()> {
    if !(w > std::f64::consts::E && w <= x as f64) {
        return param(format!("need e < w ≤ x, got w = {w}, x = {x}"));
    }
    if x > MAX_X {
        return capacity(format!("x above {MAX_X} exceeds the streaming budget"));
    }
    Ok(())
}

fn check_primes(pw: &PrimeWindow) -> Result<()> {
    if pw.is_empty() {
        return param("the prime set is empty");
    }
    Ok(())
}

/// A normalised average over scales with the exact ranges used.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleAverage {
    pub x: u64,
    pub w: f64,
    /// Normalised value (divided by `log w`).
    pub value: f64,
    /// Value before normalisation.
    pub raw: f64,
    /// Integers `n` (or scales `t`) covered, inclusive.
    pub range: (f64, f64),
    pub terms: u64,
    /// `1/√(log log w)`, the order of the asymptotic bound, for context.
    pub asymptotic: f64,
}

/// `(1/log w) Σ_{x/w < n ≤ x} f₁(n) f₂(n+shift) / n`, summed exactly.
pub fn chowla_log_average(x: u64, w: f64, corr: &Correlation) -> Result<ScaleAverage> {
    check_scale(x, w)?;
    let lo = (x as f64 / w).floor() as u64;
    let small = small_primes_for(x + SEGMENT as u64 + corr.shift);
    let parts = map_segments(lo + 1, x, |a, len| {
        let g = g_segment(corr, a, len, &small);
        g.iter().enumerate().map(|(i, &v)| v as f64 / (a + i as u64) as f64).sum::<f64>()
    });
    let raw: f64 = parts.iter().sum();
    Ok(ScaleAverage {
        x,
        w,
        value: raw / w.ln(),
        raw,
        range: ((lo + 1) as f64, x as f64),
        terms: x - lo,
        asymptotic: 1.0 / w.ln().ln().sqrt(),
    })
}

/// One grid point of a correlation series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    pub value: f64,
    pub n_terms: u64,
}

/// `Z(T)` or `Z°(T)` on a geometric grid over `[x/w, x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSeries {
    pub x: u64,
    pub w: f64,
    pub absolute: bool,
    pub primes: Vec<u64>,
    pub mertens: f64,
    pub points: Vec<SeriesPoint>,
}

impl CorrelationSeries {
    /// Tab-separated `T value n_terms` lines with a header.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("T\tvalue\tn_terms\n");
        for p in &self.points {
            out.push_str(&format!("{}\t{:.12e}\t{}\n", p.t, p.value, p.n_terms));
        }
        out
    }
}

/// Prefix sums `Σ_{m₀ < n ≤ m} g(n)` at sorted points `m`, where `m₀` is
/// the first point.
fn prefix_at(points: &[u64], corr: &Correlation) -> Vec<i64> {
    let Some(&first) = points.first() else {
        return Vec::new();
    };
    let last = *points.last().unwrap();
    let small = small_primes_for(last + SEGMENT as u64 + corr.shift);
    let mut stream = GStream::new(corr, &small, first + 1);
    let mut out = Vec::with_capacity(points.len());
    let (mut n, mut acc) = (first, 0i64);
    for &m in points {
        while n < m {
            acc += i64::from(stream.next_value());
            n += 1;
        }
        out.push(acc);
    }
    out
}

/// Evaluates `Z(T)` (signed) or `Z°(T)` (absolute) at `grid_points`
/// geometrically spaced scales in `[x/w, x]`. Inner sums are exact.
pub fn z_series(
    x: u64,
    w: f64,
    grid_points: usize,
    pw: &PrimeWindow,
    corr: &Correlation,
    absolute: bool,
) -> Result<CorrelationSeries> {
    check_scale(x, w)?;
    check_primes(pw)?;
    if grid_points < 8 {
        return param("at least 8 grid points are required");
    }
    let t0 = x as f64 / w;
    let grid: Vec<f64> =
        (0..grid_points).map(|i| t0 * w.powf(i as f64 / (grid_points - 1) as f64)).collect();
    let bounds = |t: f64, p: u64| ((t / p as f64).floor() as u64, (2.0 * t / p as f64).floor() as u64);
    let mut queries: Vec<u64> =
        grid.iter().flat_map(|&t| pw.primes().iter().flat_map(move |&p| [bounds(t, p).0, bounds(t, p).1])).collect();
    queries.sort_unstable();
    queries.dedup();
    let prefix = prefix_at(&queries, corr);
    let at = |m: u64| prefix[queries.binary_search(&m).unwrap()];
    let mertens = pw.mertens_f64();
    let points = grid
        .iter()
        .map(|&t| {
            let (mut total, mut n_terms) = (0f64, 0u64);
            for &p in pw.primes() {
                let (a, b) = bounds(t, p);
                let s = (at(b) - at(a)) as f64;
                total += if absolute { s.abs() } else { s };
                n_terms += b - a;
            }
            SeriesPoint { t, value: total / (t * mertens), n_terms }
        })
        .collect();
    Ok(CorrelationSeries { x, w, absolute, primes: pw.primes().to_vec(), mertens, points })
}

/// Both sides of the identity between the logarithmic sum and the
/// integral of `Z(t) dt/t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadaroReport {
    pub lhs: f64,
    pub integral: f64,
    pub residual: f64,
    /// `C · log H / 𝓛` with `C =` [`RADARO_CONSTANT`] and `H` the top of the
    /// prime window.
    pub bound: f64,
}

/// `|Σ_{x/w<n≤x} g(n)/n − ∫_{x/w}^x Z(t) dt/t|`, both sides exact, checked
/// against `10 · log H / 𝓛`.
///
/// The integral is taken prime by prime: `n` contributes
/// `g(n)(1/max(np/2, x/w) − 1/min(np, x))` whenever that interval is
/// non-empty.
pub fn radaro_residual(x: u64, w: f64, pw: &PrimeWindow, corr: &Correlation) -> Result<RadaroReport> {
    check_scale(x, w)?;
    check_primes(pw)?;
    let lhs = chowla_log_average(x, w, corr)?.raw;
    let xf = x as f64;
    let lo_t = xf / w;
    let primes = pw.primes();
    let n_lo = (lo_t / pw.max_prime() as f64).floor() as u64 + 1;
    let n_hi = (2.0 * xf / primes[0] as f64).ceil() as u64;
    let small = small_primes_for(n_hi + SEGMENT as u64 + corr.shift);
    let parts = map_segments(n_lo, n_hi, |a, len| {
        let g = g_segment(corr, a, len, &small);
        let mut per_prime = vec![0f64; primes.len()];
        for (i, &v) in g.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let n = (a + i as u64) as f64;
            for (j, &p) in primes.iter().enumerate() {
                let p = p as f64;
                let lo = (n * p / 2.0).max(lo_t);
                let hi = (n * p).min(xf);
                if lo < hi {
                    per_prime[j] += v as f64 * (hi - lo) / (lo * hi);
                }
            }
        }
        per_prime
    });
    let mertens = pw.mertens_f64();
    let integral: f64 = (0..primes.len())
        .map(|j| parts.iter().map(|pp| pp[j]).sum::<f64>())
        .sum::<f64>()
        / mertens;
    let residual = (lhs - integral).abs();
    let bound = RADARO_CONSTANT * (pw.h() as f64).ln() / mertens;
    if residual > bound {
        return Err(DivlabError::Verification {
            message: format!("weighted-average residual {residual} exceeds {bound}"),
            witness: vec![lhs, integral, residual],
        });
    }
    Ok(RadaroReport { lhs, integral, residual, bound })
}

/// `F(t) = ∫_{t₀}^{t} |S(u)| du/u` at sorted points `t ≥ t₀ = points[0]`,
/// where `S(u) = (1/u) Σ_{u<n≤2u} g(n)`.
///
/// On `[j/2, (j+1)/2)` the sum is the integer `C_j = Σ_{⌊j/2⌋<n≤j} g(n)`,
/// so each piece contributes `|C_j| (1/a − 1/b)` exactly.
pub fn abs_s_cumulative(points: &[f64], corr: &Correlation) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    if points.windows(2).any(|p| p[0] > p[1]) || points[0] < 1.0 {
        return param("points must be sorted and at least 1");
    }
    let t0 = points[0];
    let t_end = *points.last().unwrap();
    let j0 = (2.0 * t0).floor() as u64;
    let j_end = (2.0 * t_end).floor() as u64;
    let small = small_primes_for(j_end + 2 * SEGMENT as u64 + corr.shift);
    let mut add = GStream::new(corr, &small, j0 / 2 + 1);
    let mut remove = GStream::new(corr, &small, j0 / 2 + 1);
    let mut c: i64 = 0;
    for _ in j0 / 2 + 1..=j0 {
        c += i64::from(add.next_value());
    }
    let mut out = Vec::with_capacity(points.len());
    let mut next = 0;
    let mut acc = 0f64;
    let mut j = j0;
    loop {
        let a = (j as f64 / 2.0).max(t0);
        let b = (j + 1) as f64 / 2.0;
        let weight = c.unsigned_abs() as f64;
        while next < points.len() && points[next] < b {
            let pt = points[next];
            out.push(acc + weight * (pt - a) / (a * pt));
            next += 1;
        }
        if next == points.len() {
            break;
        }
        acc += weight * (b - a) / (a * b);
        j += 1;
        c += i64::from(add.next_value());
        if j % 2 == 0 {
            c -= i64::from(remove.next_value());
        }
    }
    Ok(out)
}

/// The average of `|S(t)|` over scales together with its `Z°` counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct CocotReport {
    /// `(1/log w) ∫_{x/w}^x |S(t)| dt/t`.
    pub average: ScaleAverage,
    /// `∫_{x/w}^x Z°(T) dT/T`.
    pub zcirc_integral: f64,
    /// `|∫|S| dt/t − ∫ Z° dT/T|`.
    pub residual: f64,
    /// `log H`, the order of the slack in the identity.
    pub slack: f64,
}

/// `(1/log w) ∫_{x/w}^x |S(t)| dt/t` and `∫ Z°(T) dT/T` computed from the
/// same exact cumulative integral of `|S|`.
pub fn scale_average_abs(x: u64, w: f64, pw: &PrimeWindow, corr: &Correlation) -> Result<CocotReport> {
    check_scale(x, w)?;
    check_primes(pw)?;
    let xf = x as f64;
    let mut pts: Vec<f64> = vec![xf / w, xf];
    for &p in pw.primes() {
        pts.push(xf / (w * p as f64));
        pts.push(xf / p as f64);
    }
    if pts.iter().any(|&t| t < 1.0) {
        return param("x/(wH) must be at least 1");
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let cum = abs_s_cumulative(&pts, corr)?;
    let f_at = |t: f64| cum[pts.iter().position(|&q| q == t).expect("queried point")];
    let raw = f_at(xf) - f_at(xf / w);
    let zcirc_integral = pw
        .primes()
        .iter()
        .map(|&p| (f_at(xf / p as f64) - f_at(xf / (w * p as f64))) / p as f64)
        .sum::<f64>()
        / pw.mertens_f64();
    Ok(CocotReport {
        average: ScaleAverage {
            x,
            w,
            value: raw / w.ln(),
            raw,
            range: (xf / w, xf),
            terms: 2 * x,
            asymptotic: 1.0 / w.ln().ln().sqrt(),
        },
        zcirc_integral,
        residual: (raw - zcirc_integral).abs(),
        slack: (pw.h() as f64).ln(),
    })
}

/// Counts of `n` in a window by `Ω(n)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiCounts {
    /// `counts[k] = #{n : Ω(n) = k}` for `0 ≤ k ≤ k_max`.
    pub counts: Vec<u64>,
    /// Integers with `Ω(n) > k_max`.
    pub above: u64,
}

impl PiCounts {
    pub fn get(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.above
    }
}

/// `π_k` over the window `(start, start + len]` for `k ≤ k_max`.
pub fn pi_k_counts(start: u64, len: u64, k_max: usize) -> Result<PiCounts> {
    if start.checked_add(len).is_none_or(|e| e > MAX_X) {
        return capacity("window end exceeds the streaming budget");
    }
    let small = small_primes_for(start + len + 1);
    let parts = map_segments(start + 1, start + len, |a, l| {
        let mut om = vec![0u8; l];
        big_omega_segment(a, &mut om, &small);
        let mut hist = [0u64; 64];
        for o in om {
            hist[o as usize] += 1;
        }
        hist
    });
    let mut hist = [0u64; 64];
    for h in parts {
        for (t, v) in hist.iter_mut().zip(h) {
            *t += v;
        }
    }
    let cut = (k_max + 1).min(64);
    Ok(PiCounts { counts: hist[..cut].to_vec(), above: hist[cut..].iter().sum() })
}

/// The double sum over primes with Ω fixed at `n` and `n + p`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComReport {
    pub n: u64,
    pub k: u8,
    pub l: u8,
    /// `Σ_p (1/p) #{n ∈ (N, 2N] : Ω(n) = k, Ω(n+p) = ℓ}`.
    pub lhs: f64,
    /// Per-prime counts, in the order of the prime window.
    pub counts: Vec<u64>,
    pub pi_k: u64,
    pub pi_l: u64,
    /// `𝓛 π_k π_ℓ / N`.
    pub main_term: f64,
    /// `lhs / main_term`, absent when the main term vanishes.
    pub ratio: Option<f64>,
}

/// Exact double sum over `𝐍 = (N, 2N]` against `𝓛 π_k(N) π_ℓ(N)/N`.
pub fn com_double_sum(n: u64, pw: &PrimeWindow, k: u8, l: u8) -> Result<ComReport> {
    check_primes(pw)?;
    if n == 0 {
        return param("N must be positive");
    }
    let h = pw.max_prime();
    if 2 * n + h > MAX_X {
        return capacity("window end exceeds the streaming budget");
    }
    let primes = pw.primes();
    let small = small_primes_for(2 * n + h + SEGMENT as u64);
    let parts = map_segments(n + 1, 2 * n, |a, len| {
        let mut om = vec![0u8; len + h as usize];
        big_omega_segment(a, &mut om, &small);
        let mut counts = vec![0u64; primes.len()];
        let (mut pk, mut pl) = (0u64, 0u64);
        for i in 0..len {
            pl += u64::from(om[i] == l);
            if om[i] == k {
                pk += 1;
                for (j, &p) in primes.iter().enumerate() {
                    counts[j] += u64::from(om[i + p as usize] == l);
                }
            }
        }
        (counts, pk, pl)
    });
    let mut counts = vec![0u64; primes.len()];
    let (mut pi_k, mut pi_l) = (0u64, 0u64);
    for (c, a, b) in parts {
        for (t, v) in counts.iter_mut().zip(c) {
            *t += v;
        }
        pi_k += a;
        pi_l += b;
    }
    let lhs: f64 = counts.iter().zip(primes).map(|(&c, &p)| c as f64 / p as f64).sum();
    let main_term = pw.mertens_f64() * pi_k as f64 * pi_l as f64 / n as f64;
    let ratio = (main_term > 0.0).then(|| lhs / main_term);
    Ok(ComReport { n, k, l, lhs, counts, pi_k, pi_l, main_term, ratio })
}

/// Diagnostics of `Q(α) = Σ_{q∈𝐐} e(qα)/q` for primes in `[H/2, H]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseReport {
    pub h: u64,
    pub epsilon: f64,
    /// `𝒬 = Σ 1/q`.
    pub q_sum: f64,
    /// `δ = 𝒬 log H`.
    pub delta: f64,
    /// `|Q(j/M)|` for `0 ≤ j < M`.
    pub q_abs: Vec<f64>,
    /// Fraction of grid points with `|Q| > ε𝒬`.
    pub major_arc_measure: f64,
    /// `∫₀¹ |Q|⁴` by the convolution identity.
    pub fourth_moment: f64,
    /// `(1/M) Σ_j |Q(j/M)|⁴`.
    pub fourth_moment_grid: f64,
    /// `100 / (H log⁴ H)`.
    pub fourth_moment_bound: f64,
    /// `100 / ((εδ)⁴ H)`.
    pub measure_bound: f64,
}

/// Evaluates `Q` on a grid of `grid` points, the measure of the set where
/// `|Q| > ε𝒬`, and the fourth moment both exactly and on the grid.
pub fn prime_phase_diagnostics(pw: &PrimeWindow, epsilon: f64, grid: usize) -> Result<PhaseReport> {
    check_primes(pw)?;
    let h = pw.h();
    if 2 * pw.h0() < h {
        return param(format!("primes must lie in [H/2, H]; got [{}, {h}]", pw.h0()));
    }
    if (grid as u64) < 8 * h {
        return param(format!("grid of {grid} points is coarser than 8H = {}", 8 * h));
    }
    if epsilon <= 0.0 {
        return param("epsilon must be positive");
    }
    let primes = pw.primes();
    let q_sum: f64 = primes.iter().map(|&q| 1.0 / q as f64).sum();
    let q_abs: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|j| {
            let z: Complex64 = primes
                .iter()
                .map(|&q| {
                    let phase = 2.0 * std::f64::consts::PI * ((q as u128 * j as u128) % grid as u128) as f64
                        / grid as f64;
                    Complex64::from_polar(1.0 / q as f64, phase)
                })
                .sum();
            z.norm()
        })
        .collect();
    let major_arc_measure = q_abs.iter().filter(|&&v| v > epsilon * q_sum).count() as f64 / grid as f64;
    let fourth_moment_grid = q_abs.iter().map(|v| v.powi(4)).sum::<f64>() / grid as f64;
    let mut r = vec![0f64; 2 * h as usize + 1];
    for &p in primes {
        for &q in primes {
            r[(q as i64 - p as i64 + h as i64) as usize] += 1.0 / (p as f64 * q as f64);
        }
    }
    let fourth_moment = r.iter().map(|v| v * v).sum();
    let hf = h as f64;
    let delta = q_sum * hf.ln();
    Ok(PhaseReport {
        h,
        epsilon,
        q_sum,
        delta,
        q_abs,
        major_arc_measure,
        fourth_moment,
        fourth_moment_grid,
        fourth_moment_bound: 100.0 / (hf * hf.ln().powi(4)),
        measure_bound: 100.0 / ((epsilon * delta).powi(4) * hf),
    })
}

/// Sampled averages `|Σ_{t<m≤t+2h} f(m)| / 2h` for `t` uniform in `(x, 2x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShortIntervalStats {
    pub x: u64,
    pub h: u64,
    pub seed: u64,
    pub values: Vec<f64>,
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

/// Short-interval averages of `f` (λ, or the constant function as a
/// diagnostic), sampled with a seeded generator.
pub fn short_interval_lambda(x: u64, h: u64, samples: usize, seed: u64, f: ArithFn) -> Result<ShortIntervalStats> {
    if h == 0 || 2 * h > x {
        return param("need 1 ≤ h and 2h ≤ x");
    }
    if samples == 0 {
        return param("at least one sample is required");
    }
    if 2 * x + 2 * h > MAX_X {
        return capacity("interval end exceeds the streaming budget");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<u64> = (0..samples).map(|_| rng.random_range(x + 1..=2 * x)).collect();
    let mut pts: Vec<u64> = starts.iter().flat_map(|&t| [t, t + 2 * h]).collect();
    pts.sort_unstable();
    pts.dedup();
    // Summing f(n)·1 through the correlation machinery.
    let corr = Correlation { f1: f, f2: ArithFn::Constant, shift: 0 };
    let prefix = prefix_at(&pts, &corr);
    let at = |m: u64| prefix[pts.binary_search(&m).unwrap()];
    let values: Vec<f64> =
        starts.iter().map(|&t| (at(t + 2 * h) - at(t)).unsigned_abs() as f64 / (2 * h) as f64).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let p95 = sorted[((0.95 * samples as f64).ceil() as usize).clamp(1, samples) - 1];
    Ok(ShortIntervalStats {
        x,
        h,
        seed,
        mean: values.iter().sum::<f64>() / samples as f64,
        p95,
        max: *sorted.last().unwrap(),
        values,
    })
}
