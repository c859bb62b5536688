//! Exact solution counts for Vinogradov systems.
//!
//! `J_{s,n}(N)` is computed three ways: brute force over all `2s`-tuples
//! ([`count_naive`]), as the sum of squared representation numbers
//! ([`count_mitm`]), and by exact grid quadrature of `|F|^{2s}` (see
//! [`crate::expsum::torus_integral_power`]). [`count_real`] handles the
//! inequality version for real, 1-separated point sets.

use std::collections::{BTreeMap, HashMap};
use std::hash::{BuildHasherDefault, Hash, Hasher};
use std::io::{Read, Write};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Instance, PowerSumKey};
use crate::error::{Error, Result};
use crate::fit::{fit_log_log, LineFit};
use crate::rational::{self, Rational};

/// Hard limits for the counting routines. Exceeding one is an error, never a
/// silent truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountBudget {
    /// Tuples enumerated by brute force (`N^{2s}` for [`count_naive`]).
    pub max_tuples: u128,
    /// Key additions performed by the meet-in-the-middle convolution.
    pub max_work: u128,
    /// Histogram entries held in memory at once.
    pub max_entries: u128,
}

impl Default for CountBudget {
    fn default() -> Self {
        Self {
            max_tuples: 1_000_000_000,
            max_work: 20_000_000_000,
            max_entries: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitmStrategy {
    Hash,
    SortMerge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitmConfig {
    pub strategy: MitmStrategy,
    /// Number of independent work units the final level is split into.
    pub partitions: usize,
    pub budget: CountBudget,
}

impl Default for MitmConfig {
    fn default() -> Self {
        Self {
            strategy: MitmStrategy::Hash,
            partitions: 16,
            budget: CountBudget::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// brute force

trait Signed128: Clone + Send + Sync {
    fn from_i64(v: i64) -> Self;
    fn add_assign(&mut self, o: &Self);
    fn sub_assign(&mut self, o: &Self);
    fn is_zero(&self) -> bool;
    fn mul(&self, o: &Self) -> Self;
}

impl Signed128 for i128 {
    fn from_i64(v: i64) -> Self {
        v as i128
    }
    fn add_assign(&mut self, o: &Self) {
        *self += o;
    }
    fn sub_assign(&mut self, o: &Self) {
        *self -= o;
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
}

impl Signed128 for BigInt {
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
    fn add_assign(&mut self, o: &Self) {
        *self += o;
    }
    fn sub_assign(&mut self, o: &Self) {
        *self -= o;
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
}

/// `J_{s,n}(N)` by enumerating all `N^{2s}` tuples.
pub fn count_naive(inst: &Instance, budget: &CountBudget) -> Result<u128> {
    count_naive_range(inst.n(), inst.s(), 1, inst.range as i64, budget)
}

/// Solutions with every variable in `{lo, …, hi}`.
pub fn count_naive_range(n: usize, s: usize, lo: i64, hi: i64, budget: &CountBudget) -> Result<u128> {
    if n < 1 || s < 1 || lo > hi {
        return Err(Error::invalid("count_naive_range needs n ≥ 1, s ≥ 1 and lo ≤ hi"));
    }
    let width = (hi as i128 - lo as i128 + 1) as u128;
    let tuples = width.checked_pow(2 * s as u32).unwrap_or(u128::MAX);
    if tuples > budget.max_tuples {
        return Err(Error::budget("naive enumeration (tuples)", tuples, budget.max_tuples));
    }
    let max_abs = lo.unsigned_abs().max(hi.unsigned_abs()) as f64;
    let bound = (s as f64).log2() + n as f64 * max_abs.max(1.0).log2();
    if bound < 120.0 {
        Ok(naive_generic::<i128>(n, s, lo, hi))
    } else {
        Ok(naive_generic::<BigInt>(n, s, lo, hi))
    }
}

fn naive_generic<T: Signed128>(n: usize, s: usize, lo: i64, hi: i64) -> u128 {
    let powers: Vec<Vec<T>> = (lo..=hi)
        .map(|x| {
            let base = T::from_i64(x);
            let mut out = Vec::with_capacity(n);
            let mut p = base.clone();
            for _ in 0..n {
                out.push(p.clone());
                p = p.mul(&base);
            }
            out
        })
        .collect();
    let mut diff = vec![T::from_i64(0); n];
    fn recurse<T: Signed128>(depth: usize, s: usize, powers: &[Vec<T>], diff: &mut [T]) -> u128 {
        if depth == 2 * s {
            return diff.iter().all(|d| d.is_zero()) as u128;
        }
        let mut total = 0;
        for p in powers {
            for (d, v) in diff.iter_mut().zip(p) {
                if depth < s {
                    d.add_assign(v)
                } else {
                    d.sub_assign(v)
                }
            }
            total += recurse(depth + 1, s, powers, diff);
            for (d, v) in diff.iter_mut().zip(p) {
                if depth < s {
                    d.sub_assign(v)
                } else {
                    d.add_assign(v)
                }
            }
        }
        total
    }
    recurse(0, s, &powers, &mut diff)
}

// ---------------------------------------------------------------------------
// packed keys

/// Multiplicative hash for packed keys; the keys are already well mixed in
/// their low digits, so a full SipHash round is wasted work.
#[derive(Default, Clone, Copy)]
struct MixHasher(u64);

impl Hasher for MixHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(buf));
        }
    }
    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0.rotate_left(5) ^ v).wrapping_mul(0x517c_c1b7_2722_0a95);
    }
    fn write_u128(&mut self, v: u128) {
        self.write_u64(v as u64);
        self.write_u64((v >> 64) as u64);
    }
    fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }
}

type MixMap<K> = HashMap<K, u64, BuildHasherDefault<MixHasher>>;

trait PackedKey: Clone + Ord + Eq + Hash + Send + Sync {
    fn plus(&self, other: &Self) -> Self;
    fn to_biguint(&self) -> BigUint;
}

impl PackedKey for u128 {
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn to_biguint(&self) -> BigUint {
        BigUint::from(*self)
    }
}

impl PackedKey for BigUint {
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn to_biguint(&self) -> BigUint {
        self.clone()
    }
}

/// Mixed-radix packing of `(v_2, …, v_n)` into one integer. Digit `i` has
/// radix `s N^i + 1`, so adding the packed keys of up to `s` values never
/// carries; `v_2` is the most significant digit, making integer order equal
/// lexicographic order. `v_1` is carried separately as the slice index.
struct Codec {
    n: usize,
    /// radices for v_2..v_n
    radices: Vec<BigUint>,
    /// place values for v_2..v_n
    places: Vec<BigUint>,
}

impl Codec {
    fn new(n: usize, s: usize, range: u64) -> Self {
        let big_n = BigUint::from(range);
        let radices: Vec<BigUint> = (2..=n)
            .map(|i| BigUint::from(s) * num_traits::pow(big_n.clone(), i) + BigUint::one())
            .collect();
        let mut places = vec![BigUint::one(); radices.len()];
        for k in (0..radices.len().saturating_sub(1)).rev() {
            places[k] = &places[k + 1] * &radices[k + 1];
        }
        Self {
            n,
            radices,
            places,
        }
    }

    fn capacity(&self) -> BigUint {
        self.radices.iter().fold(BigUint::one(), |acc, r| acc * r)
    }

    fn fits_u128(&self) -> bool {
        self.capacity().bits() <= 127
    }

    fn single_big(&self, x: u64) -> BigUint {
        let bx = BigUint::from(x);
        let mut p = &bx * &bx;
        let mut key = BigUint::zero();
        for place in &self.places {
            key += &p * place;
            p *= &bx;
        }
        key
    }

    fn decode(&self, v1: u64, key: &BigUint) -> PowerSumKey {
        let mut coords = Vec::with_capacity(self.n);
        coords.push(BigInt::from(v1));
        let mut rest = key.clone();
        for place in &self.places {
            let (q, r) = rest.div_rem(place);
            coords.push(BigInt::from(q));
            rest = r;
        }
        PowerSumKey(coords)
    }
}

/// Histogram of all `k`-tuples, split by `v_1`; slice `i` holds `v_1 = k + i`
/// sorted by packed key.
struct Level<K> {
    k: usize,
    slices: Vec<Vec<(K, u64)>>,
}

impl<K: PackedKey> Level<K> {
    fn base(singles: &[K]) -> Self {
        Self {
            k: 1,
            slices: singles.iter().map(|key| vec![(key.clone(), 1)]).collect(),
        }
    }

    fn slice(&self, v1: u64, range: u64) -> Option<&[(K, u64)]> {
        let lo = self.k as u64;
        let hi = self.k as u64 * range;
        (v1 >= lo && v1 <= hi).then(|| self.slices[(v1 - lo) as usize].as_slice())
    }

    /// Slice `v1` of the level above this one.
    fn next_slice(&self, v1: u64, singles: &[K], range: u64, strategy: MitmStrategy) -> Vec<(K, u64)> {
        match strategy {
            MitmStrategy::Hash => {
                let mut acc: MixMap<K> = MixMap::default();
                for x in 1..=range.min(v1.saturating_sub(1)) {
                    if let Some(prev) = self.slice(v1 - x, range) {
                        let shift = &singles[(x - 1) as usize];
                        for (key, m) in prev {
                            *acc.entry(key.plus(shift)).or_insert(0) += m;
                        }
                    }
                }
                let mut out: Vec<(K, u64)> = acc.into_iter().collect();
                out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
                out
            }
            MitmStrategy::SortMerge => {
                let mut all = Vec::new();
                for x in 1..=range.min(v1.saturating_sub(1)) {
                    if let Some(prev) = self.slice(v1 - x, range) {
                        let shift = &singles[(x - 1) as usize];
                        all.extend(prev.iter().map(|(key, m)| (key.plus(shift), *m)));
                    }
                }
                all.sort_unstable_by(|a, b| a.0.cmp(&b.0));
                let mut out: Vec<(K, u64)> = Vec::with_capacity(all.len());
                for (key, m) in all {
                    match out.last_mut() {
                        Some(last) if last.0 == key => last.1 += m,
                        _ => out.push((key, m)),
                    }
                }
                out
            }
        }
    }

    fn next(&self, singles: &[K], range: u64, strategy: MitmStrategy) -> Level<K> {
        let k = self.k + 1;
        let slices = (k as u64..=k as u64 * range)
            .into_par_iter()
            .map(|v1| self.next_slice(v1, singles, range, strategy))
            .collect();
        Level { k, slices }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Distinct multisets of size `k` from `{1..N}`: an upper bound on the
/// number of keys in the `k`-tuple histogram.
fn multisets(range: u64, k: usize) -> u128 {
    binomial(range as u128 + k as u128 - 1, k as u128)
}

fn check_mitm_budget(inst: &Instance, budget: &CountBudget, materialize_last: bool) -> Result<()> {
    let s = inst.s();
    let work: u128 = (1..s).map(|k| multisets(inst.range, k).saturating_mul(inst.range as u128)).sum();
    if work > budget.max_work {
        return Err(Error::budget("meet-in-the-middle key additions", work, budget.max_work));
    }
    let held = if materialize_last {
        multisets(inst.range, s)
    } else {
        multisets(inst.range, s.saturating_sub(1).max(1))
    };
    if held > budget.max_entries {
        return Err(Error::budget("histogram entries", held, budget.max_entries));
    }
    Ok(())
}

fn build_levels<K: PackedKey>(singles: &[K], inst: &Instance, upto: usize, strategy: MitmStrategy) -> Level<K> {
    let mut level = Level::base(singles);
    while level.k < upto {
        level = level.next(singles, inst.range, strategy);
    }
    level
}

fn mitm_generic<K: PackedKey>(singles: Vec<K>, inst: &Instance, cfg: &MitmConfig) -> u128 {
    let s = inst.s();
    let range = inst.range;
    if s == 1 {
        return range as u128;
    }
    let below = build_levels(&singles, inst, s - 1, cfg.strategy);
    let lo = s as u64;
    let hi = s as u64 * range;
    let total = hi - lo + 1;
    let parts = (cfg.partitions.max(1) as u64).min(total);
    (0..parts)
        .into_par_iter()
        .map(|p| {
            let start = lo + p * total / parts;
            let end = lo + (p + 1) * total / parts;
            (start..end)
                .map(|v1| {
                    below
                        .next_slice(v1, &singles, range, cfg.strategy)
                        .iter()
                        .map(|(_, m)| (*m as u128) * (*m as u128))
                        .sum::<u128>()
                })
                .sum::<u128>()
        })
        .sum()
}

/// `J_{s,n}(N) = Σ_v r_s(v)²`, with `r_s` built slice by slice.
pub fn count_mitm(inst: &Instance, cfg: &MitmConfig) -> Result<u128> {
    check_mitm_budget(inst, &cfg.budget, false)?;
    let codec = Codec::new(inst.n(), inst.s(), inst.range);
    if codec.fits_u128() {
        let singles = (1..=inst.range).map(|x| codec.single_big(x).to_u128().expect("fits")).collect();
        Ok(mitm_generic::<u128>(singles, inst, cfg))
    } else {
        let singles = (1..=inst.range).map(|x| codec.single_big(x)).collect();
        Ok(mitm_generic::<BigUint>(singles, inst, cfg))
    }
}

/// Map from power-sum vector to the number of ordered `s`-tuples realizing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepresentationHistogram {
    pub instance: Instance,
    pub entries: BTreeMap<PowerSumKey, u64>,
}

impl RepresentationHistogram {
    pub fn total_mass(&self) -> u128 {
        self.entries.values().map(|&m| m as u128).sum()
    }

    pub fn sum_of_squares(&self) -> u128 {
        self.entries.values().map(|&m| (m as u128) * (m as u128)).sum()
    }

    pub fn keys_within_bounds(&self) -> bool {
        let s = self.instance.multiplicity as u64;
        self.entries.keys().all(|k| k.within_bounds(s, self.instance.range))
    }
}

fn histogram_generic<K: PackedKey>(singles: Vec<K>, codec: &Codec, inst: &Instance, cfg: &MitmConfig) -> RepresentationHistogram {
    let level = build_levels(&singles, inst, inst.s(), cfg.strategy);
    let mut entries = BTreeMap::new();
    for (i, slice) in level.slices.iter().enumerate() {
        let v1 = level.k as u64 + i as u64;
        for (key, m) in slice {
            entries.insert(codec.decode(v1, &key.to_biguint()), *m);
        }
    }
    RepresentationHistogram {
        instance: *inst,
        entries,
    }
}

pub fn representation_histogram(inst: &Instance, cfg: &MitmConfig) -> Result<RepresentationHistogram> {
    check_mitm_budget(inst, &cfg.budget, true)?;
    let codec = Codec::new(inst.n(), inst.s(), inst.range);
    if codec.fits_u128() {
        let singles = (1..=inst.range).map(|x| codec.single_big(x).to_u128().expect("fits")).collect();
        Ok(histogram_generic::<u128>(singles, &codec, inst, cfg))
    } else {
        let singles = (1..=inst.range).map(|x| codec.single_big(x)).collect();
        Ok(histogram_generic::<BigUint>(singles, &codec, inst, cfg))
    }
}

// ---------------------------------------------------------------------------
// spill files
//
// Layout, all integers little-endian:
//   magic        8 bytes  "VHSPILL1"
//   n            u32
//   s            u32
//   N            u64
//   coord_width  u32      bytes per key coordinate
//   records      u64
// followed by `records` entries of n unsigned coordinates, each
// `coord_width` bytes, and a u64 multiplicity. Entries are sorted
// lexicographically by key; equal keys may repeat and are summed on read.

const SPILL_MAGIC: &[u8; 8] = b"VHSPILL1";

fn spill_coord_width(inst: &Instance) -> u32 {
    let cap = BigUint::from(inst.multiplicity) * num_traits::pow(BigUint::from(inst.range), inst.n());
    cap.bits().div_ceil(8).max(1) as u32
}

fn io_err(e: std::io::Error) -> Error {
    Error::invalid(format!("spill file i/o: {e}"))
}

fn write_spill_header(w: &mut impl Write, inst: &Instance, width: u32, records: u64) -> Result<()> {
    w.write_all(SPILL_MAGIC).map_err(io_err)?;
    w.write_all(&inst.degree.to_le_bytes()).map_err(io_err)?;
    w.write_all(&inst.multiplicity.to_le_bytes()).map_err(io_err)?;
    w.write_all(&inst.range.to_le_bytes()).map_err(io_err)?;
    w.write_all(&width.to_le_bytes()).map_err(io_err)?;
    w.write_all(&records.to_le_bytes()).map_err(io_err)
}

fn write_spill_record(w: &mut impl Write, key: &PowerSumKey, m: u64, width: u32) -> Result<()> {
    for c in &key.0 {
        let mut bytes = c.to_biguint().ok_or_else(|| Error::invalid("negative key coordinate"))?.to_bytes_le();
        if bytes.len() > width as usize {
            return Err(Error::invalid("key coordinate wider than the spill record"));
        }
        bytes.resize(width as usize, 0);
        w.write_all(&bytes).map_err(io_err)?;
    }
    w.write_all(&m.to_le_bytes()).map_err(io_err)
}

/// Writes the histogram in spill format.
pub fn write_spill(hist: &RepresentationHistogram, w: &mut impl Write) -> Result<()> {
    let width = spill_coord_width(&hist.instance);
    write_spill_header(w, &hist.instance, width, hist.entries.len() as u64)?;
    for (key, &m) in &hist.entries {
        write_spill_record(w, key, m, width)?;
    }
    w.flush().map_err(io_err)
}

/// Streams the full `s`-tuple histogram to `w` one `v_1` slice at a time,
/// without holding the whole histogram. Returns the number of records.
pub fn spill_histogram(inst: &Instance, cfg: &MitmConfig, w: &mut impl Write) -> Result<u64> {
    check_mitm_budget(inst, &cfg.budget, false)?;
    let codec = Codec::new(inst.n(), inst.s(), inst.range);
    let singles: Vec<BigUint> = (1..=inst.range).map(|x| codec.single_big(x)).collect();
    let width = spill_coord_width(inst);
    let s = inst.s();
    let slices: Box<dyn Fn(u64) -> Vec<(BigUint, u64)>> = if s == 1 {
        let singles = singles.clone();
        Box::new(move |v1| vec![(singles[(v1 - 1) as usize].clone(), 1)])
    } else {
        let below = build_levels(&singles, inst, s - 1, cfg.strategy);
        let singles = singles.clone();
        let range = inst.range;
        let strategy = cfg.strategy;
        Box::new(move |v1| below.next_slice(v1, &singles, range, strategy))
    };
    let mut body = Vec::new();
    let mut records = 0u64;
    for v1 in s as u64..=s as u64 * inst.range {
        for (key, m) in slices(v1) {
            write_spill_record(&mut body, &codec.decode(v1, &key), m, width)?;
            records += 1;
        }
    }
    write_spill_header(w, inst, width, records)?;
    w.write_all(&body).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(records)
}

struct SpillReader<R: Read> {
    inner: R,
    instance: Instance,
    width: u32,
    remaining: u64,
}

impl<R: Read> SpillReader<R> {
    fn open(mut inner: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        inner.read_exact(&mut magic).map_err(io_err)?;
        if &magic != SPILL_MAGIC {
            return Err(Error::invalid("not a histogram spill file"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        inner.read_exact(&mut b4).map_err(io_err)?;
        let n = u32::from_le_bytes(b4);
        inner.read_exact(&mut b4).map_err(io_err)?;
        let s = u32::from_le_bytes(b4);
        inner.read_exact(&mut b8).map_err(io_err)?;
        let range = u64::from_le_bytes(b8);
        inner.read_exact(&mut b4).map_err(io_err)?;
        let width = u32::from_le_bytes(b4);
        inner.read_exact(&mut b8).map_err(io_err)?;
        let remaining = u64::from_le_bytes(b8);
        Ok(Self {
            inner,
            instance: Instance::new(n, s, range)?,
            width,
            remaining,
        })
    }

    fn next_record(&mut self) -> Result<Option<(PowerSumKey, u64)>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        self.remaining -= 1;
        let mut coords = Vec::with_capacity(self.instance.n());
        let mut buf = vec![0u8; self.width as usize];
        for _ in 0..self.instance.n() {
            self.inner.read_exact(&mut buf).map_err(io_err)?;
            coords.push(BigInt::from(BigUint::from_bytes_le(&buf)));
        }
        let mut b8 = [0u8; 8];
        self.inner.read_exact(&mut b8).map_err(io_err)?;
        Ok(Some((PowerSumKey(coords), u64::from_le_bytes(b8))))
    }
}

pub fn read_spill(r: impl Read) -> Result<RepresentationHistogram> {
    let mut reader = SpillReader::open(r)?;
    let mut entries = BTreeMap::new();
    while let Some((key, m)) = reader.next_record()? {
        *entries.entry(key).or_insert(0) += m;
    }
    Ok(RepresentationHistogram {
        instance: reader.instance,
        entries,
    })
}

/// `Σ m²` over a sorted spill stream, merging runs of equal keys.
pub fn count_from_spill(r: impl Read) -> Result<u128> {
    let mut reader = SpillReader::open(r)?;
    let mut total = 0u128;
    let mut current: Option<(PowerSumKey, u128)> = None;
    while let Some((key, m)) = reader.next_record()? {
        match &mut current {
            Some((k, acc)) if *k == key => *acc += m as u128,
            Some((k, acc)) => {
                if key < *k {
                    return Err(Error::invalid("spill records are not sorted"));
                }
                total += *acc * *acc;
                current = Some((key, m as u128));
            }
            None => current = Some((key, m as u128)),
        }
    }
    if let Some((_, acc)) = current {
        total += acc * acc;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// real separated points

/// Reals `X_1, …, X_N` with `i − 1 < X_i ≤ i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedPointSet {
    points: Vec<Rational>,
}

impl SeparatedPointSet {
    pub fn new(points: Vec<Rational>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("a separated point set needs at least one point"));
        }
        for (i, x) in points.iter().enumerate() {
            let upper = rational::int(i as i64 + 1);
            let lower = rational::int(i as i64);
            if !(*x > lower && *x <= upper) {
                return Err(Error::invalid(format!(
                    "point {} = {} is outside ({}, {}]",
                    i + 1,
                    rational::to_exact_string(x),
                    i,
                    i + 1
                )));
            }
        }
        Ok(Self { points })
    }

    /// Points given as doubles, converted exactly.
    pub fn from_f64(points: &[f64]) -> Result<Self> {
        Self::new(points.iter().map(|&x| rational::from_f64(x)).collect::<Result<_>>()?)
    }

    pub fn integers(range: u64) -> Self {
        Self {
            points: (1..=range as i64).map(rational::int).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Rational] {
        &self.points
    }
}

/// Number of `2s`-tuples from the point set whose power-sum differences
/// satisfy `|Z_i| ≤ N^{i−n}` for every `i`, ties included.
///
/// Keys are bucketed on a grid whose cell side equals the tolerance in each
/// coordinate, so any pair within tolerance lies in adjacent cells; the
/// `3^n` neighbouring cells are scanned and every candidate pair is then
/// checked exactly.
pub fn count_real(points: &SeparatedPointSet, s: usize, n: usize, budget: &CountBudget) -> Result<u128> {
    if s < 1 || n < 1 {
        return Err(Error::invalid("count_real needs s ≥ 1 and n ≥ 1"));
    }
    let big_n = points.len();
    let tuples = (big_n as u128).checked_pow(s as u32).unwrap_or(u128::MAX);
    if tuples > budget.max_entries {
        return Err(Error::budget("s-tuple keys", tuples, budget.max_entries));
    }
    let nn = rational::int(big_n as i64);
    let tol: Vec<Rational> = (1..=n as i32)
        .map(|i| {
            if i >= n as i32 {
                rational::pow(&nn, (i - n as i32) as u32)
            } else {
                rational::pow(&nn, (n as i32 - i) as u32).recip()
            }
        })
        .collect();

    // power tables
    let powers: Vec<Vec<Rational>> = points
        .points()
        .iter()
        .map(|x| {
            let mut out = Vec::with_capacity(n);
            let mut p = x.clone();
            for _ in 0..n {
                out.push(p.clone());
                p = &p * x;
            }
            out
        })
        .collect();

    let mut keys: BTreeMap<Vec<Rational>, u64> = BTreeMap::new();
    let mut idx = vec![0usize; s];
    loop {
        let mut key = vec![Rational::zero(); n];
        for &i in &idx {
            for (k, v) in key.iter_mut().zip(&powers[i]) {
                *k += v;
            }
        }
        *keys.entry(key).or_insert(0) += 1;
        let mut pos = 0;
        loop {
            if pos == s {
                break;
            }
            idx[pos] += 1;
            if idx[pos] < big_n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == s {
            break;
        }
    }

    let distinct: Vec<(Vec<Rational>, u64)> = keys.into_iter().collect();
    let cell_of = |key: &[Rational]| -> Vec<BigInt> { key.iter().zip(&tol).map(|(v, t)| (v / t).floor().to_integer()).collect() };
    let mut buckets: HashMap<Vec<BigInt>, Vec<usize>> = HashMap::new();
    for (i, (key, _)) in distinct.iter().enumerate() {
        buckets.entry(cell_of(key)).or_default().push(i);
    }

    let offsets: Vec<Vec<i64>> = {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|o| {
                    (-1..=1).map(move |d| {
                        let mut o = o.clone();
                        o.push(d);
                        o
                    })
                })
                .collect();
        }
        out
    };

    let mut total: u128 = 0;
    for (key, m) in &distinct {
        let cell = cell_of(key);
        for off in &offsets {
            let neighbour: Vec<BigInt> = cell.iter().zip(off).map(|(c, d)| c + d).collect();
            if let Some(list) = buckets.get(&neighbour) {
                for &j in list {
                    let (other, m2) = &distinct[j];
                    if key.iter().zip(other).zip(&tol).all(|((a, b), t)| (a - b).abs() <= *t) {
                        total += (*m as u128) * (*m2 as u128);
                    }
                }
            }
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// growth exponents

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub degree: u32,
    pub multiplicity: u32,
    pub ranges: Vec<u64>,
    /// Exact counts, as decimal strings (they can exceed 2^53).
    pub counts: Vec<String>,
    pub fit: LineFit,
}

/// Least-squares slope of `ln J_{s,n}(N)` against `ln N`.
pub fn growth_fit(n: u32, s: u32, ranges: &[u64], cfg: &MitmConfig) -> Result<GrowthFit> {
    if ranges.len() < 3 {
        return Err(Error::invalid("growth fit needs at least three values of N"));
    }
    if ranges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("values of N must be strictly increasing"));
    }
    let counts = ranges
        .iter()
        .map(|&big_n| count_mitm(&Instance::new(n, s, big_n)?, cfg))
        .collect::<Result<Vec<u128>>>()?;
    let xs: Vec<f64> = ranges.iter().map(|&v| v as f64).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    Ok(GrowthFit {
        degree: n,
        multiplicity: s,
        ranges: ranges.to_vec(),
        counts: counts.iter().map(|c| c.to_string()).collect(),
        fit: fit_log_log(&xs, &ys)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(n: u32, s: u32, big_n: u64) -> Instance {
        Instance::new(n, s, big_n).unwrap()
    }

    #[test]
    fn naive_small_cases() {
        let b = CountBudget::default();
        assert_eq!(count_naive(&inst(2, 1, 5), &b).unwrap(), 5);
        assert_eq!(count_naive(&inst(2, 2, 2), &b).unwrap(), 6);
        assert_eq!(count_naive(&inst(3, 2, 3), &b).unwrap(), 15);
    }

    #[test]
    fn naive_budget_guard() {
        let b = CountBudget {
            max_tuples: 1000,
            ..CountBudget::default()
        };
        assert!(matches!(count_naive(&inst(2, 2, 10), &b), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn big_integer_path_matches_fixed_width() {
        // force the BigInt route by a huge offset; translation invariance gives the reference
        let b = CountBudget::default();
        let far = 1i64 << 40;
        let reference = count_naive_range(3, 2, 1, 4, &b).unwrap();
        assert_eq!(count_naive_range(3, 2, far + 1, far + 4, &b).unwrap(), reference);
    }

    #[test]
    fn histogram_small_cases() {
        let cfg = MitmConfig::default();
        let h = representation_histogram(&inst(2, 1, 3), &cfg).unwrap();
        let keys: Vec<Vec<i64>> = h.entries.keys().map(|k| k.0.iter().map(|c| c.to_i64().unwrap()).collect()).collect();
        assert_eq!(keys, vec![vec![1, 1], vec![2, 4], vec![3, 9]]);
        assert!(h.entries.values().all(|&m| m == 1));

        let h = representation_histogram(&inst(2, 2, 2), &cfg).unwrap();
        let got: Vec<(Vec<i64>, u64)> =
            h.entries.iter().map(|(k, m)| (k.0.iter().map(|c| c.to_i64().unwrap()).collect(), *m)).collect();
        assert_eq!(got, vec![(vec![2, 2], 1), (vec![3, 5], 2), (vec![4, 8], 1)]);
        assert_eq!(h.sum_of_squares(), 6);
        assert_eq!(h.total_mass(), 4);
        assert!(h.keys_within_bounds());
    }

    #[test]
    fn mitm_small_cases() {
        let cfg = MitmConfig::default();
        assert_eq!(count_mitm(&inst(2, 2, 2), &cfg).unwrap(), 6);
        assert_eq!(count_mitm(&inst(3, 1, 7), &cfg).unwrap(), 7);
        let b = CountBudget::default();
        assert_eq!(count_mitm(&inst(2, 3, 4), &cfg).unwrap(), count_naive(&inst(2, 3, 4), &b).unwrap());
    }

    #[test]
    fn strategies_and_partitions_agree() {
        let i = inst(3, 3, 9);
        let reference = count_mitm(&i, &MitmConfig::default()).unwrap();
        for strategy in [MitmStrategy::Hash, MitmStrategy::SortMerge] {
            for partitions in [1, 2, 7, 64, 1000] {
                let cfg = MitmConfig {
                    strategy,
                    partitions,
                    budget: CountBudget::default(),
                };
                assert_eq!(count_mitm(&i, &cfg).unwrap(), reference);
            }
        }
    }

    #[test]
    fn wide_keys_use_big_integer_packing() {
        let codec = Codec::new(8, 3, 300);
        assert!(!codec.fits_u128());
        let i = inst(8, 2, 6);
        let b = CountBudget::default();
        assert_eq!(count_mitm(&i, &MitmConfig::default()).unwrap(), count_naive(&i, &b).unwrap());
    }

    #[test]
    fn codec_decodes_what_it_packs() {
        let codec = Codec::new(4, 3, 10);
        let key = [2u64, 7, 7].iter().fold(BigUint::zero(), |acc, &x| acc + codec.single_big(x));
        let decoded = codec.decode(16, &key);
        assert_eq!(decoded, PowerSumKey::of_tuple(&[2, 7, 7], 4));
    }

    #[test]
    fn spill_round_trip_and_streaming_count() {
        let cfg = MitmConfig::default();
        let i = inst(3, 3, 5);
        let hist = representation_histogram(&i, &cfg).unwrap();
        let mut buf = Vec::new();
        write_spill(&hist, &mut buf).unwrap();
        assert_eq!(read_spill(buf.as_slice()).unwrap(), hist);
        assert_eq!(count_from_spill(buf.as_slice()).unwrap(), count_mitm(&i, &cfg).unwrap());

        let mut streamed = Vec::new();
        let records = spill_histogram(&i, &cfg, &mut streamed).unwrap();
        assert_eq!(records as usize, hist.entries.len());
        assert_eq!(streamed, buf);
    }

    #[test]
    fn spill_rejects_garbage() {
        assert!(read_spill(&b"NOTSPILL"[..]).is_err());
    }

    #[test]
    fn count_real_trivial_and_integer_cases() {
        let b = CountBudget::default();
        let one = SeparatedPointSet::from_f64(&[0.5]).unwrap();
        for s in 1..4 {
            assert_eq!(count_real(&one, s, 2, &b).unwrap(), 1);
        }
        // integers, n=2, s=1, N=4: |X1 − X2| ≤ 1/4 forces equality
        let ints = SeparatedPointSet::integers(4);
        assert_eq!(count_real(&ints, 1, 2, &b).unwrap(), 4);
    }

    fn brute_real(points: &[Rational], s: usize, n: usize) -> u128 {
        let big_n = points.len();
        let nn = rational::int(big_n as i64);
        let tol: Vec<Rational> = (1..=n)
            .map(|i| rational::pow(&nn, (n - i) as u32).recip())
            .collect();
        let total = big_n.pow(2 * s as u32);
        let mut count = 0;
        for code in 0..total {
            let mut c = code;
            let mut z = vec![Rational::zero(); n];
            for k in 0..2 * s {
                let x = &points[c % big_n];
                c /= big_n;
                let mut p = x.clone();
                for zi in z.iter_mut() {
                    if k < s {
                        *zi += &p;
                    } else {
                        *zi -= &p;
                    }
                    p = &p * x;
                }
            }
            if z.iter().zip(&tol).all(|(zi, t)| zi.abs() <= *t) {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn count_real_matches_brute_force() {
        let b = CountBudget::default();
        let half = SeparatedPointSet::from_f64(&[0.5, 1.5, 2.5]).unwrap();
        assert_eq!(count_real(&half, 2, 2, &b).unwrap(), brute_real(half.points(), 2, 2));
        let irregular = SeparatedPointSet::from_f64(&[0.9, 1.1, 2.95, 3.5]).unwrap();
        assert_eq!(count_real(&irregular, 2, 2, &b).unwrap(), brute_real(irregular.points(), 2, 2));
    }

    #[test]
    fn count_real_counts_boundary_ties() {
        // |1 − 1.5| sits exactly on the first tolerance 1/2, |1 − 2.25| exceeds the second
        let b = CountBudget::default();
        let pts = SeparatedPointSet::from_f64(&[1.0, 1.5]).unwrap();
        assert_eq!(count_real(&pts, 1, 2, &b).unwrap(), brute_real(pts.points(), 1, 2));
        // n=1: a single tolerance of 1, and |1 − 2| = 1 is a tie
        let ints = SeparatedPointSet::integers(2);
        assert_eq!(count_real(&ints, 1, 1, &b).unwrap(), 4);
    }

    #[test]
    fn separated_point_window_is_enforced() {
        assert!(SeparatedPointSet::from_f64(&[0.0]).is_err());
        assert!(SeparatedPointSet::from_f64(&[1.0, 1.0]).is_err());
        assert!(SeparatedPointSet::from_f64(&[1.0, 2.0]).is_ok());
        assert!(SeparatedPointSet::new(vec![]).is_err());
    }

    #[test]
    fn growth_fit_validates_inputs() {
        let cfg = MitmConfig::default();
        assert!(growth_fit(2, 2, &[4, 8], &cfg).is_err());
        assert!(growth_fit(2, 2, &[4, 8, 8], &cfg).is_err());
        let fit = growth_fit(2, 2, &[8, 16, 32, 64], &cfg).unwrap();
        // J_{2,2}(N) = 2N² − N
        for (big_n, c) in fit.ranges.iter().zip(&fit.counts) {
            assert_eq!(c.parse::<u128>().unwrap(), 2 * (*big_n as u128).pow(2) - *big_n as u128);
        }
        assert!(fit.fit.slope > 1.9 && fit.fit.slope < 2.3);
    }
}
