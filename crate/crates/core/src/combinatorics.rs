//! Lookup tables, the secondary-swap factor Ω, and constrained enumeration
//! of inner detection patterns and internal summation indices.

use crate::model::{CountTuple, InnerPattern, RelayParams};

/// `C(n, k)` as an exact integer; zero outside `0 <= k <= n`.
pub fn binomial(n: i64, k: i64) -> i64 {
    if n < 0 || k < 0 || k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i64 = 1;
    for t in 0..k {
        acc = acc * (n - t) / (t + 1);
    }
    acc
}

/// Amplitude factor of a secondary Bell measurement for one polarisation.
///
/// `m` photons arrive from the left input (`a_n`) and `first + second - m`
/// from the right input (`d_{n+1}`); `first` and `second` are the counts in
/// the two output ports. Only the total `m` of the two left-side summation
/// indices matters.
pub fn omega(m: u8, first: u8, second: u8) -> i64 {
    let (m, first, second) = (i64::from(m), i64::from(first), i64::from(second));
    let right = first + second - m;
    if right < 0 {
        return 0;
    }
    (0..=m)
        .map(|g| {
            let sign = if (m - g) % 2 == 0 { 1 } else { -1 };
            sign * binomial(m, g) * binomial(right, first - g)
        })
        .sum()
}

/// Tabulated factorials, binomials, powers of √2 and tanh χ, and Ω values.
#[derive(Debug, Clone)]
pub struct LookupTables {
    factorial: Vec<f64>,
    sqrt_factorial: Vec<f64>,
    binomial: Vec<Vec<i64>>,
    sqrt2_pow: Vec<f64>,
    tanh_pow: Vec<f64>,
    n_max: usize,
    omega: Vec<i64>,
}

/// Factorials and binomials are tabulated at least this far.
const MIN_TABLE: usize = 16;
/// Powers of √2 are tabulated at least this far.
const MIN_SQRT2_POW: usize = 64;

impl LookupTables {
    pub fn new(params: &RelayParams) -> Self {
        let n_max = usize::from(params.n_max());
        let smax = usize::from(params.tuple_sum_max());
        let span = MIN_TABLE.max(4 * n_max).max(2 * smax);
        let factorial: Vec<f64> = (0..=span)
            .scan(1.0f64, |acc, n| {
                if n > 0 {
                    *acc *= n as f64;
                }
                Some(*acc)
            })
            .collect();
        let sqrt_factorial = factorial.iter().map(|f| f.sqrt()).collect();
        let binomial = (0..=span as i64)
            .map(|n| (0..=n).map(|k| binomial(n, k)).collect())
            .collect();
        let total_photons = params.n_tuples() * smax;
        let sqrt2_pow = (0..=MIN_SQRT2_POW.max(total_photons))
            .map(|m| 2f64.powf(m as f64 / 2.0))
            .collect();
        let tau = params.chi().tanh();
        let tanh_pow = (0..=params.n_stations() * smax)
            .scan(1.0f64, |acc, n| {
                if n > 0 {
                    *acc *= tau;
                }
                Some(*acc)
            })
            .collect();
        let side = n_max + 1;
        let mut omega_table = vec![0; (2 * n_max + 1) * side * side];
        for m in 0..=2 * n_max {
            for i in 0..=n_max {
                for l in 0..=n_max {
                    omega_table[(m * side + i) * side + l] = omega(m as u8, i as u8, l as u8);
                }
            }
        }
        Self {
            factorial,
            sqrt_factorial,
            binomial,
            sqrt2_pow,
            tanh_pow,
            n_max,
            omega: omega_table,
        }
    }

    #[inline]
    pub fn factorial(&self, n: usize) -> f64 {
        self.factorial[n]
    }

    #[inline]
    pub fn sqrt_factorial(&self, n: usize) -> f64 {
        self.sqrt_factorial[n]
    }

    #[inline]
    pub fn binomial(&self, n: usize, k: usize) -> i64 {
        if k > n {
            0
        } else {
            self.binomial[n][k]
        }
    }

    /// `2^(m/2)`.
    #[inline]
    pub fn sqrt2_pow(&self, m: usize) -> f64 {
        self.sqrt2_pow[m]
    }

    /// `tanh(χ)^n`.
    #[inline]
    pub fn tanh_pow(&self, n: usize) -> f64 {
        self.tanh_pow[n]
    }

    /// Memoised [`omega`]; the count arguments must not exceed `n_max`.
    #[inline]
    pub fn omega(&self, m: u8, first: u8, second: u8) -> i64 {
        let side = self.n_max + 1;
        let (m, first, second) = (usize::from(m), usize::from(first), usize::from(second));
        if m > first + second {
            return 0;
        }
        self.omega[(m * side + first) * side + second]
    }

    pub fn factorial_len(&self) -> usize {
        self.factorial.len()
    }

    pub fn sqrt2_len(&self) -> usize {
        self.sqrt2_pow.len()
    }

    pub fn tanh_len(&self) -> usize {
        self.tanh_pow.len()
    }
}

/// All four-tuples admitted by the truncation, in lexicographic order.
pub fn admissible_tuples(params: &RelayParams) -> Vec<CountTuple> {
    let n = params.n_max();
    let (lo, hi) = (params.tuple_sum_min(), params.tuple_sum_max());
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                for l in 0..=n {
                    let s = i + j + k + l;
                    if (lo..=hi).contains(&s) {
                        out.push(CountTuple::new(i, j, k, l));
                    }
                }
            }
        }
    }
    out
}

/// Number of patterns [`enumerate_inner_patterns`] yields.
pub fn pattern_count(params: &RelayParams) -> u128 {
    (admissible_tuples(params).len() as u128).pow(params.n_tuples() as u32)
}

/// Every admissible [`InnerPattern`], lexicographically ordered by tuple position.
pub fn enumerate_inner_patterns(params: &RelayParams) -> InnerPatterns {
    InnerPatterns::new(admissible_tuples(params), params.n_tuples(), None)
}

/// Patterns whose first tuple is `first` (a prefix partition of
/// [`enumerate_inner_patterns`]).
pub fn enumerate_inner_patterns_with_prefix(params: &RelayParams, first: CountTuple) -> InnerPatterns {
    InnerPatterns::new(admissible_tuples(params), params.n_tuples(), Some(first))
}

/// Odometer over `tuples^len`.
#[derive(Debug, Clone)]
pub struct InnerPatterns {
    tuples: Vec<CountTuple>,
    digits: Vec<usize>,
    fixed_first: bool,
    done: bool,
}

impl InnerPatterns {
    fn new(tuples: Vec<CountTuple>, len: usize, first: Option<CountTuple>) -> Self {
        let mut digits = vec![0; len];
        let mut done = tuples.is_empty();
        if let Some(first) = first {
            match tuples.iter().position(|t| *t == first) {
                Some(pos) => digits[0] = pos,
                None => done = true,
            }
        }
        Self {
            tuples,
            digits,
            fixed_first: first.is_some(),
            done,
        }
    }
}

impl Iterator for InnerPatterns {
    type Item = InnerPattern;

    fn next(&mut self) -> Option<InnerPattern> {
        if self.done {
            return None;
        }
        let pattern = InnerPattern::from_tuples_unchecked(
            self.digits.iter().map(|&d| self.tuples[d]).collect(),
        );
        let stop = usize::from(self.fixed_first);
        let mut pos = self.digits.len();
        loop {
            if pos == stop {
                self.done = true;
                break;
            }
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < self.tuples.len() {
                break;
            }
            self.digits[pos] = 0;
        }
        Some(pattern)
    }
}

/// Internal summation indices `(μ, ν, κ, λ)` of one elementary station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StationIndices {
    pub mu: u8,
    pub nu: u8,
    pub kappa: u8,
    pub lambda: u8,
}

impl StationIndices {
    /// H photons left in the station's `a` mode.
    pub fn a_horizontal(&self) -> u8 {
        self.mu + self.lambda
    }
    /// V photons left in the station's `a` mode.
    pub fn a_vertical(&self) -> u8 {
        self.nu + self.kappa
    }
}

/// One admissible assignment of internal indices for all `N` stations.
pub type IndexAssignment = Vec<StationIndices>;

/// Checks both photon-balance constraints at every secondary connection.
pub fn satisfies_connections(pattern: &InnerPattern, assignment: &[StationIndices]) -> bool {
    let n = pattern.n_stations();
    (0..n.saturating_sub(1)).all(|c| {
        let conn = pattern.connection(c);
        let next = pattern.station(c + 1);
        let (here, there) = (assignment[c], assignment[c + 1]);
        let h = i32::from(here.a_horizontal()) + i32::from(next.horizontal())
            - i32::from(there.a_horizontal());
        let v = i32::from(here.a_vertical()) + i32::from(next.vertical())
            - i32::from(there.a_vertical());
        h == i32::from(conn.horizontal()) && v == i32::from(conn.vertical())
    })
}

/// Assignments consistent with the photon balance at every secondary
/// connection.
///
/// Station 1 ranges over its full box; for later stations the balance fixes
/// `μ + λ` and `ν + κ`, so only `μ` and `ν` are looped and `λ`, `κ` follow.
/// Infeasible branches are never visited.
pub fn enumerate_internal_indices(pattern: &InnerPattern) -> InternalIndices<'_> {
    InternalIndices::new(pattern)
}

#[derive(Debug, Clone)]
pub struct InternalIndices<'a> {
    pattern: &'a InnerPattern,
    digits: Vec<i16>,
    hi: Vec<i16>,
    started: bool,
    done: bool,
}

impl<'a> InternalIndices<'a> {
    fn new(pattern: &'a InnerPattern) -> Self {
        let n = pattern.n_stations();
        let len = 4 + 2 * (n - 1);
        Self {
            pattern,
            digits: vec![0; len],
            hi: vec![0; len],
            started: false,
            done: false,
        }
    }

    /// Photon totals `(μ + λ, ν + κ)` of station `p`. For `p >= 1` they are
    /// fixed by station 1's digits and the connection balances.
    fn totals(&self, p: usize) -> (i16, i16) {
        let mut h = self.digits[0] + self.digits[3];
        let mut v = self.digits[1] + self.digits[2];
        for q in 1..=p {
            let conn = self.pattern.connection(q - 1);
            let next = self.pattern.station(q);
            h += i16::from(next.horizontal()) - i16::from(conn.horizontal());
            v += i16::from(next.vertical()) - i16::from(conn.vertical());
        }
        (h, v)
    }

    /// Sets the range of digit `pos`, returning its lower bound.
    fn open(&mut self, pos: usize) -> i16 {
        if pos < 4 {
            let t = self.pattern.station(0).as_array();
            // Digit order for station 1: μ, ν, κ, λ matches (i, j, k, l).
            self.hi[pos] = i16::from(t[pos]);
            return 0;
        }
        let p = 1 + (pos - 4) / 2;
        let t = self.pattern.station(p);
        let (h, v) = self.totals(p);
        if (pos - 4) % 2 == 0 {
            // μ in [max(0, h - l), min(i, h)]
            self.hi[pos] = i16::from(t.i()).min(h);
            (h - i16::from(t.l())).max(0)
        } else {
            // ν in [max(0, v - k), min(j, v)]
            self.hi[pos] = i16::from(t.j()).min(v);
            (v - i16::from(t.k())).max(0)
        }
    }

    fn current(&self) -> IndexAssignment {
        let n = self.pattern.n_stations();
        let d = &self.digits;
        let mut out = Vec::with_capacity(n);
        out.push(StationIndices {
            mu: d[0] as u8,
            nu: d[1] as u8,
            kappa: d[2] as u8,
            lambda: d[3] as u8,
        });
        for p in 1..n {
            let (h, v) = self.totals(p);
            let mu = d[4 + 2 * (p - 1)];
            let nu = d[5 + 2 * (p - 1)];
            out.push(StationIndices {
                mu: mu as u8,
                nu: nu as u8,
                kappa: (v - nu) as u8,
                lambda: (h - mu) as u8,
            });
        }
        out
    }
}

impl Iterator for InternalIndices<'_> {
    type Item = IndexAssignment;

    fn next(&mut self) -> Option<IndexAssignment> {
        if self.done {
            return None;
        }
        let last = self.digits.len() - 1;
        let mut pos;
        if self.started {
            pos = last;
        } else {
            self.started = true;
            pos = 0;
            self.digits[0] = self.open(0) - 1;
        }
        loop {
            self.digits[pos] += 1;
            if self.digits[pos] > self.hi[pos] {
                if pos == 0 {
                    self.done = true;
                    return None;
                }
                pos -= 1;
                continue;
            }
            if pos == last {
                return Some(self.current());
            }
            pos += 1;
            self.digits[pos] = self.open(pos) - 1;
        }
    }
}
