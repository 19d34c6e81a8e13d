//! Closed-form end-mode state after ideal inner readout, the rotated
//! transition amplitude onto outer photon counts, and the ideal
//! Bell-measurement weight of a pattern.
//!
//! Amplitudes are kept unnormalised: the χ dependence is carried as
//! `tanh(χ)^(photons emitted)` and every `cosh χ` factor is dropped, since it
//! is common to all patterns and cancels in every conditional probability.

use num_complex::Complex64;

use crate::combinatorics::{enumerate_internal_indices, LookupTables};
use crate::model::{InnerPattern, OuterCounts, RelayParams, RotatorAngles};
use crate::numerics::i_pow;

/// Occupation of the outer modes `d_1` and `a_N` before the rotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EndKey {
    pub d_h: u8,
    pub d_v: u8,
    pub a_h: u8,
    pub a_v: u8,
}

impl EndKey {
    pub fn a_total(&self) -> u8 {
        self.a_h + self.a_v
    }
    pub fn d_total(&self) -> u8 {
        self.d_h + self.d_v
    }
}

/// Unnormalised end-mode state `Σ c(key) |key⟩` in the normalised Fock basis.
///
/// `terms` holds coefficients without the common prefactor
/// `tanh(χ)^tanh_exponent / 2^(sqrt2_exponent / 2)`; [`EndStateTerms::amplitude`]
/// applies it. The closed form is real in this phase convention.
#[derive(Debug, Clone, PartialEq)]
pub struct EndStateTerms {
    terms: Vec<(EndKey, f64)>,
    tanh_exponent: u32,
    sqrt2_exponent: u32,
    prefactor: f64,
}

impl EndStateTerms {
    /// Sorted `(key, coefficient)` pairs excluding the prefactor.
    pub fn raw_terms(&self) -> &[(EndKey, f64)] {
        &self.terms
    }

    pub fn tanh_exponent(&self) -> u32 {
        self.tanh_exponent
    }

    pub fn sqrt2_exponent(&self) -> u32 {
        self.sqrt2_exponent
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Full amplitude of `key`, zero if absent.
    pub fn amplitude(&self, key: EndKey) -> f64 {
        self.terms
            .binary_search_by(|(k, _)| k.cmp(&key))
            .map(|n| self.terms[n].1 * self.prefactor)
            .unwrap_or(0.0)
    }

    /// `(key, amplitude)` with the prefactor applied.
    pub fn iter(&self) -> impl Iterator<Item = (EndKey, f64)> + '_ {
        self.terms.iter().map(move |&(k, c)| (k, c * self.prefactor))
    }

    pub fn norm_sqr(&self) -> f64 {
        let raw: f64 = self.terms.iter().map(|(_, c)| c * c).sum();
        raw * self.prefactor * self.prefactor
    }
}

/// Matrix element `⟨h_out, v_out| R(θ) |h_in, v_in⟩` of a polarisation rotator
/// acting as `H† → cos θ H† + i sin θ V†`, `V† → i sin θ H† + cos θ V†`.
pub fn rotator_amplitude(h_in: u8, v_in: u8, h_out: u8, v_out: u8, angle: f64) -> Complex64 {
    if u32::from(h_in) + u32::from(v_in) != u32::from(h_out) + u32::from(v_out) {
        return Complex64::new(0.0, 0.0);
    }
    let (s, c) = angle.sin_cos();
    let (h, v, vo) = (i64::from(h_in), i64::from(v_in), i64::from(v_out));
    let lo = (vo - h).max(0);
    let hi = v.min(vo);
    let mut acc = Complex64::new(0.0, 0.0);
    for n in lo..=hi {
        // n V photons stay V; the remaining v_out - n V photons come from H.
        let ways = (crate::combinatorics::binomial(v, n) * crate::combinatorics::binomial(h, vo - n)) as f64;
        let sin_exp = (v + vo - 2 * n) as i32;
        let cos_exp = (h - vo + 2 * n) as i32;
        acc += i_pow(sin_exp as u32) * (ways * s.powi(sin_exp) * c.powi(cos_exp));
    }
    let norm = (factorial(h_out) * factorial(v_out) / (factorial(h_in) * factorial(v_in))).sqrt();
    acc * norm
}

fn factorial(n: u8) -> f64 {
    (1..=u32::from(n)).map(f64::from).product()
}

/// Rotator matrix elements for every photon number up to `max_photons`.
#[derive(Debug, Clone)]
pub struct RotatorTable {
    max_photons: usize,
    // block m: (m + 1) x (m + 1), indexed [h_out][h_in]
    blocks: Vec<Vec<Complex64>>,
}

impl RotatorTable {
    pub fn new(angle: f64, max_photons: usize) -> Self {
        let blocks = (0..=max_photons)
            .map(|m| {
                let mut b = Vec::with_capacity((m + 1) * (m + 1));
                for h_out in 0..=m {
                    for h_in in 0..=m {
                        b.push(rotator_amplitude(
                            h_in as u8,
                            (m - h_in) as u8,
                            h_out as u8,
                            (m - h_out) as u8,
                            angle,
                        ));
                    }
                }
                b
            })
            .collect();
        Self {
            max_photons,
            blocks,
        }
    }

    pub fn max_photons(&self) -> usize {
        self.max_photons
    }

    /// `⟨h_out, m - h_out| R |h_in, m - h_in⟩`.
    #[inline]
    pub fn get(&self, m: usize, h_in: usize, h_out: usize) -> Complex64 {
        self.blocks[m][h_out * (m + 1) + h_in]
    }
}

/// Closed-form evaluator bound to one parameter set.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    params: RelayParams,
    tables: LookupTables,
}

impl ClosedForm {
    pub fn new(params: &RelayParams) -> Self {
        Self {
            params: params.clone(),
            tables: LookupTables::new(params),
        }
    }

    pub fn params(&self) -> &RelayParams {
        &self.params
    }

    pub fn tables(&self) -> &LookupTables {
        &self.tables
    }

    /// Executes the nested index sums for `pattern`.
    pub fn end_state_terms(&self, pattern: &InnerPattern) -> EndStateTerms {
        let t = &self.tables;
        let n = pattern.n_stations();
        let emitted: u32 = (0..n).map(|p| u32::from(pattern.station(p).sum())).sum();
        let detected = pattern.total_photons();

        // Pattern-level constant: 1/√(i!j!k!l!) per station, √(i!j!k!l!) per connection.
        let mut scale = 1.0;
        for (u, tuple) in pattern.tuples().iter().enumerate() {
            let f: f64 = tuple
                .as_array()
                .iter()
                .map(|&x| t.sqrt_factorial(usize::from(x)))
                .product();
            if u < n {
                scale /= f;
            } else {
                scale *= f;
            }
        }

        let first = pattern.station(0);
        let side = usize::from(self.params.tuple_sum_max()).max(usize::from(first.sum())) + 1;
        let mut acc = vec![0.0f64; side * side * side * side];
        let mut touched = vec![false; acc.len()];
        for assignment in enumerate_internal_indices(pattern) {
            let mut coef = 1.0f64;
            for (p, ix) in assignment.iter().enumerate() {
                let tup = pattern.station(p);
                let ways = t.binomial(usize::from(tup.i()), usize::from(ix.mu))
                    * t.binomial(usize::from(tup.j()), usize::from(ix.nu))
                    * t.binomial(usize::from(tup.k()), usize::from(ix.kappa))
                    * t.binomial(usize::from(tup.l()), usize::from(ix.lambda));
                let signed = if (ix.mu + ix.nu) % 2 == 0 { ways } else { -ways };
                coef *= signed as f64;
            }
            for c in 0..n - 1 {
                let conn = pattern.connection(c);
                let here = assignment[c];
                coef *= t.omega(here.a_horizontal(), conn.i(), conn.l()) as f64;
                coef *= t.omega(here.a_vertical(), conn.j(), conn.k()) as f64;
                if coef == 0.0 {
                    break;
                }
            }
            if coef == 0.0 {
                continue;
            }
            let last = assignment[n - 1];
            let d0 = assignment[0];
            let key = EndKey {
                d_h: first.horizontal() - d0.a_horizontal(),
                d_v: first.vertical() - d0.a_vertical(),
                a_h: last.a_horizontal(),
                a_v: last.a_vertical(),
            };
            let idx = ((usize::from(key.d_h) * side + usize::from(key.d_v)) * side
                + usize::from(key.a_h))
                * side
                + usize::from(key.a_v);
            acc[idx] += coef;
            touched[idx] = true;
        }

        let mut terms = Vec::new();
        for (idx, (&c, &hit)) in acc.iter().zip(&touched).enumerate() {
            if !hit || c == 0.0 {
                continue;
            }
            let a_v = idx % side;
            let a_h = (idx / side) % side;
            let d_v = (idx / (side * side)) % side;
            let d_h = idx / (side * side * side);
            let fock = t.sqrt_factorial(d_h)
                * t.sqrt_factorial(d_v)
                * t.sqrt_factorial(a_h)
                * t.sqrt_factorial(a_v);
            terms.push((
                EndKey {
                    d_h: d_h as u8,
                    d_v: d_v as u8,
                    a_h: a_h as u8,
                    a_v: a_v as u8,
                },
                c * scale * fock,
            ));
        }
        let prefactor = t.tanh_pow(emitted as usize) / t.sqrt2_pow(detected as usize);
        EndStateTerms {
            terms,
            tanh_exponent: emitted,
            sqrt2_exponent: detected,
            prefactor,
        }
    }

    /// Ideal Bell-measurement weight `Σ_outer |A|²` (unnormalised).
    pub fn ideal_bell_prob(&self, pattern: &InnerPattern) -> f64 {
        self.end_state_terms(pattern).norm_sqr()
    }

    /// Amplitude for `outer` counts behind the rotators given the inner pattern.
    pub fn transition_amplitude(
        &self,
        pattern: &InnerPattern,
        outer: OuterCounts,
        angles: RotatorAngles,
    ) -> Complex64 {
        amplitude_from_terms(&self.end_state_terms(pattern), outer, angles)
    }
}

/// Rotated amplitude of `outer` from precomputed end-state terms.
pub fn amplitude_from_terms(
    state: &EndStateTerms,
    outer: OuterCounts,
    angles: RotatorAngles,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (key, c) in state.iter() {
        if key.a_total() != outer.a_total() || key.d_total() != outer.d_total() {
            continue;
        }
        let ra = rotator_amplitude(key.a_h, key.a_v, outer.a_h, outer.a_v, angles.alpha_tilde());
        let rd = rotator_amplitude(key.d_h, key.d_v, outer.d_h, outer.d_v, angles.delta_tilde());
        acc += ra * rd * c;
    }
    acc
}

/// All non-trivially reachable outer counts with their amplitudes.
///
/// Outer counts whose photon totals match no end-state term have amplitude
/// exactly zero and are omitted.
pub fn outer_amplitudes(
    state: &EndStateTerms,
    rot_a: &RotatorTable,
    rot_d: &RotatorTable,
) -> Vec<(OuterCounts, Complex64)> {
    let mut totals: Vec<(u8, u8)> = state
        .raw_terms()
        .iter()
        .map(|(k, _)| (k.a_total(), k.d_total()))
        .collect();
    totals.sort_unstable();
    totals.dedup();
    let mut out = Vec::new();
    for (ma, md) in totals {
        let (ma_u, md_u) = (usize::from(ma), usize::from(md));
        for a_h in 0..=ma_u {
            for d_h in 0..=md_u {
                let mut acc = Complex64::new(0.0, 0.0);
                for (key, c) in state.iter() {
                    if key.a_total() != ma || key.d_total() != md {
                        continue;
                    }
                    acc += rot_a.get(ma_u, usize::from(key.a_h), a_h)
                        * rot_d.get(md_u, usize::from(key.d_h), d_h)
                        * c;
                }
                out.push((
                    OuterCounts::new(a_h as u8, ma - a_h as u8, md - d_h as u8, d_h as u8),
                    acc,
                ));
            }
        }
    }
    out
}

/// Convenience wrapper around [`ClosedForm::end_state_terms`].
pub fn end_state_terms(pattern: &InnerPattern, params: &RelayParams) -> EndStateTerms {
    ClosedForm::new(params).end_state_terms(pattern)
}

/// Convenience wrapper around [`ClosedForm::transition_amplitude`].
pub fn transition_amplitude(
    pattern: &InnerPattern,
    outer: OuterCounts,
    angles: RotatorAngles,
    params: &RelayParams,
) -> Complex64 {
    ClosedForm::new(params).transition_amplitude(pattern, outer, angles)
}

/// Convenience wrapper around [`ClosedForm::ideal_bell_prob`].
pub fn ideal_bell_prob(pattern: &InnerPattern, params: &RelayParams) -> f64 {
    ClosedForm::new(params).ideal_bell_prob(pattern)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::enumerate_inner_patterns;
    use crate::model::{CountTuple, RawParams};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn params(n: usize, chi: f64, n_max: u8) -> RelayParams {
        RawParams {
            n_stations: n,
            chi,
            n_max,
            ..RawParams::default()
        }
        .validate()
        .unwrap()
    }

    fn key(d_h: u8, d_v: u8, a_h: u8, a_v: u8) -> EndKey {
        EndKey { d_h, d_v, a_h, a_v }
    }

    #[test]
    fn singlet_herald_gives_four_equal_terms() {
        let p = params(1, 0.2, 3);
        let pat = InnerPattern::new(vec![CountTuple::new(1, 0, 1, 0)], &p).unwrap();
        let phi = end_state_terms(&pat, &p);
        assert_eq!(phi.len(), 4);
        let a_h_d_v = phi.amplitude(key(0, 1, 1, 0));
        let a_v_d_h = phi.amplitude(key(1, 0, 0, 1));
        let d_both = phi.amplitude(key(1, 1, 0, 0));
        let a_both = phi.amplitude(key(0, 0, 1, 1));
        let mag = a_h_d_v.abs();
        for c in [a_v_d_h, d_both, a_both] {
            assert!((c.abs() - mag).abs() < 1e-15);
        }
        // Antisymmetric singlet part and antisymmetric rejected part.
        assert!((a_h_d_v + a_v_d_h).abs() < 1e-15);
        assert!((d_both + a_both).abs() < 1e-15);
        let tau = 0.2f64.tanh();
        assert!((mag - tau * tau / 2.0).abs() < 1e-15);
    }

    #[test]
    fn vacuum_pattern_is_bare_prefactor() {
        let p = RawParams {
            tuple_sum_min: 0,
            ..RawParams::default()
        }
        .validate()
        .unwrap();
        let pat = InnerPattern::new(vec![CountTuple::new(0, 0, 0, 0)], &p).unwrap();
        let phi = end_state_terms(&pat, &p);
        assert_eq!(phi.raw_terms(), &[(key(0, 0, 0, 0), 1.0)]);
        assert_eq!(phi.prefactor(), 1.0);
    }

    #[test]
    fn zero_chi_kills_photon_terms() {
        let p = params(2, 0.0, 2);
        for pat in enumerate_inner_patterns(&p).take(500) {
            assert_eq!(ideal_bell_prob(&pat, &p), 0.0);
        }
    }

    #[test]
    fn singlet_relabelling_preserves_weight() {
        let p = params(1, 0.3, 3);
        let a = InnerPattern::new(vec![CountTuple::new(1, 0, 1, 0)], &p).unwrap();
        let b = InnerPattern::new(vec![CountTuple::new(0, 1, 0, 1)], &p).unwrap();
        let (wa, wb) = (ideal_bell_prob(&a, &p), ideal_bell_prob(&b, &p));
        assert!((wa - wb).abs() <= 1e-15 * wa);
        let ta = end_state_terms(&a, &p);
        let tb = end_state_terms(&b, &p);
        let mut ma: Vec<f64> = ta.iter().map(|(_, c)| c.abs()).collect();
        let mut mb: Vec<f64> = tb.iter().map(|(_, c)| c.abs()).collect();
        ma.sort_by(f64::total_cmp);
        mb.sort_by(f64::total_cmp);
        assert_eq!(ma, mb);
    }

    #[test]
    fn rotator_is_unitary_and_periodic() {
        for &angle in &[0.0, 0.3, FRAC_PI_2, 2.0, PI] {
            let table = RotatorTable::new(angle, 6);
            for m in 0..=6usize {
                for a in 0..=m {
                    for b in 0..=m {
                        let dot: Complex64 = (0..=m)
                            .map(|o| table.get(m, a, o) * table.get(m, b, o).conj())
                            .sum();
                        let want = if a == b { 1.0 } else { 0.0 };
                        assert!((dot - want).norm() < 1e-12, "m={m} a={a} b={b} {dot}");
                    }
                }
            }
        }
        for (h, v) in [(1u8, 0u8), (2, 1), (0, 3)] {
            for ho in 0..=(h + v) {
                let vo = h + v - ho;
                let x = rotator_amplitude(h, v, ho, vo, 0.7);
                let y = rotator_amplitude(h, v, ho, vo, 0.7 + 2.0 * PI);
                assert!((x - y).norm() < 1e-12);
                let id = rotator_amplitude(h, v, ho, vo, 0.0);
                let want = if ho == h { 1.0 } else { 0.0 };
                assert!((id - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn rotator_single_photon_elements() {
        let (s, c) = 0.4f64.sin_cos();
        assert!((rotator_amplitude(1, 0, 1, 0, 0.4) - Complex64::new(c, 0.0)).norm() < 1e-15);
        assert!((rotator_amplitude(1, 0, 0, 1, 0.4) - Complex64::new(0.0, s)).norm() < 1e-15);
        assert!((rotator_amplitude(0, 1, 1, 0, 0.4) - Complex64::new(0.0, s)).norm() < 1e-15);
        // Two H photons to one H one V: √2 · i s c.
        let x = rotator_amplitude(2, 0, 1, 1, 0.4);
        assert!((x - Complex64::new(0.0, 2f64.sqrt() * s * c)).norm() < 1e-15);
    }

    #[test]
    fn identity_rotators_reproduce_end_state() {
        let p = params(2, 0.25, 2);
        let cf = ClosedForm::new(&p);
        let angles = RotatorAngles::new(0.0, 0.0).unwrap();
        for pat in enumerate_inner_patterns(&p).step_by(97).take(40) {
            let phi = cf.end_state_terms(&pat);
            for (k, c) in phi.iter() {
                let outer = OuterCounts::new(k.a_h, k.a_v, k.d_v, k.d_h);
                let amp = cf.transition_amplitude(&pat, outer, angles);
                assert!((amp - Complex64::new(c, 0.0)).norm() <= 1e-15 * c.abs().max(1e-300));
            }
            // Counts not present in the state vanish.
            let outer = OuterCounts::new(9, 0, 0, 0);
            assert_eq!(cf.transition_amplitude(&pat, outer, angles), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn rotated_weights_sum_to_ideal_weight() {
        let p = params(2, 0.3, 2);
        let cf = ClosedForm::new(&p);
        let angles = RotatorAngles::new(0.9, -0.4).unwrap();
        let ra = RotatorTable::new(angles.alpha_tilde(), 8);
        let rd = RotatorTable::new(angles.delta_tilde(), 8);
        for pat in enumerate_inner_patterns(&p).step_by(131).take(30) {
            let phi = cf.end_state_terms(&pat);
            let outer = outer_amplitudes(&phi, &ra, &rd);
            let total: f64 = outer.iter().map(|(_, a)| a.norm_sqr()).sum();
            assert!((total - phi.norm_sqr()).abs() <= 1e-12 * phi.norm_sqr().max(1e-300));
            for (o, a) in outer.iter().take(5) {
                let direct = cf.transition_amplitude(&pat, *o, angles);
                assert!((direct - a).norm() <= 1e-14 * a.norm().max(1e-300));
            }
        }
    }
}
