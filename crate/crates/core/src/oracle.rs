//! Brute-force Fock-space simulator used to validate the closed form.
//!
//! States are sparse maps from occupation vectors to amplitudes. Sources,
//! beam splitters and rotators act as explicit transformations of creation
//! operators; detectors are applied through the collapsed click
//! probabilities of [`crate::detector`]. Nothing here uses the closed-form
//! amplitude.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_1_SQRT_2;

use log::warn;
use num_complex::Complex64;

use crate::amplitudes::EndKey;
use crate::combinatorics::binomial;
use crate::detector::{click_prob, DetectorModel};
use crate::error::RelayError;
use crate::model::{ClickTuple, CountTuple, InnerPattern, RelayParams, RotatorAngles};
use crate::numerics::CompensatedSum;
use crate::transfer::{check_heralds, herald_label};

/// Default bound on the number of stored occupation vectors.
pub const DEFAULT_TERM_CAP: usize = 4_000_000;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Polarisation of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pol {
    H,
    V,
}

/// Spatial mode at a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spatial {
    A,
    B,
    C,
    D,
}

/// Index of mode `(spatial, pol)` at station `p` (0-based) in the 8N-mode register.
pub fn mode_index(p: usize, spatial: Spatial, pol: Pol) -> usize {
    let s = match spatial {
        Spatial::A => 0,
        Spatial::B => 1,
        Spatial::C => 2,
        Spatial::D => 3,
    };
    8 * p + 2 * s + usize::from(pol == Pol::V)
}

fn mode_label(index: usize) -> String {
    let p = index / 8 + 1;
    let spatial = ["a", "b", "c", "d"][(index % 8) / 2];
    let pol = if index % 2 == 0 { "H" } else { "V" };
    format!("{spatial}{p}{pol}")
}

/// Sparse state in a truncated Fock space.
#[derive(Debug, Clone)]
pub struct FockState {
    labels: Vec<String>,
    cap: u8,
    amps: HashMap<Vec<u8>, Complex64>,
    truncation_loss: f64,
    term_cap: usize,
}

impl FockState {
    /// Vacuum on `n_modes` modes, each holding at most `cap` photons.
    pub fn vacuum(n_modes: usize, cap: u8) -> Self {
        let mut amps = HashMap::new();
        amps.insert(vec![0; n_modes], Complex64::new(1.0, 0.0));
        Self {
            labels: (0..n_modes).map(mode_label).collect(),
            cap,
            amps,
            truncation_loss: 0.0,
            term_cap: DEFAULT_TERM_CAP,
        }
    }

    pub fn with_term_cap(mut self, term_cap: usize) -> Self {
        self.term_cap = term_cap;
        self
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_modes(&self) -> usize {
        self.labels.len()
    }

    pub fn cap(&self) -> u8 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    /// Squared norm discarded because an occupation exceeded the cap.
    pub fn truncation_loss(&self) -> f64 {
        self.truncation_loss
    }

    pub fn amplitude(&self, occupation: &[u8]) -> Complex64 {
        self.amps.get(occupation).copied().unwrap_or(ZERO)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], Complex64)> {
        self.amps.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut keys: Vec<&Vec<u8>> = self.amps.keys().collect();
        keys.sort();
        keys.into_iter()
            .map(|k| self.amps[k].norm_sqr())
            .collect::<CompensatedSum>()
            .value()
    }

    /// Tensor product, modes of `other` appended after those of `self`.
    pub fn tensor(&self, other: &FockState) -> Result<FockState, RelayError> {
        let terms = self.amps.len() * other.amps.len();
        if terms > self.term_cap {
            return Err(RelayError::OracleTooLarge {
                terms,
                cap: self.term_cap,
            });
        }
        let mut amps = HashMap::with_capacity(terms);
        for (ka, va) in &self.amps {
            for (kb, vb) in &other.amps {
                let mut k = ka.clone();
                k.extend_from_slice(kb);
                amps.insert(k, va * vb);
            }
        }
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        Ok(FockState {
            labels,
            cap: self.cap.max(other.cap),
            amps,
            truncation_loss: self.truncation_loss + other.truncation_loss,
            term_cap: self.term_cap,
        })
    }

    fn check_mode(&self, m: usize) -> Result<(), RelayError> {
        if m >= self.n_modes() {
            return Err(RelayError::NoSuchMode(m));
        }
        Ok(())
    }

    /// Applies `x† → u[0][0] x† + u[0][1] y†`, `y† → u[1][0] x† + u[1][1] y†`
    /// for modes `x` and `y`.
    pub fn apply_two_mode(
        &self,
        x: usize,
        y: usize,
        u: [[Complex64; 2]; 2],
    ) -> Result<FockState, RelayError> {
        self.check_mode(x)?;
        self.check_mode(y)?;
        if x == y {
            return Err(RelayError::NoSuchMode(y));
        }
        let mut out: HashMap<Vec<u8>, Complex64> = HashMap::with_capacity(self.amps.len() * 2);
        let mut lost = 0.0;
        let mut keys: Vec<&Vec<u8>> = self.amps.keys().collect();
        keys.sort();
        for key in keys {
            let amp = self.amps[key];
            let (m, n) = (key[x], key[y]);
            let expansion = two_mode_expansion(m, n, u);
            for (p, c) in expansion.into_iter().enumerate() {
                if c == ZERO {
                    continue;
                }
                let q = usize::from(m) + usize::from(n) - p;
                let v = amp * c;
                if p > usize::from(self.cap) || q > usize::from(self.cap) {
                    lost += v.norm_sqr();
                    continue;
                }
                let mut k = key.clone();
                k[x] = p as u8;
                k[y] = q as u8;
                *out.entry(k).or_insert(ZERO) += v;
            }
        }
        if out.len() > self.term_cap {
            return Err(RelayError::OracleTooLarge {
                terms: out.len(),
                cap: self.term_cap,
            });
        }
        if lost > 0.0 {
            warn!(
                "amplitude leaked past the occupation cap {} on modes {} and {}: {lost:e}",
                self.cap, self.labels[x], self.labels[y]
            );
        }
        Ok(FockState {
            labels: self.labels.clone(),
            cap: self.cap,
            amps: out,
            truncation_loss: self.truncation_loss + lost,
            term_cap: self.term_cap,
        })
    }

    /// 50:50 beam splitter `x† → (x† + i y†)/√2`, `y† → (i x† + y†)/√2`.
    pub fn apply_beamsplitter(&self, x: usize, y: usize) -> Result<FockState, RelayError> {
        let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let t = Complex64::new(0.0, FRAC_1_SQRT_2);
        self.apply_two_mode(x, y, [[r, t], [t, r]])
    }

    /// Polarisation rotator on the H/V pair `(h, v)`:
    /// `H† → cos θ H† + i sin θ V†`, `V† → i sin θ H† + cos θ V†`.
    pub fn apply_rotator(&self, h: usize, v: usize, angle: f64) -> Result<FockState, RelayError> {
        let (s, c) = angle.sin_cos();
        let c = Complex64::new(c, 0.0);
        let s = Complex64::new(0.0, s);
        self.apply_two_mode(h, v, [[c, s], [s, c]])
    }

    /// Keeps only occupations accepted by `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&[u8]) -> bool) {
        self.amps.retain(|k, _| keep(k));
    }
}

/// Coefficients of `(u00 x + u01 y)^m (u10 x + u11 y)^n / √(m! n!)` in the
/// normalised basis `|p, m + n - p⟩`, indexed by `p`.
fn two_mode_expansion(m: u8, n: u8, u: [[Complex64; 2]; 2]) -> Vec<Complex64> {
    let (m, n) = (usize::from(m), usize::from(n));
    let first: Vec<Complex64> = (0..=m)
        .map(|r| u[0][0].powu(r as u32) * u[0][1].powu((m - r) as u32) * binomial(m as i64, r as i64) as f64)
        .collect();
    let second: Vec<Complex64> = (0..=n)
        .map(|s| u[1][0].powu(s as u32) * u[1][1].powu((n - s) as u32) * binomial(n as i64, s as i64) as f64)
        .collect();
    let mut out = vec![ZERO; m + n + 1];
    for (r, a) in first.iter().enumerate() {
        for (s, b) in second.iter().enumerate() {
            out[r + s] += a * b;
        }
    }
    let norm_in = (fact(m) * fact(n)).sqrt();
    for (p, c) in out.iter_mut().enumerate() {
        *c *= (fact(p) * fact(m + n - p)).sqrt() / norm_in;
    }
    out
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Amplitude `(i tanh χ)^n / cosh χ` of `n` pairs in one two-mode squeezer.
fn pair_amplitude(chi: f64, n: usize) -> Complex64 {
    Complex64::new(0.0, chi.tanh()).powu(n as u32) / chi.cosh()
}

/// Source state of one station: pairs in `(aH, bH)`, `(aV, bV)`, `(cH, dH)`,
/// `(cV, dV)`, each holding at most `n_max` pairs.
pub fn pdc_state(chi: f64, n_max: u8) -> FockState {
    station_source(chi, n_max, usize::MAX)
}

/// As [`pdc_state`] but also dropping terms with more than `pair_cap` pairs in total.
pub fn pdc_state_with_pair_cap(chi: f64, n_max: u8, pair_cap: usize) -> FockState {
    station_source(chi, n_max, pair_cap)
}

fn station_source(chi: f64, n_max: u8, pair_cap: usize) -> FockState {
    let mut state = FockState::vacuum(8, n_max);
    state.amps.clear();
    let nm = usize::from(n_max);
    for n1 in 0..=nm {
        for n2 in 0..=nm {
            for n3 in 0..=nm {
                for n4 in 0..=nm {
                    if n1 + n2 + n3 + n4 > pair_cap {
                        continue;
                    }
                    let amp = pair_amplitude(chi, n1)
                        * pair_amplitude(chi, n2)
                        * pair_amplitude(chi, n3)
                        * pair_amplitude(chi, n4);
                    if amp == ZERO {
                        continue;
                    }
                    let (a, b, c, d) = (n1 as u8, n2 as u8, n3 as u8, n4 as u8);
                    // aH aV bH bV cH cV dH dV
                    state.amps.insert(vec![a, b, a, b, c, d, c, d], amp);
                }
            }
        }
    }
    state
}

/// `Σ |amplitude|² Π p(click | occupation)` over the listed `(mode, click)` pairs.
pub fn detector_povm_prob(state: &FockState, clicks: &[(usize, bool)], det: &DetectorModel) -> f64 {
    let mut keys: Vec<&Vec<u8>> = state.amps.keys().collect();
    keys.sort();
    keys.into_iter()
        .map(|k| {
            let w: f64 = clicks
                .iter()
                .map(|&(m, q)| click_prob(q, u32::from(k[m]), det))
                .product();
            w * state.amps[k].norm_sqr()
        })
        .collect::<CompensatedSum>()
        .value()
}

/// Modes of inner four-tuple `u` in `(i, j, k, l)` order.
fn tuple_modes(n_stations: usize, u: usize) -> [usize; 4] {
    if u < n_stations {
        [
            mode_index(u, Spatial::B, Pol::H),
            mode_index(u, Spatial::B, Pol::V),
            mode_index(u, Spatial::C, Pol::V),
            mode_index(u, Spatial::C, Pol::H),
        ]
    } else {
        let n = u - n_stations;
        [
            mode_index(n, Spatial::A, Pol::H),
            mode_index(n, Spatial::A, Pol::V),
            mode_index(n + 1, Spatial::D, Pol::V),
            mode_index(n + 1, Spatial::D, Pol::H),
        ]
    }
}

/// Outer modes `(a_NH, a_NV, d_1V, d_1H)`.
fn outer_modes(n_stations: usize) -> [usize; 4] {
    [
        mode_index(n_stations - 1, Spatial::A, Pol::H),
        mode_index(n_stations - 1, Spatial::A, Pol::V),
        mode_index(0, Spatial::D, Pol::V),
        mode_index(0, Spatial::D, Pol::H),
    ]
}

/// Relay state after all Bell-measurement beam splitters, restricted to the
/// admissible inner detection patterns.
#[derive(Debug, Clone)]
pub struct OracleRun {
    params: RelayParams,
    state: FockState,
}

impl OracleRun {
    pub fn new(params: &RelayParams) -> Result<Self, RelayError> {
        Self::with_term_cap(params, DEFAULT_TERM_CAP)
    }

    pub fn with_term_cap(params: &RelayParams, term_cap: usize) -> Result<Self, RelayError> {
        let n = params.n_stations();
        let smax = usize::from(params.tuple_sum_max());
        let cap = (2 * smax).min(u8::MAX as usize) as u8;
        // A station's tuple sum equals its pair count, so capping pairs at
        // tuple_sum_max drops only terms outside the admissible support.
        let source = {
            let mut s = pdc_state_with_pair_cap(params.chi(), smax.min(u8::MAX as usize) as u8, smax);
            s.cap = cap;
            s.term_cap = term_cap;
            s
        };
        let admissible = |t: CountTuple| {
            t.max_entry() <= params.n_max()
                && (params.tuple_sum_min()..=params.tuple_sum_max()).contains(&t.sum())
        };
        let tuple_of = |k: &[u8], modes: [usize; 4]| CountTuple::new(k[modes[0]], k[modes[1]], k[modes[2]], k[modes[3]]);

        let mut state = FockState::vacuum(0, cap).with_term_cap(term_cap);
        for p in 0..n {
            state = state.tensor(&source)?;
            for pol in [Pol::H, Pol::V] {
                state = state.apply_beamsplitter(mode_index(p, Spatial::B, pol), mode_index(p, Spatial::C, pol))?;
            }
            let modes = tuple_modes(n, p);
            state.retain(|k| admissible(tuple_of(k, modes)));
            if p > 0 {
                for pol in [Pol::H, Pol::V] {
                    state = state
                        .apply_beamsplitter(mode_index(p - 1, Spatial::A, pol), mode_index(p, Spatial::D, pol))?;
                }
                let modes = tuple_modes(n, n + p - 1);
                state.retain(|k| admissible(tuple_of(k, modes)));
            }
        }
        Ok(Self {
            params: params.clone(),
            state,
        })
    }

    pub fn state(&self) -> &FockState {
        &self.state
    }

    fn pattern_of(&self, k: &[u8]) -> InnerPattern {
        let n = self.params.n_stations();
        let tuples = (0..self.params.n_tuples())
            .map(|u| {
                let m = tuple_modes(n, u);
                CountTuple::new(k[m[0]], k[m[1]], k[m[2]], k[m[3]])
            })
            .collect();
        InnerPattern::from_tuples_unchecked(tuples)
    }

    fn herald_weight(&self, k: &[u8], heralds: &[ClickTuple], det: &DetectorModel) -> f64 {
        let n = self.params.n_stations();
        heralds
            .iter()
            .enumerate()
            .map(|(u, c)| {
                tuple_modes(n, u)
                    .iter()
                    .zip(c.bits())
                    .map(|(&m, q)| click_prob(q, u32::from(k[m]), det))
                    .product::<f64>()
            })
            .product()
    }

    /// Probability of every admissible inner count pattern under ideal detection.
    pub fn pattern_distribution(&self) -> BTreeMap<InnerPattern, f64> {
        let mut out = BTreeMap::new();
        for (k, a) in sorted_terms(&self.state) {
            *out.entry(self.pattern_of(k)).or_insert(0.0) += a.norm_sqr();
        }
        out
    }

    pub fn posterior(
        &self,
        heralds: &[ClickTuple],
        det: &DetectorModel,
    ) -> Result<BTreeMap<InnerPattern, f64>, RelayError> {
        check_heralds(heralds, &self.params)?;
        let mut joint: BTreeMap<InnerPattern, CompensatedSum> = BTreeMap::new();
        for (k, a) in sorted_terms(&self.state) {
            let w = self.herald_weight(k, heralds, det) * a.norm_sqr();
            if w > 0.0 {
                joint.entry(self.pattern_of(k)).or_default().add(w);
            }
        }
        let total: f64 = joint.values().map(|s| s.value()).collect::<CompensatedSum>().value();
        if !(total > 0.0) {
            return Err(RelayError::DegenerateEvidence {
                clicks: herald_label(heralds),
                evidence: total,
            });
        }
        Ok(joint.into_iter().map(|(p, s)| (p, s.value() / total)).collect())
    }

    /// Heralded occupation distribution of the end modes before the rotators.
    pub fn end_diagonal(
        &self,
        heralds: &[ClickTuple],
        det: &DetectorModel,
    ) -> Result<BTreeMap<EndKey, f64>, RelayError> {
        check_heralds(heralds, &self.params)?;
        let o = outer_modes(self.params.n_stations());
        let mut joint: BTreeMap<EndKey, CompensatedSum> = BTreeMap::new();
        let mut total = CompensatedSum::new();
        for (k, a) in sorted_terms(&self.state) {
            let w = self.herald_weight(k, heralds, det) * a.norm_sqr();
            total.add(w);
            let key = EndKey {
                a_h: k[o[0]],
                a_v: k[o[1]],
                d_v: k[o[2]],
                d_h: k[o[3]],
            };
            joint.entry(key).or_default().add(w);
        }
        let total = total.value();
        if !(total > 0.0) {
            return Err(RelayError::DegenerateEvidence {
                clicks: herald_label(heralds),
                evidence: total,
            });
        }
        Ok(joint
            .into_iter()
            .map(|(k, s)| (k, s.value() / total))
            .filter(|(_, w)| *w > 0.0)
            .collect())
    }

    /// `P(outer clicks | heralds)` for each outer click tuple.
    pub fn coincidences(
        &self,
        heralds: &[ClickTuple],
        outer: &[ClickTuple],
        angles: RotatorAngles,
        det: &DetectorModel,
    ) -> Result<Vec<f64>, RelayError> {
        check_heralds(heralds, &self.params)?;
        let n = self.params.n_stations();
        let mut inner: Vec<(usize, bool)> = Vec::new();
        for (u, c) in heralds.iter().enumerate() {
            inner.extend(tuple_modes(n, u).iter().copied().zip(c.bits()));
        }
        let evidence = detector_povm_prob(&self.state, &inner, det);
        if !(evidence > 0.0) {
            return Err(RelayError::DegenerateEvidence {
                clicks: herald_label(heralds),
                evidence,
            });
        }
        let rotated = self
            .state
            .apply_rotator(
                mode_index(n - 1, Spatial::A, Pol::H),
                mode_index(n - 1, Spatial::A, Pol::V),
                angles.alpha_tilde(),
            )?
            .apply_rotator(
                mode_index(0, Spatial::D, Pol::H),
                mode_index(0, Spatial::D, Pol::V),
                angles.delta_tilde(),
            )?;
        let o = outer_modes(n);
        Ok(outer
            .iter()
            .map(|c| {
                let mut all = inner.clone();
                all.extend(o.iter().copied().zip(c.bits()));
                detector_povm_prob(&rotated, &all, det) / evidence
            })
            .collect())
    }
}

fn sorted_terms(state: &FockState) -> Vec<(&[u8], Complex64)> {
    let mut v: Vec<(&[u8], Complex64)> = state.iter().collect();
    v.sort_by(|a, b| a.0.cmp(b.0));
    v
}

/// Q for the four outer classes `1010, 0101, 0110, 1001`, heralded by all-`{1,0,1,0}`,
/// with the detector derived from the parameters.
pub fn oracle_coincidence(params: &RelayParams, angles: RotatorAngles) -> Result<[f64; 4], RelayError> {
    let run = OracleRun::new(params)?;
    let heralds = vec![ClickTuple::SINGLET_1010; params.n_tuples()];
    let q = run.coincidences(
        &heralds,
        &crate::coincidence::OUTER_CLASSES,
        angles,
        &DetectorModel::from_params(params),
    )?;
    Ok([q[0], q[1], q[2], q[3]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawParams;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_mode(m: u8, n: u8) -> FockState {
        let mut s = FockState::vacuum(2, 6);
        s.amps.clear();
        s.amps.insert(vec![m, n], c(1.0, 0.0));
        s
    }

    #[test]
    fn single_photon_beamsplitter() {
        let out = two_mode(1, 0).apply_beamsplitter(0, 1).unwrap();
        assert!((out.amplitude(&[1, 0]) - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((out.amplitude(&[0, 1]) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn hong_ou_mandel() {
        let out = two_mode(1, 1).apply_beamsplitter(0, 1).unwrap();
        assert!(out.amplitude(&[1, 1]).norm() < 1e-15);
        assert!((out.amplitude(&[2, 0]) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((out.amplitude(&[0, 2]) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn transformations_preserve_norm() {
        let s = pdc_state(0.4, 2);
        let before = s.norm_sqr();
        let mut t = s.clone();
        t.cap = 4;
        let t = t
            .apply_beamsplitter(2, 4)
            .unwrap()
            .apply_beamsplitter(3, 5)
            .unwrap()
            .apply_rotator(0, 1, 0.7)
            .unwrap()
            .apply_rotator(6, 7, -2.1)
            .unwrap();
        assert_eq!(t.truncation_loss(), 0.0);
        assert!((t.norm_sqr() - before).abs() < 1e-12);
    }

    #[test]
    fn rotator_identity_and_period() {
        let s = two_mode(2, 1);
        let id = s.apply_rotator(0, 1, 0.0).unwrap();
        assert!((id.amplitude(&[2, 1]) - c(1.0, 0.0)).norm() < 1e-15);
        // A full turn is the identity; a half turn gives (-1)^n.
        let turn = s.apply_rotator(0, 1, 2.0 * PI).unwrap();
        let half = s.apply_rotator(0, 1, PI).unwrap();
        for (k, want) in [([2u8, 1u8], c(1.0, 0.0)), ([1, 2], c(0.0, 0.0)), ([3, 0], c(0.0, 0.0))] {
            assert!((turn.amplitude(&k) - want).norm() < 1e-12);
            assert!((half.amplitude(&k) + want).norm() < 1e-12);
        }
    }

    #[test]
    fn pdc_amplitudes() {
        let s = pdc_state(0.0, 3);
        assert_eq!(s.len(), 1);
        assert_eq!(s.amplitude(&[0; 8]), c(1.0, 0.0));

        let chi = 0.3;
        let s = pdc_state(chi, 3);
        let ratio = s.amplitude(&[1, 0, 1, 0, 0, 0, 0, 0]) / s.amplitude(&[0; 8]);
        assert!((ratio - c(0.0, chi.tanh())).norm() < 1e-15);

        let deficit = 1.0 - pdc_state(0.1, 4).norm_sqr();
        assert!(deficit > 0.0 && deficit < 1e-6, "{deficit}");
    }

    #[test]
    fn vacuum_povm() {
        let s = FockState::vacuum(8, 3);
        let det = DetectorModel::new(0.3, 1e-3).unwrap();
        let clicks: Vec<(usize, bool)> = (0..8).map(|m| (m, false)).collect();
        let p = detector_povm_prob(&s, &clicks, &det);
        assert!((p - (1.0f64 - 1e-3).powi(8)).abs() < 1e-15);
    }

    #[test]
    fn ideal_povm_counts_occupied_modes() {
        let mut s = pdc_state(0.5, 2);
        s.cap = 4;
        let s = s.apply_beamsplitter(2, 4).unwrap();
        let clicks = [(2usize, true), (4usize, false)];
        let p = detector_povm_prob(&s, &clicks, &DetectorModel::ideal());
        let direct: f64 = s.iter().filter(|(k, _)| k[2] >= 1 && k[4] == 0).map(|(_, a)| a.norm_sqr()).sum();
        assert!((p - direct).abs() < 1e-14);
    }

    #[test]
    fn bad_mode_is_rejected() {
        let s = FockState::vacuum(2, 2);
        assert_eq!(s.apply_beamsplitter(0, 5).unwrap_err(), RelayError::NoSuchMode(5));
    }

    #[test]
    fn term_cap_is_enforced() {
        let p = RawParams::fixed_efficiency(2, 0.2, 0.5, 0.0).validate().unwrap();
        let err = OracleRun::with_term_cap(&p, 1000).unwrap_err();
        assert!(matches!(err, RelayError::OracleTooLarge { .. }));
    }

    #[test]
    fn ideal_detectors_give_unit_visibility() {
        let p = RawParams {
            tuple_sum_max: 2,
            ..RawParams::fixed_efficiency(1, 0.2, 1.0, 0.0)
        }
        .validate()
        .unwrap();
        let q = oracle_coincidence(&p, RotatorAngles::equal(FRAC_PI_2).unwrap()).unwrap();
        // Half of the heralded weight has both photons at one end and yields
        // no outer coincidence at all.
        assert!((q[0] + q[1] - 0.5).abs() < 1e-12, "{q:?}");
        assert!(q[2] + q[3] < 1e-15);
    }
}
