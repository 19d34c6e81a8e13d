//! Configuration, pattern and result types shared across the crate.
//!
//! Everything here is validated on construction and immutable afterwards.
//! Counts are small unsigned integers; probabilities and amplitudes are `f64`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ParamError, RelayError};

/// Largest photon number a single four-tuple may carry. Bounds the lookup tables.
pub const MAX_TUPLE_SUM: u8 = 16;

/// Unvalidated relay parameters.
///
/// Every field is public so configs can be assembled freely; turn it into a
/// [`RelayParams`] with [`RawParams::validate`] (or [`validate_params`]).
/// [`Default`] gives the reference configuration: `chi = 0.1`, `eta0 = 0.70`,
/// dark counts `1e-5`, fibre loss `0.25 dB/km`, constant loss `4 dB`,
/// `n_max = 3`, four-tuple photon sums restricted to `2..=4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawParams {
    pub n_stations: usize,
    pub chi: f64,
    pub eta0: f64,
    pub darkcount: f64,
    pub alpha_db_per_km: f64,
    pub alpha0_db: f64,
    pub distance_km: f64,
    pub n_max: u8,
    pub tuple_sum_min: u8,
    pub tuple_sum_max: u8,
}

impl Default for RawParams {
    fn default() -> Self {
        Self {
            n_stations: 1,
            chi: 0.1,
            eta0: 0.70,
            darkcount: 1e-5,
            alpha_db_per_km: 0.25,
            alpha0_db: 4.0,
            distance_km: 200.0,
            n_max: 3,
            tuple_sum_min: 2,
            tuple_sum_max: 4,
        }
    }
}

impl RawParams {
    /// Fixed-efficiency configuration: net detector efficiency `eta` with no
    /// transmission or constant loss.
    pub fn fixed_efficiency(n_stations: usize, chi: f64, eta: f64, darkcount: f64) -> Self {
        Self {
            n_stations,
            chi,
            eta0: eta,
            darkcount,
            alpha_db_per_km: 0.0,
            alpha0_db: 0.0,
            distance_km: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(self) -> Result<RelayParams, RelayError> {
        validate_params(self)
    }
}

fn bad(field: &'static str, reason: impl Into<String>) -> RelayError {
    RelayError::InvalidParam(ParamError {
        field,
        reason: reason.into(),
    })
}

fn finite_non_negative(field: &'static str, value: f64) -> Result<(), RelayError> {
    if !value.is_finite() || value < 0.0 {
        return Err(bad(field, format!("must be finite and >= 0, got {value}")));
    }
    Ok(())
}

/// Checks every parameter invariant and returns the validated parameters.
pub fn validate_params(raw: RawParams) -> Result<RelayParams, RelayError> {
    if raw.n_stations == 0 {
        return Err(bad("n_stations", "must be at least 1"));
    }
    finite_non_negative("chi", raw.chi)?;
    if !(0.0..=1.0).contains(&raw.eta0) {
        return Err(bad("eta0", format!("must lie in [0, 1], got {}", raw.eta0)));
    }
    if !(raw.darkcount >= 0.0 && raw.darkcount < 1.0) {
        return Err(bad(
            "darkcount",
            format!("must lie in [0, 1), got {}", raw.darkcount),
        ));
    }
    finite_non_negative("alpha_db_per_km", raw.alpha_db_per_km)?;
    finite_non_negative("alpha0_db", raw.alpha0_db)?;
    finite_non_negative("distance_km", raw.distance_km)?;
    if raw.n_max == 0 {
        return Err(bad("n_max", "must be at least 1"));
    }
    if raw.tuple_sum_min > raw.tuple_sum_max {
        return Err(bad(
            "tuple_sum_min",
            format!(
                "lower bound {} exceeds upper bound {}",
                raw.tuple_sum_min, raw.tuple_sum_max
            ),
        ));
    }
    let reachable = 4 * u32::from(raw.n_max);
    if u32::from(raw.tuple_sum_max) > reachable {
        return Err(bad(
            "tuple_sum_max",
            format!(
                "{} exceeds 4 * n_max = {reachable}",
                raw.tuple_sum_max
            ),
        ));
    }
    if raw.tuple_sum_max > MAX_TUPLE_SUM {
        return Err(bad(
            "tuple_sum_max",
            format!("{} exceeds the supported maximum {MAX_TUPLE_SUM}", raw.tuple_sum_max),
        ));
    }
    Ok(RelayParams { raw })
}

/// Validated relay parameters. Obtain one through [`validate_params`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RelayParams {
    raw: RawParams,
}

impl RelayParams {
    pub fn n_stations(&self) -> usize {
        self.raw.n_stations
    }
    pub fn chi(&self) -> f64 {
        self.raw.chi
    }
    pub fn eta0(&self) -> f64 {
        self.raw.eta0
    }
    pub fn darkcount(&self) -> f64 {
        self.raw.darkcount
    }
    pub fn alpha_db_per_km(&self) -> f64 {
        self.raw.alpha_db_per_km
    }
    pub fn alpha0_db(&self) -> f64 {
        self.raw.alpha0_db
    }
    pub fn distance_km(&self) -> f64 {
        self.raw.distance_km
    }
    pub fn n_max(&self) -> u8 {
        self.raw.n_max
    }
    pub fn tuple_sum_min(&self) -> u8 {
        self.raw.tuple_sum_min
    }
    pub fn tuple_sum_max(&self) -> u8 {
        self.raw.tuple_sum_max
    }

    /// Number of Bell-measurement four-tuples, `2N - 1`.
    pub fn n_tuples(&self) -> usize {
        2 * self.raw.n_stations - 1
    }

    pub fn raw(&self) -> &RawParams {
        &self.raw
    }

    /// Copy of the raw fields, handy for deriving a modified configuration.
    pub fn to_raw(&self) -> RawParams {
        self.raw.clone()
    }
}

/// Ideal photon counts `{i, j, k, l}` at one detector four-tuple.
///
/// At an elementary station the entries are the modes `b'_H, b'_V, c'_V, c'_H`
/// behind the Bell-measurement beam splitter; at a secondary connection they
/// are the analogous output modes of the beam splitter joining `a_n` and `d_{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CountTuple {
    i: u8,
    j: u8,
    k: u8,
    l: u8,
}

impl CountTuple {
    pub const fn new(i: u8, j: u8, k: u8, l: u8) -> Self {
        Self { i, j, k, l }
    }
    pub fn i(&self) -> u8 {
        self.i
    }
    pub fn j(&self) -> u8 {
        self.j
    }
    pub fn k(&self) -> u8 {
        self.k
    }
    pub fn l(&self) -> u8 {
        self.l
    }
    pub fn as_array(&self) -> [u8; 4] {
        [self.i, self.j, self.k, self.l]
    }
    pub fn sum(&self) -> u8 {
        self.i + self.j + self.k + self.l
    }
    pub fn max_entry(&self) -> u8 {
        self.i.max(self.j).max(self.k).max(self.l)
    }
    /// H-polarised photons (`i + l`).
    pub fn horizontal(&self) -> u8 {
        self.i + self.l
    }
    /// V-polarised photons (`j + k`).
    pub fn vertical(&self) -> u8 {
        self.j + self.k
    }
}

impl fmt::Display for CountTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{},{},{}}}", self.i, self.j, self.k, self.l)
    }
}

/// Observed binary clicks `{q, r, s, t}` at one detector four-tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClickTuple {
    bits: [bool; 4],
}

impl ClickTuple {
    /// `{1,0,1,0}`: one of the two singlet heralds.
    pub const SINGLET_1010: ClickTuple = ClickTuple {
        bits: [true, false, true, false],
    };
    /// `{0,1,0,1}`: the other singlet herald.
    pub const SINGLET_0101: ClickTuple = ClickTuple {
        bits: [false, true, false, true],
    };
    /// `{0,1,1,0}`: correlated outcome on the outer modes.
    pub const CLICKS_0110: ClickTuple = ClickTuple {
        bits: [false, true, true, false],
    };
    /// `{1,0,0,1}`: the other correlated outcome on the outer modes.
    pub const CLICKS_1001: ClickTuple = ClickTuple {
        bits: [true, false, false, true],
    };

    pub fn new(q: u8, r: u8, s: u8, t: u8) -> Result<Self, RelayError> {
        let mut bits = [false; 4];
        for (slot, (name, value)) in bits
            .iter_mut()
            .zip([("q", q), ("r", r), ("s", s), ("t", t)])
        {
            *slot = match value {
                0 => false,
                1 => true,
                _ => return Err(bad("clicks", format!("{name} must be 0 or 1, got {value}"))),
            };
        }
        Ok(Self { bits })
    }

    pub const fn from_bits(bits: [bool; 4]) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> [bool; 4] {
        self.bits
    }

    /// Parses a four-character bit string such as `"1010"`.
    pub fn parse(text: &str) -> Result<Self, RelayError> {
        let digits: Vec<u8> = text
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(bad("clicks", format!("invalid click string {text:?}"))),
            })
            .collect::<Result<_, _>>()?;
        if digits.len() != 4 {
            return Err(bad("clicks", format!("expected four bits, got {text:?}")));
        }
        Self::new(digits[0], digits[1], digits[2], digits[3])
    }
}

impl fmt::Display for ClickTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits {
            write!(f, "{}", u8::from(b))?;
        }
        Ok(())
    }
}

/// Ideal counts at all `2N - 1` four-tuples.
///
/// Positions `0..N` are the elementary stations, `N..2N-1` the secondary
/// connections between neighbouring stations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct InnerPattern {
    tuples: Vec<CountTuple>,
}

impl InnerPattern {
    pub fn new(tuples: Vec<CountTuple>, params: &RelayParams) -> Result<Self, RelayError> {
        if tuples.len() != params.n_tuples() {
            return Err(bad(
                "pattern",
                format!(
                    "expected {} four-tuples for N = {}, got {}",
                    params.n_tuples(),
                    params.n_stations(),
                    tuples.len()
                ),
            ));
        }
        if let Some(t) = tuples.iter().find(|t| t.max_entry() > params.n_max()) {
            return Err(bad(
                "pattern",
                format!("tuple {t} exceeds n_max = {}", params.n_max()),
            ));
        }
        Ok(Self { tuples })
    }

    /// Pattern with the same tuple at every position.
    pub fn uniform(tuple: CountTuple, params: &RelayParams) -> Result<Self, RelayError> {
        Self::new(vec![tuple; params.n_tuples()], params)
    }

    pub(crate) fn from_tuples_unchecked(tuples: Vec<CountTuple>) -> Self {
        Self { tuples }
    }

    pub fn tuples(&self) -> &[CountTuple] {
        &self.tuples
    }

    pub fn n_stations(&self) -> usize {
        self.tuples.len().div_ceil(2)
    }

    /// Four-tuple of elementary station `p` (zero-based).
    pub fn station(&self, p: usize) -> CountTuple {
        self.tuples[p]
    }

    /// Four-tuple of the secondary connection between stations `n` and `n + 1` (zero-based).
    pub fn connection(&self, n: usize) -> CountTuple {
        self.tuples[self.n_stations() + n]
    }

    /// Total photons detected across all four-tuples.
    pub fn total_photons(&self) -> u32 {
        self.tuples.iter().map(|t| u32::from(t.sum())).sum()
    }
}

impl fmt::Display for InnerPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, t) in self.tuples.iter().enumerate() {
            if n > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Photon counts on the outer modes `a_{N,H}, a_{N,V}, d_{1,V}, d_{1,H}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OuterCounts {
    pub a_h: u8,
    pub a_v: u8,
    pub d_v: u8,
    pub d_h: u8,
}

impl OuterCounts {
    pub const fn new(a_h: u8, a_v: u8, d_v: u8, d_h: u8) -> Self {
        Self { a_h, a_v, d_v, d_h }
    }
    pub fn a_total(&self) -> u8 {
        self.a_h + self.a_v
    }
    pub fn d_total(&self) -> u8 {
        self.d_h + self.d_v
    }
}

/// Polarisation-rotator settings on the outer modes `a_N` (`alpha_tilde`)
/// and `d_1` (`delta_tilde`), in radians.
///
/// A rotator at angle `θ` maps `H† → cos θ H† + i sin θ V†` and
/// `V† → i sin θ H† + cos θ V†`, so equal settings leave the singlet
/// invariant and settings a quarter turn apart exchange the correlated and
/// anti-correlated outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatorAngles {
    alpha_tilde: f64,
    delta_tilde: f64,
}

impl RotatorAngles {
    pub fn new(alpha_tilde: f64, delta_tilde: f64) -> Result<Self, RelayError> {
        if !alpha_tilde.is_finite() {
            return Err(bad("alpha_tilde", "must be finite"));
        }
        if !delta_tilde.is_finite() {
            return Err(bad("delta_tilde", "must be finite"));
        }
        Ok(Self {
            alpha_tilde,
            delta_tilde,
        })
    }

    /// Both rotators at the same angle.
    pub fn equal(angle: f64) -> Result<Self, RelayError> {
        Self::new(angle, angle)
    }

    pub fn alpha_tilde(&self) -> f64 {
        self.alpha_tilde
    }
    pub fn delta_tilde(&self) -> f64 {
        self.delta_tilde
    }
}

/// `V = (V_max - V_min) / (V_max + V_min)` and the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibilityReport {
    pub v_max: f64,
    pub v_min: f64,
    pub visibility: f64,
    /// `Q_1010, Q_0101, Q_0110, Q_1001`.
    pub q: [f64; 4],
    pub params: RelayParams,
    pub angles: RotatorAngles,
}

impl VisibilityReport {
    pub fn from_q(q: [f64; 4], params: RelayParams, angles: RotatorAngles) -> Self {
        let v_max = q[0] + q[1];
        let v_min = q[2] + q[3];
        Self {
            v_max,
            v_min,
            visibility: contrast(v_max, v_min),
            q,
            params,
            angles,
        }
    }
}

/// Normalised contrast; zero when both inputs vanish.
pub fn contrast(v_max: f64, v_min: f64) -> f64 {
    let total = v_max + v_min;
    if total > 0.0 {
        (v_max - v_min) / total
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> RawParams {
        RawParams {
            n_stations: 1,
            chi: 0.1,
            eta0: 0.7,
            darkcount: 1e-5,
            alpha_db_per_km: 0.25,
            alpha0_db: 0.0,
            distance_km: 200.0,
            n_max: 3,
            ..RawParams::default()
        }
    }

    fn field_of(err: RelayError) -> &'static str {
        match err {
            RelayError::InvalidParam(p) => p.field,
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn accepts_reference_configuration() {
        let raw = reference();
        let params = validate_params(raw.clone()).unwrap();
        assert_eq!(params.raw(), &raw);
        assert_eq!(params.n_tuples(), 1);
    }

    #[test]
    fn rejects_efficiency_above_one() {
        let raw = RawParams {
            eta0: 1.2,
            ..reference()
        };
        assert_eq!(field_of(validate_params(raw).unwrap_err()), "eta0");
    }

    #[test]
    fn rejects_inverted_tuple_bounds() {
        let raw = RawParams {
            tuple_sum_min: 5,
            tuple_sum_max: 4,
            ..reference()
        };
        assert_eq!(field_of(validate_params(raw).unwrap_err()), "tuple_sum_min");
    }

    #[test]
    fn rejects_other_out_of_range_fields() {
        let cases: Vec<(RawParams, &str)> = vec![
            (RawParams { n_stations: 0, ..reference() }, "n_stations"),
            (RawParams { chi: -0.1, ..reference() }, "chi"),
            (RawParams { chi: f64::NAN, ..reference() }, "chi"),
            (RawParams { darkcount: 1.0, ..reference() }, "darkcount"),
            (RawParams { n_max: 0, ..reference() }, "n_max"),
            (RawParams { n_max: 1, tuple_sum_max: 5, ..reference() }, "tuple_sum_max"),
            (RawParams { distance_km: -1.0, ..reference() }, "distance_km"),
        ];
        for (raw, field) in cases {
            assert_eq!(field_of(validate_params(raw).unwrap_err()), field);
        }
    }

    #[test]
    fn inner_pattern_length_is_two_n_minus_one() {
        for n in 1..=4 {
            let params = RawParams {
                n_stations: n,
                ..reference()
            }
            .validate()
            .unwrap();
            let p = InnerPattern::uniform(CountTuple::new(1, 0, 1, 0), &params).unwrap();
            assert_eq!(p.tuples().len(), 2 * n - 1);
            assert_eq!(p.n_stations(), n);
            assert!(InnerPattern::new(vec![CountTuple::new(1, 0, 1, 0); 2 * n], &params).is_err());
        }
    }

    #[test]
    fn inner_pattern_rejects_counts_above_n_max() {
        let params = reference().validate().unwrap();
        assert!(InnerPattern::new(vec![CountTuple::new(4, 0, 0, 0)], &params).is_err());
    }

    #[test]
    fn click_tuple_bits_are_binary() {
        assert!(ClickTuple::new(1, 0, 2, 0).is_err());
        assert_eq!(ClickTuple::new(1, 0, 1, 0).unwrap(), ClickTuple::SINGLET_1010);
        assert_eq!(ClickTuple::parse("0101").unwrap(), ClickTuple::SINGLET_0101);
        assert!(ClickTuple::parse("010").is_err());
        assert_eq!(ClickTuple::CLICKS_0110.to_string(), "0110");
    }

    #[test]
    fn contrast_of_report() {
        let params = reference().validate().unwrap();
        let r = VisibilityReport::from_q(
            [0.3, 0.3, 0.1, 0.1],
            params,
            RotatorAngles::equal(1.0).unwrap(),
        );
        assert!((r.visibility - 0.5).abs() < 1e-15);
        assert_eq!(contrast(0.0, 0.0), 0.0);
    }
}
