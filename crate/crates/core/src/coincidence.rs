//! Bayesian posterior over ideal inner detections, heralded coincidence
//! probabilities, visibility, and parameter sweeps.
//!
//! `Q(outer | heralds)` is the exact conditional probability
//! `Σ_pattern p(heralds | pattern) Σ_outer p(outer clicks | counts) |A|²`
//! divided by `Σ_pattern p(heralds | pattern) ‖Φ_pattern‖²`, which equals
//! `Σ_pattern P(pattern | heralds) Σ_outer p(outer clicks | counts) |A|² / p(pattern)`.
//!
//! Two evaluation routes give the same numbers: [`Method::Transfer`]
//! contracts the chain link by link (fast for every N), and
//! [`Method::Enumerate`] visits every inner pattern explicitly. Enumeration is
//! split by first tuple across rayon workers and merged in a fixed order with
//! compensated sums, so the result does not depend on the thread count.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use rayon::prelude::*;

use crate::amplitudes::{outer_amplitudes, ClosedForm, EndStateTerms, RotatorTable};
use crate::combinatorics::{admissible_tuples, enumerate_inner_patterns_with_prefix};
use crate::detector::{ClickTable, DetectorModel};
use crate::error::{ParamError, RelayError};
use crate::model::{
    contrast, ClickTuple, InnerPattern, OuterCounts, RawParams, RelayParams, RotatorAngles,
    VisibilityReport,
};
use crate::numerics::CompensatedSum;
use crate::transfer::{check_heralds, herald_label, Transfer};

/// Outer click classes in report order: `1010, 0101, 0110, 1001`.
pub const OUTER_CLASSES: [ClickTuple; 4] = [
    ClickTuple::SINGLET_1010,
    ClickTuple::SINGLET_0101,
    ClickTuple::CLICKS_0110,
    ClickTuple::CLICKS_1001,
];

/// Bell-inequality visibility threshold `1/√2`.
pub const BELL_THRESHOLD: f64 = FRAC_1_SQRT_2;

/// Visibility below which the relay is treated as no longer working.
pub const CUTOFF_VISIBILITY: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Transfer,
    Enumerate,
}

/// Every inner four-tuple heralds `{1,0,1,0}`.
pub fn representative_heralds(params: &RelayParams) -> Vec<ClickTuple> {
    vec![ClickTuple::SINGLET_1010; params.n_tuples()]
}

fn pattern_weight(table: &ClickTable, heralds: &[ClickTuple], pattern: &InnerPattern) -> f64 {
    heralds
        .iter()
        .zip(pattern.tuples())
        .map(|(&c, &t)| table.tuple(c, t))
        .product()
}

fn click_table(params: &RelayParams, det: &DetectorModel) -> ClickTable {
    let max = (2 * usize::from(params.tuple_sum_max())).max(usize::from(params.n_max()));
    ClickTable::new(det, max)
}

/// Posterior `P(pattern | clicks)` over the admissible inner patterns.
///
/// Patterns with zero posterior weight are omitted.
pub fn posterior(
    clicks: &[ClickTuple],
    params: &RelayParams,
) -> Result<BTreeMap<InnerPattern, f64>, RelayError> {
    posterior_with_detector(clicks, params, &DetectorModel::from_params(params))
}

pub fn posterior_with_detector(
    clicks: &[ClickTuple],
    params: &RelayParams,
    det: &DetectorModel,
) -> Result<BTreeMap<InnerPattern, f64>, RelayError> {
    check_heralds(clicks, params)?;
    let prior = PatternPrior::new(params);
    let weights = prior.posterior_weights(clicks, det)?;
    Ok(prior
        .entries
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .map(|((p, _), w)| (p, w))
        .collect())
}

/// Ideal Bell-measurement weight `p(pattern)` of every admissible pattern,
/// in enumeration order.
#[derive(Debug, Clone)]
pub struct PatternPrior {
    params: RelayParams,
    entries: Vec<(InnerPattern, f64)>,
}

impl PatternPrior {
    pub fn new(params: &RelayParams) -> Self {
        let cf = ClosedForm::new(params);
        let chunks: Vec<Vec<(InnerPattern, f64)>> = admissible_tuples(params)
            .into_par_iter()
            .map(|first| {
                enumerate_inner_patterns_with_prefix(params, first)
                    .map(|p| {
                        let w = cf.ideal_bell_prob(&p);
                        (p, w)
                    })
                    .collect()
            })
            .collect();
        Self {
            params: params.clone(),
            entries: chunks.into_iter().flatten().collect(),
        }
    }

    pub fn entries(&self) -> &[(InnerPattern, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Posterior weight of each entry given the inner clicks.
    pub fn posterior_weights(&self, clicks: &[ClickTuple], det: &DetectorModel) -> Result<Vec<f64>, RelayError> {
        check_heralds(clicks, &self.params)?;
        let table = click_table(&self.params, det);
        let joint: Vec<f64> = self
            .entries
            .iter()
            .map(|(p, prior)| pattern_weight(&table, clicks, p) * prior)
            .collect();
        let total = joint.iter().copied().collect::<CompensatedSum>().value();
        if !(total > 0.0) {
            return Err(RelayError::DegenerateEvidence {
                clicks: herald_label(clicks),
                evidence: total,
            });
        }
        Ok(joint.into_iter().map(|m| m / total).collect())
    }
}

/// One term of the heralded end-mode mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldComponent {
    pub weight: f64,
    pub pattern: InnerPattern,
    pub state: EndStateTerms,
}

/// End-mode state after heralding: `Σ P(pattern) |Φ_pattern⟩⟨Φ_pattern| / ‖Φ_pattern‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldedState {
    pub components: Vec<HeraldComponent>,
}

impl HeraldedState {
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Probability of each end-mode occupation before the rotators.
    pub fn diagonal(&self) -> BTreeMap<crate::amplitudes::EndKey, f64> {
        let mut out = BTreeMap::new();
        for c in &self.components {
            let norm = c.state.norm_sqr();
            for (k, a) in c.state.iter() {
                *out.entry(k).or_insert(0.0) += c.weight * a * a / norm;
            }
        }
        out
    }
}

pub fn heralded_state(clicks: &[ClickTuple], params: &RelayParams) -> Result<HeraldedState, RelayError> {
    heralded_state_with_detector(clicks, params, &DetectorModel::from_params(params))
}

pub fn heralded_state_with_detector(
    clicks: &[ClickTuple],
    params: &RelayParams,
    det: &DetectorModel,
) -> Result<HeraldedState, RelayError> {
    let post = posterior_with_detector(clicks, params, det)?;
    let cf = ClosedForm::new(params);
    let components = post
        .into_iter()
        .map(|(pattern, weight)| HeraldComponent {
            weight,
            state: cf.end_state_terms(&pattern),
            pattern,
        })
        .collect();
    Ok(HeraldedState { components })
}

/// `Q(outer_clicks | inner_clicks)` at the given rotator angles.
pub fn coincidence_prob(
    outer_clicks: ClickTuple,
    inner_clicks: &[ClickTuple],
    angles: RotatorAngles,
    params: &RelayParams,
) -> Result<f64, RelayError> {
    Ok(Transfer::new(params).coincidences(inner_clicks, &[outer_clicks], angles)?[0])
}

/// Q for the four outer classes in [`OUTER_CLASSES`] order.
pub fn coincidence_probs(
    inner_clicks: &[ClickTuple],
    angles: RotatorAngles,
    params: &RelayParams,
    method: Method,
) -> Result<[f64; 4], RelayError> {
    coincidence_probs_with_detector(
        inner_clicks,
        angles,
        params,
        &DetectorModel::from_params(params),
        method,
    )
}

pub fn coincidence_probs_with_detector(
    inner_clicks: &[ClickTuple],
    angles: RotatorAngles,
    params: &RelayParams,
    det: &DetectorModel,
    method: Method,
) -> Result<[f64; 4], RelayError> {
    let q = match method {
        Method::Transfer => {
            Transfer::with_detector(params, det).coincidences(inner_clicks, &OUTER_CLASSES, angles)?
        }
        Method::Enumerate => enumerate_coincidences(inner_clicks, &OUTER_CLASSES, angles, params, det)?,
    };
    Ok([q[0], q[1], q[2], q[3]])
}

#[derive(Debug, Clone)]
struct PartialSums {
    numerators: Vec<CompensatedSum>,
    evidence: CompensatedSum,
}

impl PartialSums {
    fn new(n: usize) -> Self {
        Self {
            numerators: vec![CompensatedSum::new(); n],
            evidence: CompensatedSum::new(),
        }
    }

    fn merge(&mut self, other: &PartialSums) {
        for (a, b) in self.numerators.iter_mut().zip(&other.numerators) {
            a.merge(b);
        }
        self.evidence.merge(&other.evidence);
    }
}

fn outer_click_prob(table: &ClickTable, clicks: ClickTuple, o: OuterCounts) -> f64 {
    let b = clicks.bits();
    table.prob(b[0], usize::from(o.a_h))
        * table.prob(b[1], usize::from(o.a_v))
        * table.prob(b[2], usize::from(o.d_v))
        * table.prob(b[3], usize::from(o.d_h))
}

/// Pattern-enumeration route for arbitrary outer click tuples.
pub fn enumerate_coincidences(
    inner_clicks: &[ClickTuple],
    outer: &[ClickTuple],
    angles: RotatorAngles,
    params: &RelayParams,
    det: &DetectorModel,
) -> Result<Vec<f64>, RelayError> {
    check_heralds(inner_clicks, params)?;
    let cf = ClosedForm::new(params);
    let table = click_table(params, det);
    let cap = usize::from(params.tuple_sum_max());
    let rot_a = RotatorTable::new(angles.alpha_tilde(), cap);
    let rot_d = RotatorTable::new(angles.delta_tilde(), cap);
    let chunks: Vec<PartialSums> = admissible_tuples(params)
        .into_par_iter()
        .map(|first| {
            let mut acc = PartialSums::new(outer.len());
            for pattern in enumerate_inner_patterns_with_prefix(params, first) {
                let w = pattern_weight(&table, inner_clicks, &pattern);
                if w == 0.0 {
                    continue;
                }
                let phi = cf.end_state_terms(&pattern);
                if phi.is_empty() {
                    continue;
                }
                acc.evidence.add(w * phi.norm_sqr());
                let amps = outer_amplitudes(&phi, &rot_a, &rot_d);
                for (slot, &clicks) in acc.numerators.iter_mut().zip(outer) {
                    let s: f64 = amps
                        .iter()
                        .map(|(o, a)| outer_click_prob(&table, clicks, *o) * a.norm_sqr())
                        .sum();
                    slot.add(w * s);
                }
            }
            acc
        })
        .collect();
    let mut total = PartialSums::new(outer.len());
    for c in &chunks {
        total.merge(c);
    }
    let den = total.evidence.value();
    if !(den > 0.0) {
        return Err(RelayError::DegenerateEvidence {
            clicks: herald_label(inner_clicks),
            evidence: den,
        });
    }
    Ok(total.numerators.iter().map(|n| n.value() / den).collect())
}

/// Visibility at equal rotator settings `δ̃ = α̃`, heralded by all-`{1,0,1,0}`.
pub fn visibility(params: &RelayParams, alpha_tilde: f64) -> Result<VisibilityReport, RelayError> {
    visibility_with(params, alpha_tilde, &representative_heralds(params), Method::Transfer)
}

pub fn visibility_with(
    params: &RelayParams,
    alpha_tilde: f64,
    heralds: &[ClickTuple],
    method: Method,
) -> Result<VisibilityReport, RelayError> {
    let angles = RotatorAngles::equal(alpha_tilde)?;
    let q = coincidence_probs(heralds, angles, params, method)?;
    Ok(VisibilityReport::from_q(q, params.clone(), angles))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Angle,
    Chi,
    Distance,
    NMax,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::Angle => "delta_tilde",
            SweepVariable::Chi => "chi",
            SweepVariable::Distance => "distance_km",
            SweepVariable::NMax => "n_max",
        }
    }
}

/// Q values and contrast at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowValues {
    pub q: [f64; 4],
    pub v_max: f64,
    pub v_min: f64,
    pub visibility: f64,
}

impl RowValues {
    pub fn from_q(q: [f64; 4]) -> Self {
        let v_max = q[0] + q[1];
        let v_min = q[2] + q[3];
        Self {
            q,
            v_max,
            v_min,
            visibility: contrast(v_max, v_min),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub result: Result<RowValues, RelayError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub variable: SweepVariable,
    pub params: RelayParams,
    pub alpha_tilde: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Successful rows as `(x, values)`.
    pub fn ok_rows(&self) -> impl Iterator<Item = (f64, &RowValues)> {
        self.rows
            .iter()
            .filter_map(|r| r.result.as_ref().ok().map(|v| (r.x, v)))
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    /// First `x` at which the visibility drops below `threshold`, linearly
    /// interpolated between neighbouring rows; `None` if it never does.
    pub fn crossing_below(&self, threshold: f64) -> Option<f64> {
        let rows: Vec<(f64, f64)> = self.ok_rows().map(|(x, v)| (x, v.visibility)).collect();
        let first = rows.first()?;
        if first.1 < threshold {
            return Some(first.0);
        }
        rows.windows(2).find_map(|w| {
            let ((x0, v0), (x1, v1)) = (w[0], w[1]);
            (v0 >= threshold && v1 < threshold).then(|| x0 + (v0 - threshold) / (v0 - v1) * (x1 - x0))
        })
    }
}

/// Grid of `start, start + step, ...` up to `stop` inclusive (within half a step).
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, RelayError> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(RelayError::InvalidParam(ParamError {
            field: "grid",
            reason: format!("need start <= stop and step > 0, got {start}:{stop}:{step}"),
        }));
    }
    let n = ((stop - start) / step + 0.5).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

fn check_grid(grid: &[f64]) -> Result<(), RelayError> {
    if grid.is_empty() {
        return Err(RelayError::InvalidParam(ParamError {
            field: "grid",
            reason: "must not be empty".into(),
        }));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RelayError::InvalidParam(ParamError {
            field: "grid",
            reason: "must be finite and strictly increasing".into(),
        }));
    }
    Ok(())
}

fn sweep<F>(
    variable: SweepVariable,
    params: &RelayParams,
    alpha_tilde: f64,
    grid: &[f64],
    eval: F,
) -> Result<SweepTable, RelayError>
where
    F: Fn(f64) -> Result<[f64; 4], RelayError> + Sync,
{
    check_grid(grid)?;
    RotatorAngles::equal(alpha_tilde)?;
    let rows = grid
        .par_iter()
        .map(|&x| SweepRow {
            x,
            result: eval(x).map(RowValues::from_q),
        })
        .collect();
    Ok(SweepTable {
        variable,
        params: params.clone(),
        alpha_tilde,
        rows,
    })
}

fn q_at_equal(params: &RelayParams, alpha_tilde: f64) -> Result<[f64; 4], RelayError> {
    let angles = RotatorAngles::equal(alpha_tilde)?;
    coincidence_probs(&representative_heralds(params), angles, params, Method::Transfer)
}

fn with_raw(params: &RelayParams, edit: impl FnOnce(&mut RawParams)) -> Result<RelayParams, RelayError> {
    let mut raw = params.to_raw();
    edit(&mut raw);
    raw.validate()
}

/// Q values over `δ̃` at fixed `α̃`.
pub fn sweep_angle(params: &RelayParams, alpha_tilde: f64, grid: &[f64]) -> Result<SweepTable, RelayError> {
    let heralds = representative_heralds(params);
    let transfer = Transfer::new(params);
    sweep(SweepVariable::Angle, params, alpha_tilde, grid, |delta| {
        let q = transfer.coincidences(&heralds, &OUTER_CLASSES, RotatorAngles::new(alpha_tilde, delta)?)?;
        Ok([q[0], q[1], q[2], q[3]])
    })
}

/// Visibility over the source parameter χ.
pub fn sweep_chi(params: &RelayParams, alpha_tilde: f64, grid: &[f64]) -> Result<SweepTable, RelayError> {
    sweep(SweepVariable::Chi, params, alpha_tilde, grid, |chi| {
        q_at_equal(&with_raw(params, |r| r.chi = chi)?, alpha_tilde)
    })
}

/// Visibility over the end-to-end separation in km.
pub fn sweep_distance(params: &RelayParams, alpha_tilde: f64, grid: &[f64]) -> Result<SweepTable, RelayError> {
    sweep(SweepVariable::Distance, params, alpha_tilde, grid, |d| {
        q_at_equal(&with_raw(params, |r| r.distance_km = d)?, alpha_tilde)
    })
}

/// Visibility for each photon-number truncation in `n_max_values`.
pub fn sweep_nmax(params: &RelayParams, alpha_tilde: f64, n_max_values: &[u8]) -> Result<SweepTable, RelayError> {
    let grid: Vec<f64> = n_max_values.iter().map(|&n| f64::from(n)).collect();
    sweep(SweepVariable::NMax, params, alpha_tilde, &grid, |n| {
        q_at_equal(&with_raw(params, |r| r.n_max = n as u8)?, alpha_tilde)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CountTuple;
    use std::f64::consts::FRAC_PI_2;

    fn params(n: usize, chi: f64, eta: f64, dc: f64, n_max: u8) -> RelayParams {
        RawParams {
            n_max,
            ..RawParams::fixed_efficiency(n, chi, eta, dc)
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn posterior_is_normalised() {
        let p = params(1, 0.06f64.sqrt(), 0.04, 1e-5, 3);
        let post = posterior(&representative_heralds(&p), &p).unwrap();
        let total: f64 = post.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ideal_posterior_support() {
        let p = params(1, 0.3, 1.0, 0.0, 3);
        let post = posterior(&representative_heralds(&p), &p).unwrap();
        for pat in post.keys() {
            let t = pat.station(0);
            assert!(t.j() == 0 && t.l() == 0 && t.i() >= 1 && t.k() >= 1, "{pat}");
        }
        let narrow = RawParams {
            tuple_sum_max: 2,
            ..p.to_raw()
        }
        .validate()
        .unwrap();
        let post = posterior(&representative_heralds(&narrow), &narrow).unwrap();
        assert_eq!(post.len(), 1);
        let (pat, w) = post.iter().next().unwrap();
        assert_eq!(pat.station(0), CountTuple::new(1, 0, 1, 0));
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transfer_matches_enumeration() {
        for (n, n_max) in [(1usize, 3u8), (2, 1), (2, 2)] {
            let p = params(n, 0.3, 0.2, 1e-3, n_max);
            let heralds = representative_heralds(&p);
            for angles in [RotatorAngles::equal(FRAC_PI_2).unwrap(), RotatorAngles::new(0.4, 1.3).unwrap()] {
                let a = coincidence_probs(&heralds, angles, &p, Method::Transfer).unwrap();
                let b = coincidence_probs(&heralds, angles, &p, Method::Enumerate).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-3), "N={n} {a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn heralded_state_single_component_when_ideal() {
        let p = RawParams {
            tuple_sum_max: 2,
            ..RawParams::fixed_efficiency(1, 0.2, 1.0, 0.0)
        }
        .validate()
        .unwrap();
        let rho = heralded_state(&representative_heralds(&p), &p).unwrap();
        assert_eq!(rho.components.len(), 1);
        assert!((rho.total_weight() - 1.0).abs() < 1e-15);
        let diag = rho.diagonal();
        assert_eq!(diag.len(), 4);
        for w in diag.values() {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_evidence_is_reported() {
        // Dark-count-free detectors with zero efficiency never click.
        let p = params(1, 0.2, 0.0, 0.0, 3);
        let err = visibility(&p, FRAC_PI_2).unwrap_err();
        assert!(matches!(err, RelayError::DegenerateEvidence { .. }));
        assert!(posterior(&representative_heralds(&p), &p).is_err());
    }

    #[test]
    fn grids_must_increase() {
        let p = params(1, 0.2, 0.5, 0.0, 2);
        assert!(sweep_chi(&p, FRAC_PI_2, &[0.2, 0.1]).is_err());
        assert!(sweep_chi(&p, FRAC_PI_2, &[]).is_err());
        assert_eq!(linear_grid(100.0, 1800.0, 100.0).unwrap().len(), 18);
        assert!(linear_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn sweep_records_row_errors() {
        let p = params(1, 0.2, 0.5, 0.0, 2);
        let t = sweep_chi(&p, FRAC_PI_2, &[-1.0, 0.2]).unwrap();
        assert!(t.rows[0].result.as_ref().unwrap_err().is_validation());
        assert!(t.rows[1].result.is_ok());
        assert_eq!(t.error_count(), 1);
    }

    #[test]
    fn crossing_interpolates() {
        let p = params(1, 0.2, 0.5, 0.0, 2);
        let rows = [(0.0, 0.9), (1.0, 0.8), (2.0, 0.6)]
            .iter()
            .map(|&(x, v)| SweepRow {
                x,
                result: Ok(RowValues {
                    q: [0.0; 4],
                    v_max: 0.0,
                    v_min: 0.0,
                    visibility: v,
                }),
            })
            .collect();
        let t = SweepTable {
            variable: SweepVariable::Distance,
            params: p,
            alpha_tilde: FRAC_PI_2,
            rows,
        };
        assert!((t.crossing_below(0.7).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(t.crossing_below(0.1), None);
        assert_eq!(t.crossing_below(0.95), Some(0.0));
    }
}
