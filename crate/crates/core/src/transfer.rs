//! Exact chain contraction of the heralded coincidence sums.
//!
//! The closed-form amplitude factorises along the relay: every inner tuple
//! links the photon numbers entering it to the photon numbers leaving it, so
//! the sum over inner patterns of `w(pattern) Φ(key) Φ*(key')` collapses into
//! repeated products with small sparse matrices indexed by the pair of link
//! photon numbers `(h, v)`. The result equals pattern enumeration term by
//! term; the enumeration route in [`crate::coincidence`] checks this.

use num_complex::Complex64;

use crate::amplitudes::RotatorTable;
use crate::combinatorics::{admissible_tuples, LookupTables};
use crate::detector::{ClickTable, DetectorModel};
use crate::error::{ParamError, RelayError};
use crate::model::{ClickTuple, CountTuple, RelayParams, RotatorAngles};

/// Photon-number pairs `(h, v)` with `h + v <= cap`.
#[derive(Debug, Clone)]
struct LinkSpace {
    side: usize,
    index: Vec<Option<usize>>,
    keys: Vec<(usize, usize)>,
}

impl LinkSpace {
    fn new(cap: usize) -> Self {
        let side = cap + 1;
        let mut index = vec![None; side * side];
        let mut keys = Vec::new();
        for h in 0..=cap {
            for v in 0..=cap - h {
                index[h * side + v] = Some(keys.len());
                keys.push((h, v));
            }
        }
        Self { side, index, keys }
    }

    fn len(&self) -> usize {
        self.keys.len()
    }

    fn get(&self, h: usize, v: usize) -> Option<usize> {
        if h >= self.side || v >= self.side {
            return None;
        }
        self.index[h * self.side + v]
    }
}

#[derive(Debug, Clone, Copy)]
struct Hop {
    from: usize,
    to: usize,
    coef: f64,
}

/// One inner tuple seen as a link-to-link map.
#[derive(Debug, Clone)]
struct TupleStep {
    tuple: CountTuple,
    factor: f64,
    hops: Vec<Hop>,
}

/// `Σ_μ (-1)^μ C(x, μ) C(y, h - μ)`.
fn signed_split(t: &LookupTables, x: u8, y: u8, h: usize) -> f64 {
    let (x, y) = (usize::from(x), usize::from(y));
    let lo = h.saturating_sub(y);
    let hi = x.min(h);
    let mut acc = 0i64;
    for mu in lo..=hi {
        let term = t.binomial(x, mu) * t.binomial(y, h - mu);
        acc += if mu % 2 == 0 { term } else { -term };
    }
    acc as f64
}

/// Square matrix over the link space, row-major.
#[derive(Debug, Clone)]
struct LinkMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl LinkMatrix {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    fn max_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }
}

/// Chain-contraction evaluator for one parameter set and detector model.
#[derive(Debug, Clone)]
pub struct Transfer {
    params: RelayParams,
    links: LinkSpace,
    stations: Vec<TupleStep>,
    connections: Vec<TupleStep>,
    clicks: ClickTable,
}

impl Transfer {
    /// Detector derived from the parameters via the net efficiency.
    pub fn new(params: &RelayParams) -> Self {
        Self::with_detector(params, &DetectorModel::from_params(params))
    }

    pub fn with_detector(params: &RelayParams, det: &DetectorModel) -> Self {
        let t = LookupTables::new(params);
        let smax = usize::from(params.tuple_sum_max());
        let links = LinkSpace::new(smax);
        let mut stations = Vec::new();
        let mut connections = Vec::new();
        for tuple in admissible_tuples(params) {
            let s = usize::from(tuple.sum());
            let norm: f64 = tuple
                .as_array()
                .iter()
                .map(|&x| t.sqrt_factorial(usize::from(x)))
                .product();
            let (h_tot, v_tot) = (usize::from(tuple.horizontal()), usize::from(tuple.vertical()));

            // Station: d-photons z in, a-photons y = (i + l, j + k) - z out.
            let mut hops = Vec::new();
            for (from, &(zh, zv)) in links.keys.iter().enumerate() {
                if zh > h_tot || zv > v_tot {
                    continue;
                }
                let (yh, yv) = (h_tot - zh, v_tot - zv);
                let coef = signed_split(&t, tuple.i(), tuple.l(), yh)
                    * signed_split(&t, tuple.j(), tuple.k(), yv);
                if coef != 0.0 {
                    let to = links.get(yh, yv).expect("link within cap");
                    hops.push(Hop { from, to, coef });
                }
            }
            stations.push(TupleStep {
                tuple,
                factor: t.tanh_pow(s) / t.sqrt2_pow(s) / norm,
                hops,
            });

            // Connection: a-photons x in, d-photons (I + L, J + K) - x out.
            let mut hops = Vec::new();
            for (from, &(xh, xv)) in links.keys.iter().enumerate() {
                if xh > h_tot || xv > v_tot {
                    continue;
                }
                let coef = t.omega(xh as u8, tuple.i(), tuple.l()) as f64
                    * t.omega(xv as u8, tuple.j(), tuple.k()) as f64;
                if coef != 0.0 {
                    let to = links.get(h_tot - xh, v_tot - xv).expect("link within cap");
                    hops.push(Hop { from, to, coef });
                }
            }
            connections.push(TupleStep {
                tuple,
                factor: norm / t.sqrt2_pow(s),
                hops,
            });
        }
        let max_photons = (2 * smax).max(usize::from(params.n_max()));
        Self {
            params: params.clone(),
            links,
            stations,
            connections,
            clicks: ClickTable::new(det, max_photons),
        }
    }

    pub fn params(&self) -> &RelayParams {
        &self.params
    }

    fn propagate(&self, x: &LinkMatrix, steps: &[TupleStep], herald: ClickTuple) -> LinkMatrix {
        let mut out = LinkMatrix::zeros(x.dim);
        for step in steps {
            let w = self.clicks.tuple(herald, step.tuple) * step.factor * step.factor;
            if w == 0.0 {
                continue;
            }
            for a in &step.hops {
                let wa = w * a.coef;
                let row_in = a.from * x.dim;
                let row_out = a.to * x.dim;
                for b in &step.hops {
                    let v = x.data[row_in + b.from];
                    if v != Complex64::new(0.0, 0.0) {
                        out.data[row_out + b.to] += v * (wa * b.coef);
                    }
                }
            }
        }
        out
    }

    /// Click-weighted rotator Gram matrix of one end mode in the raw monomial
    /// basis; `bits` are the (H, V) detector outcomes.
    fn end_gram(&self, rot: &RotatorTable, bits: (bool, bool)) -> LinkMatrix {
        let dim = self.links.len();
        let mut g = LinkMatrix::zeros(dim);
        for (r, &(h, v)) in self.links.keys.iter().enumerate() {
            for (c, &(h2, v2)) in self.links.keys.iter().enumerate() {
                let m = h + v;
                if h2 + v2 != m {
                    continue;
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for oh in 0..=m {
                    let f = self.clicks.prob(bits.0, oh) * self.clicks.prob(bits.1, m - oh);
                    acc += rot.get(m, h, oh) * rot.get(m, h2, oh).conj() * f;
                }
                let raw = (fact(h) * fact(v) * fact(h2) * fact(v2)).sqrt();
                g.data[r * dim + c] = acc * raw;
            }
        }
        g
    }

    /// `diag(h! v!)`: the squared norm in the raw monomial basis.
    fn norm_gram(&self) -> LinkMatrix {
        let dim = self.links.len();
        let mut g = LinkMatrix::zeros(dim);
        for (r, &(h, v)) in self.links.keys.iter().enumerate() {
            g.data[r * dim + r] = Complex64::new(fact(h) * fact(v), 0.0);
        }
        g
    }

    /// Runs the chain from the `d_1` end to the `a_N` end, returning the
    /// rescaled link matrix and the natural log of the removed scale.
    fn run_chain(&self, start: LinkMatrix, heralds: &[ClickTuple]) -> (LinkMatrix, f64) {
        let n = self.params.n_stations();
        let mut log_scale = 0.0;
        let mut x = start;
        let mut rescale = |x: &mut LinkMatrix| {
            let m = x.max_norm();
            if m > 0.0 && m.is_finite() {
                x.scale(1.0 / m);
                log_scale += m.ln();
            }
        };
        x = self.propagate(&x, &self.stations, heralds[0]);
        rescale(&mut x);
        for c in 0..n - 1 {
            x = self.propagate(&x, &self.connections, heralds[n + c]);
            rescale(&mut x);
            x = self.propagate(&x, &self.stations, heralds[c + 1]);
            rescale(&mut x);
        }
        (x, log_scale)
    }

    fn close(x: &LinkMatrix, g: &LinkMatrix) -> f64 {
        x.data
            .iter()
            .zip(&g.data)
            .map(|(a, b)| (a * b).re)
            .sum()
    }

    /// Natural log of the unnormalised herald probability
    /// `Σ_pattern p(heralds | pattern) ‖Φ_pattern‖²`; `-inf` when it vanishes.
    pub fn log_evidence(&self, heralds: &[ClickTuple]) -> Result<f64, RelayError> {
        check_heralds(heralds, &self.params)?;
        let (x, ls) = self.run_chain(self.norm_gram(), heralds);
        Ok(Self::close(&x, &self.norm_gram()).ln() + ls)
    }

    /// Conditional probabilities of each outer click tuple given the heralds.
    pub fn coincidences(
        &self,
        heralds: &[ClickTuple],
        outer: &[ClickTuple],
        angles: RotatorAngles,
    ) -> Result<Vec<f64>, RelayError> {
        check_heralds(heralds, &self.params)?;
        let (den_x, den_ls) = self.run_chain(self.norm_gram(), heralds);
        let den = Self::close(&den_x, &self.norm_gram());
        if !(den > 0.0) {
            return Err(RelayError::DegenerateEvidence {
                clicks: herald_label(heralds),
                evidence: den * den_ls.exp(),
            });
        }
        let cap = usize::from(self.params.tuple_sum_max());
        let rot_a = RotatorTable::new(angles.alpha_tilde(), cap);
        let rot_d = RotatorTable::new(angles.delta_tilde(), cap);
        let mut d_runs: Vec<((bool, bool), (LinkMatrix, f64))> = Vec::new();
        let mut out = Vec::with_capacity(outer.len());
        for clicks in outer {
            // Outer order: (a_H, a_V, d_V, d_H).
            let [q, r, s, t] = clicks.bits();
            let d_bits = (t, s);
            let pos = match d_runs.iter().position(|(b, _)| *b == d_bits) {
                Some(p) => p,
                None => {
                    let start = self.end_gram(&rot_d, d_bits);
                    d_runs.push((d_bits, self.run_chain(start, heralds)));
                    d_runs.len() - 1
                }
            };
            let (x, ls) = &d_runs[pos].1;
            let num = Self::close(x, &self.end_gram(&rot_a, (q, r)));
            out.push((num / den * (ls - den_ls).exp()).max(0.0));
        }
        Ok(out)
    }
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Checks that one click tuple is given per inner four-tuple.
pub fn check_heralds(heralds: &[ClickTuple], params: &RelayParams) -> Result<(), RelayError> {
    if heralds.len() != params.n_tuples() {
        return Err(RelayError::InvalidParam(ParamError {
            field: "inner_clicks",
            reason: format!(
                "expected {} click tuples for N = {}, got {}",
                params.n_tuples(),
                params.n_stations(),
                heralds.len()
            ),
        }));
    }
    Ok(())
}

pub(crate) fn herald_label(heralds: &[ClickTuple]) -> String {
    heralds
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawParams;

    #[test]
    fn link_space_enumerates_triangle() {
        let l = LinkSpace::new(4);
        assert_eq!(l.len(), 15);
        assert_eq!(l.get(0, 0), Some(0));
        assert_eq!(l.get(4, 1), None);
        for (n, &(h, v)) in l.keys.iter().enumerate() {
            assert_eq!(l.get(h, v), Some(n));
        }
    }

    #[test]
    fn signed_split_matches_generating_function() {
        // Coefficient of s^h in (1 - s)^x (1 + s)^y.
        let p = RawParams::default().validate().unwrap();
        let t = LookupTables::new(&p);
        for x in 0..=3u8 {
            for y in 0..=3u8 {
                let mut poly = vec![1i64];
                for _ in 0..x {
                    poly = mul(&poly, &[1, -1]);
                }
                for _ in 0..y {
                    poly = mul(&poly, &[1, 1]);
                }
                for (h, &c) in poly.iter().enumerate() {
                    assert_eq!(signed_split(&t, x, y, h), c as f64);
                }
            }
        }
    }

    fn mul(a: &[i64], b: &[i64]) -> Vec<i64> {
        let mut out = vec![0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    #[test]
    fn rejects_wrong_herald_count() {
        let p = RawParams {
            n_stations: 2,
            ..RawParams::default()
        }
        .validate()
        .unwrap();
        let tr = Transfer::new(&p);
        let err = tr.log_evidence(&[ClickTuple::SINGLET_1010]).unwrap_err();
        assert!(err.is_validation());
    }
}
