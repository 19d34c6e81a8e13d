//! Threshold detectors with finite efficiency and dark counts.
//!
//! A detector facing `n` photons stays silent with probability
//! `(1 - ℘) [1 - η (1 - ℘)]^n` and clicks otherwise. Transmission and
//! constant losses are folded into the net efficiency `η`.

use crate::error::{ParamError, RelayError};
use crate::model::{ClickTuple, CountTuple, RelayParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    eta: f64,
    darkcount: f64,
}

impl DetectorModel {
    pub fn new(eta: f64, darkcount: f64) -> Result<Self, RelayError> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(RelayError::InvalidParam(ParamError {
                field: "eta",
                reason: format!("must lie in [0, 1], got {eta}"),
            }));
        }
        if !(0.0..1.0).contains(&darkcount) {
            return Err(RelayError::InvalidParam(ParamError {
                field: "darkcount",
                reason: format!("must lie in [0, 1), got {darkcount}"),
            }));
        }
        Ok(Self { eta, darkcount })
    }

    /// Unit efficiency, no dark counts.
    pub fn ideal() -> Self {
        Self {
            eta: 1.0,
            darkcount: 0.0,
        }
    }

    /// Detector seen by every inner and outer four-tuple of the relay.
    pub fn from_params(params: &RelayParams) -> Self {
        let eta = net_efficiency(
            params.eta0(),
            params.alpha_db_per_km(),
            params.alpha0_db(),
            params.distance_km(),
            params.n_stations(),
        );
        Self {
            eta,
            darkcount: params.darkcount(),
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn darkcount(&self) -> f64 {
        self.darkcount
    }

    /// Per-photon survival factor `1 - η (1 - ℘)`.
    fn miss_factor(&self) -> f64 {
        1.0 - self.eta * (1.0 - self.darkcount)
    }
}

/// Net efficiency after fibre and constant losses.
///
/// The separation `distance_km` is split into `4N` source-to-detector legs,
/// each attenuating by `alpha_db_per_km * distance_km / (4N)` dB.
pub fn net_efficiency(
    eta0: f64,
    alpha_db_per_km: f64,
    alpha0_db: f64,
    distance_km: f64,
    n_stations: usize,
) -> f64 {
    let transmission = 10f64.powf(-alpha_db_per_km * distance_km / (40.0 * n_stations as f64));
    eta0 * transmission * 10f64.powf(-alpha0_db / 10.0)
}

/// Probability of observing `click` given `incident` photons.
pub fn click_prob(click: bool, incident: u32, det: &DetectorModel) -> f64 {
    let silent = (1.0 - det.darkcount) * det.miss_factor().powi(incident as i32);
    if click {
        1.0 - silent
    } else {
        silent
    }
}

/// Product of the four independent detector probabilities of one four-tuple.
pub fn tuple_click_prob(clicks: ClickTuple, counts: CountTuple, det: &DetectorModel) -> f64 {
    clicks
        .bits()
        .iter()
        .zip(counts.as_array())
        .map(|(&q, n)| click_prob(q, u32::from(n), det))
        .product()
}

/// Click probabilities tabulated for photon numbers `0..=max_photons`.
#[derive(Debug, Clone)]
pub struct ClickTable {
    silent: Vec<f64>,
    fire: Vec<f64>,
}

impl ClickTable {
    pub fn new(det: &DetectorModel, max_photons: usize) -> Self {
        let silent: Vec<f64> = (0..=max_photons)
            .map(|n| click_prob(false, n as u32, det))
            .collect();
        let fire = silent.iter().map(|p| 1.0 - p).collect();
        Self { silent, fire }
    }

    pub fn max_photons(&self) -> usize {
        self.silent.len() - 1
    }

    #[inline]
    pub fn prob(&self, click: bool, incident: usize) -> f64 {
        if click {
            self.fire[incident]
        } else {
            self.silent[incident]
        }
    }

    #[inline]
    pub fn tuple(&self, clicks: ClickTuple, counts: CountTuple) -> f64 {
        let b = clicks.bits();
        let c = counts.as_array();
        self.prob(b[0], c[0] as usize)
            * self.prob(b[1], c[1] as usize)
            * self.prob(b[2], c[2] as usize)
            * self.prob(b[3], c[3] as usize)
    }
}
