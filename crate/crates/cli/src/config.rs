//! `key = value` run configuration.
//!
//! Entries are separated by newlines or commas. A comma-separated segment
//! without `=` continues the list value of the preceding key, so
//! `grid = 100, 200, 400` is a three-point grid. `#` starts a comment.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::PathBuf;

use swaprelay::coincidence::{linear_grid, SweepVariable};
use swaprelay::{RawParams, RelayError, RelayParams};

/// Row failures tolerated before a run reports a computational error.
pub const DEFAULT_MAX_ROW_ERRORS: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>, ConfigError> {
        let points = match self {
            GridSpec::Range { start, stop, step } => {
                linear_grid(*start, *stop, *step).map_err(|e| ConfigError::invalid("grid", e))?
            }
            GridSpec::List(xs) => xs.clone(),
        };
        if points.is_empty() {
            return Err(ConfigError::field("grid", "must not be empty"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::field("grid", "must be strictly increasing"));
        }
        Ok(points)
    }

    /// Default grid for a sweep variable.
    pub fn default_for(variable: SweepVariable) -> Self {
        match variable {
            SweepVariable::Angle => GridSpec::Range {
                start: -PI,
                stop: PI,
                step: PI / 20.0,
            },
            SweepVariable::Chi => GridSpec::Range {
                start: 0.02,
                stop: 0.5,
                step: 0.02,
            },
            SweepVariable::Distance => GridSpec::Range {
                start: 0.0,
                stop: 2000.0,
                step: 50.0,
            },
            SweepVariable::NMax => GridSpec::List(vec![1.0, 2.0, 3.0]),
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Range { start, stop, step } => write!(f, "{start}:{stop}:{step}"),
            GridSpec::List(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(";"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: RelayParams,
    pub sweep: SweepVariable,
    pub grid: GridSpec,
    pub alpha_tilde: f64,
    pub workers: usize,
    pub out_csv: Option<PathBuf>,
    pub out_svg: Option<PathBuf>,
    pub max_row_errors: usize,
}

impl RunConfig {
    pub fn grid_points(&self) -> Result<Vec<f64>, ConfigError> {
        let points = self.grid.points()?;
        if self.sweep == SweepVariable::NMax
            && points.iter().any(|&x| x.fract() != 0.0 || !(1.0..=255.0).contains(&x))
        {
            return Err(ConfigError::field("grid", "n_max values must be integers in 1..=255"));
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {key}: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    fn invalid(field: &str, err: RelayError) -> Self {
        Self::field(field, err.to_string())
    }
}

const KEYS: &[&str] = &[
    "n_stations",
    "chi",
    "chi_squared",
    "eta",
    "eta0",
    "darkcount",
    "alpha_db_per_km",
    "alpha0_db",
    "distance_km",
    "n_max",
    "tuple_sum_min",
    "tuple_sum_max",
    "sweep",
    "grid",
    "alpha_tilde",
    "workers",
    "out_csv",
    "out_svg",
    "max_row_errors",
];

/// Accumulates `key = value` assignments from files and command-line flags.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    entries: Vec<(String, String, usize)>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every entry of a document. Later assignments override earlier ones.
    pub fn parse(&mut self, text: &str) -> Result<&mut Self, ConfigError> {
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("");
            for segment in line.split(',') {
                let segment = segment.trim();
                if segment.is_empty() {
                    continue;
                }
                match segment.split_once('=') {
                    Some((key, value)) => self.set_at(key.trim(), value.trim(), line_no)?,
                    None => match self.entries.last_mut() {
                        Some((key, value, _)) if key == "grid" => {
                            value.push(',');
                            value.push_str(segment);
                        }
                        _ => {
                            return Err(ConfigError::Syntax {
                                line: line_no,
                                message: format!("expected `key = value`, found `{segment}`"),
                            })
                        }
                    },
                }
            }
        }
        Ok(self)
    }

    /// Sets one key, as from a command-line flag.
    pub fn set(&mut self, key: &str, value: &str) -> Result<&mut Self, ConfigError> {
        self.set_at(key, value, 0)?;
        Ok(self)
    }

    fn set_at(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.into(),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::BadValue {
                line,
                key: key.into(),
                message: "empty value".into(),
            });
        }
        self.entries.push((key.into(), value.into(), line));
        Ok(())
    }

    fn latest(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.latest(key)
            .map(|(v, line)| {
                v.parse::<T>().map_err(|e| ConfigError::BadValue {
                    line,
                    key: key.into(),
                    message: format!("`{v}`: {e}"),
                })
            })
            .transpose()
    }

    fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.latest(key)
            .map(|(v, line)| {
                parse_number(v).ok_or_else(|| ConfigError::BadValue {
                    line,
                    key: key.into(),
                    message: format!("`{v}` is not a number"),
                })
            })
            .transpose()
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        let mut raw = RawParams::default();
        if let Some(eta) = self.get_f64("eta")? {
            for key in ["eta0", "alpha_db_per_km", "alpha0_db", "distance_km"] {
                if self.latest(key).is_some() {
                    return Err(ConfigError::field(key, "cannot be combined with a fixed `eta`"));
                }
            }
            raw = RawParams::fixed_efficiency(raw.n_stations, raw.chi, eta, raw.darkcount);
        }
        if let Some(n) = self.get("n_stations")? {
            raw.n_stations = n;
        }
        match (self.get_f64("chi")?, self.get_f64("chi_squared")?) {
            (Some(_), Some(_)) => return Err(ConfigError::field("chi", "give either chi or chi_squared")),
            (Some(chi), None) => raw.chi = chi,
            (None, Some(c2)) if c2 >= 0.0 => raw.chi = c2.sqrt(),
            (None, Some(c2)) => return Err(ConfigError::field("chi_squared", format!("must be >= 0, got {c2}"))),
            (None, None) => {}
        }
        let floats: [(&str, &mut f64); 5] = [
            ("eta0", &mut raw.eta0),
            ("darkcount", &mut raw.darkcount),
            ("alpha_db_per_km", &mut raw.alpha_db_per_km),
            ("alpha0_db", &mut raw.alpha0_db),
            ("distance_km", &mut raw.distance_km),
        ];
        for (key, slot) in floats {
            if let Some(v) = self.get_f64(key)? {
                *slot = v;
            }
        }
        for (key, slot) in [
            ("n_max", &mut raw.n_max),
            ("tuple_sum_min", &mut raw.tuple_sum_min),
            ("tuple_sum_max", &mut raw.tuple_sum_max),
        ] {
            if let Some(v) = self.get(key)? {
                *slot = v;
            }
        }
        let params = raw.validate().map_err(|e| match e {
            RelayError::InvalidParam(p) => ConfigError::field(p.field, p.reason),
            other => ConfigError::field("params", other.to_string()),
        })?;

        let sweep = match self.latest("sweep") {
            None => SweepVariable::Angle,
            Some((v, line)) => parse_sweep(v).ok_or_else(|| ConfigError::BadValue {
                line,
                key: "sweep".into(),
                message: format!("`{v}` is not one of angle, chi, distance, nmax"),
            })?,
        };
        let grid = match self.latest("grid") {
            None => GridSpec::default_for(sweep),
            Some((v, line)) => parse_grid(v).map_err(|message| ConfigError::BadValue {
                line,
                key: "grid".into(),
                message,
            })?,
        };
        let alpha_tilde = self.get_f64("alpha_tilde")?.unwrap_or(FRAC_PI_2);
        if !alpha_tilde.is_finite() {
            return Err(ConfigError::field("alpha_tilde", "must be finite"));
        }
        let workers = match self.get("workers")? {
            Some(w) => w,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        if workers == 0 {
            return Err(ConfigError::field("workers", "must be at least 1"));
        }
        let config = RunConfig {
            params,
            sweep,
            grid,
            alpha_tilde,
            workers,
            out_csv: self.latest("out_csv").map(|(v, _)| PathBuf::from(v)),
            out_svg: self.latest("out_svg").map(|(v, _)| PathBuf::from(v)),
            max_row_errors: self.get("max_row_errors")?.unwrap_or(DEFAULT_MAX_ROW_ERRORS),
        };
        config.grid_points()?;
        Ok(config)
    }
}

/// Parses a configuration document, filling omitted fields with defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    ConfigBuilder::new().parse(text)?.build()
}

pub fn parse_sweep(text: &str) -> Option<SweepVariable> {
    match text {
        "angle" => Some(SweepVariable::Angle),
        "chi" => Some(SweepVariable::Chi),
        "distance" => Some(SweepVariable::Distance),
        "nmax" => Some(SweepVariable::NMax),
        _ => None,
    }
}

/// Numbers with an optional `pi` factor: `1.5`, `pi/2`, `-pi`, `0.25*pi`.
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    if let Ok(x) = t.parse::<f64>() {
        return x.is_finite().then_some(x);
    }
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim()),
        None => (1.0, t),
    };
    let value = if let Some(rest) = body.strip_prefix("pi") {
        match rest.trim() {
            "" => PI,
            r => PI / r.strip_prefix('/')?.trim().parse::<f64>().ok()?,
        }
    } else {
        let (coef, rest) = body.split_once('*')?;
        if rest.trim() != "pi" {
            return None;
        }
        coef.trim().parse::<f64>().ok()? * PI
    };
    let value = sign * value;
    value.is_finite().then_some(value)
}

/// `start:stop:step` or a comma- or semicolon-separated list.
pub fn parse_grid(text: &str) -> Result<GridSpec, String> {
    let number = |s: &str| parse_number(s).ok_or_else(|| format!("`{}` is not a number", s.trim()));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range `{text}` must be start:stop:step"));
        }
        return Ok(GridSpec::Range {
            start: number(parts[0])?,
            stop: number(parts[1])?,
            step: number(parts[2])?,
        });
    }
    let xs = text
        .split([',', ';'])
        .filter(|s| !s.trim().is_empty())
        .map(number)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GridSpec::List(xs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_with_pi() {
        assert_eq!(parse_number("pi/2"), Some(FRAC_PI_2));
        assert_eq!(parse_number("-pi"), Some(-PI));
        assert_eq!(parse_number("0.5*pi"), Some(0.5 * PI));
        assert_eq!(parse_number("2.5"), Some(2.5));
        assert_eq!(parse_number("pie"), None);
        assert_eq!(parse_number("inf"), None);
    }

    #[test]
    fn grid_forms() {
        assert_eq!(
            parse_grid("0:10:5").unwrap(),
            GridSpec::Range {
                start: 0.0,
                stop: 10.0,
                step: 5.0
            }
        );
        assert_eq!(parse_grid("1; 2;3").unwrap(), GridSpec::List(vec![1.0, 2.0, 3.0]));
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn later_entries_override() {
        let c = parse_config("n_max = 2\nn_max = 1").unwrap();
        assert_eq!(c.params.n_max(), 1);
    }

    #[test]
    fn continuation_only_for_lists() {
        assert!(matches!(
            parse_config("chi = 0.1, 0.2"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        let c = parse_config("sweep = distance\ngrid = 100, 200,\n 300").unwrap();
        assert_eq!(c.grid_points().unwrap(), vec![100.0, 200.0, 300.0]);
    }
}
