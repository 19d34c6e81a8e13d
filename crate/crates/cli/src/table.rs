//! CSV output with a `#` metadata preamble and append-on-complete rows.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use swaprelay::coincidence::RowValues;
use swaprelay::RelayParams;

pub const VALUE_COLUMNS: [&str; 7] = ["Q1010", "Q0101", "Q0110", "Q1001", "Vmax", "Vmin", "V"];

/// One computed grid point; `None` marks a failed evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OutRow {
    pub x: f64,
    pub values: Option<RowValues>,
}

/// Everything that determines the numbers in a table, one `key = value` per line.
pub fn preamble(kind: &str, params: &RelayParams, alpha_tilde: f64, grid: &str) -> Vec<String> {
    let raw = params.raw();
    vec![
        format!("swaprelay {}", env!("CARGO_PKG_VERSION")),
        format!("sweep = {kind}"),
        format!("n_stations = {}", raw.n_stations),
        format!("chi = {}", raw.chi),
        format!("eta0 = {}", raw.eta0),
        format!("darkcount = {}", raw.darkcount),
        format!("alpha_db_per_km = {}", raw.alpha_db_per_km),
        format!("alpha0_db = {}", raw.alpha0_db),
        format!("distance_km = {}", raw.distance_km),
        format!("n_max = {}", raw.n_max),
        format!("tuple_sum_min = {}", raw.tuple_sum_min),
        format!("tuple_sum_max = {}", raw.tuple_sum_max),
        format!("alpha_tilde = {alpha_tilde}"),
        format!("grid = {grid}"),
        format!("heralds = 1010 x {}", params.n_tuples()),
    ]
}

pub fn header(column: &str) -> String {
    let mut cols = vec![column];
    cols.extend(VALUE_COLUMNS);
    cols.join(",")
}

pub fn format_row(row: &OutRow) -> String {
    let mut out = row.x.to_string();
    match &row.values {
        Some(v) => {
            for value in [v.q[0], v.q[1], v.q[2], v.q[3], v.v_max, v.v_min, v.visibility] {
                out.push(',');
                out.push_str(&format!("{value:e}"));
            }
        }
        None => out.push_str(&",".repeat(VALUE_COLUMNS.len())),
    }
    out
}

fn parse_row(line: &str) -> Option<OutRow> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != VALUE_COLUMNS.len() + 1 {
        return None;
    }
    let x = fields[0].parse().ok()?;
    if fields[1..].iter().all(|f| f.is_empty()) {
        return Some(OutRow { x, values: None });
    }
    let mut q = [0.0; 4];
    for (slot, f) in q.iter_mut().zip(&fields[1..5]) {
        *slot = f.parse().ok()?;
    }
    Some(OutRow {
        x,
        values: Some(RowValues::from_q(q)),
    })
}

/// Appends finished rows to a CSV file, flushing after every batch.
pub struct CsvSink {
    file: File,
}

impl CsvSink {
    /// Opens `path` for a table with the given preamble and header.
    ///
    /// An existing file with the same preamble and header is resumed: its
    /// complete rows are returned and must be a prefix of `grid`. A partially
    /// written last line is discarded. Any other existing file is replaced.
    pub fn open(path: &Path, preamble: &[String], header: &str, grid: &[f64]) -> io::Result<(Self, Vec<OutRow>)> {
        let mut head = String::new();
        for line in preamble {
            head.push_str("# ");
            head.push_str(line);
            head.push('\n');
        }
        head.push_str(header);
        head.push('\n');

        let done = match fs::read_to_string(path) {
            Ok(existing) if existing.starts_with(&head) => resumable_rows(&existing[head.len()..], grid),
            Ok(_) => None,
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(e),
        };
        match done {
            Some((rows, kept)) => {
                let file = OpenOptions::new().write(true).open(path)?;
                file.set_len((head.len() + kept) as u64)?;
                let file = OpenOptions::new().append(true).open(path)?;
                Ok((Self { file }, rows))
            }
            None => {
                let mut file = File::create(path)?;
                file.write_all(head.as_bytes())?;
                file.sync_data()?;
                Ok((Self { file }, Vec::new()))
            }
        }
    }

    pub fn append(&mut self, rows: &[OutRow]) -> io::Result<()> {
        let mut text = String::new();
        for row in rows {
            text.push_str(&format_row(row));
            text.push('\n');
        }
        self.file.write_all(text.as_bytes())?;
        self.file.sync_data()
    }
}

/// Complete rows of `body` that match the start of `grid`, with their byte length.
fn resumable_rows(body: &str, grid: &[f64]) -> Option<(Vec<OutRow>, usize)> {
    let mut rows = Vec::new();
    let mut kept = 0;
    for line in body.split_inclusive('\n') {
        let Some(content) = line.strip_suffix('\n') else {
            break;
        };
        let row = parse_row(content)?;
        let expected = grid.get(rows.len())?;
        if row.x.to_string() != expected.to_string() || format_row(&row) != content {
            return None;
        }
        rows.push(row);
        kept += line.len();
    }
    Some((rows, kept))
}
