//! Per-path, per-checkpoint experiment records and their CSV form.
//!
//! The first line is `# trimshift report v1 mode=<mode>`, followed by a
//! header row and one row per `(n, path)`. Reals are written with 17
//! significant digits so that they read back bit for bit; an undefined
//! ratio is an empty field.

use serde::Serialize;

use crate::config::Mode;
use crate::error::{Error, Result};

pub const CSV_VERSION: u32 = 1;

pub const TRIM_COLUMNS: &[&str] = &["n", "path", "S_n", "b_n", "S_trim", "d_n", "ratio"];
pub const TRUNCATE_COLUMNS: &[&str] = &["n", "path", "f_n", "T_n", "expected", "ratio", "plateau", "sandwich"];
pub const EXCEEDANCE_COLUMNS: &[&str] = &[
    "n", "path", "f_n", "above", "equal", "n_tail", "n_point", "gamma", "gamma_prime", "ratio",
];

pub fn columns(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Trim => TRIM_COLUMNS,
        Mode::Truncate => TRUNCATE_COLUMNS,
        Mode::Exceedance => EXCEEDANCE_COLUMNS,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Row {
    Trim {
        n: u64,
        path: u64,
        s_n: f64,
        b_n: u64,
        s_trim: f64,
        d_n: f64,
        ratio: Option<f64>,
    },
    Truncate {
        n: u64,
        path: u64,
        f_n: f64,
        t_n: f64,
        expected: f64,
        ratio: Option<f64>,
        plateau: f64,
        sandwich: bool,
    },
    Exceedance {
        n: u64,
        path: u64,
        f_n: f64,
        above: u64,
        equal: u64,
        n_tail: f64,
        n_point: f64,
        gamma: f64,
        gamma_prime: f64,
        ratio: Option<f64>,
    },
}

impl Row {
    pub fn n(&self) -> u64 {
        match *self {
            Row::Trim { n, .. } | Row::Truncate { n, .. } | Row::Exceedance { n, .. } => n,
        }
    }

    pub fn path(&self) -> u64 {
        match *self {
            Row::Trim { path, .. } | Row::Truncate { path, .. } | Row::Exceedance { path, .. } => path,
        }
    }

    pub fn ratio(&self) -> Option<f64> {
        match *self {
            Row::Trim { ratio, .. } | Row::Truncate { ratio, .. } | Row::Exceedance { ratio, .. } => ratio,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Row::Trim { .. } => Mode::Trim,
            Row::Truncate { .. } => Mode::Truncate,
            Row::Exceedance { .. } => Mode::Exceedance,
        }
    }

    fn fields(&self) -> Vec<String> {
        let opt = |r: Option<f64>| r.map(real).unwrap_or_default();
        match *self {
            Row::Trim { n, path, s_n, b_n, s_trim, d_n, ratio } => vec![
                n.to_string(),
                path.to_string(),
                real(s_n),
                b_n.to_string(),
                real(s_trim),
                real(d_n),
                opt(ratio),
            ],
            Row::Truncate { n, path, f_n, t_n, expected, ratio, plateau, sandwich } => vec![
                n.to_string(),
                path.to_string(),
                real(f_n),
                real(t_n),
                real(expected),
                opt(ratio),
                real(plateau),
                u8::from(sandwich).to_string(),
            ],
            Row::Exceedance { n, path, f_n, above, equal, n_tail, n_point, gamma, gamma_prime, ratio } => vec![
                n.to_string(),
                path.to_string(),
                real(f_n),
                above.to_string(),
                equal.to_string(),
                real(n_tail),
                real(n_point),
                real(gamma),
                real(gamma_prime),
                opt(ratio),
            ],
        }
    }

    fn from_fields(mode: Mode, f: &[&str]) -> std::result::Result<Self, String> {
        if f.len() != columns(mode).len() {
            return Err(format!("expected {} fields, found {}", columns(mode).len(), f.len()));
        }
        let int = |i: usize| f[i].parse::<u64>().map_err(|_| format!("column {}: bad integer `{}`", i + 1, f[i]));
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| format!("column {}: bad number `{}`", i + 1, f[i]));
        let ratio = |i: usize| {
            if f[i].is_empty() {
                return Ok(None);
            }
            let r = num(i)?;
            if r.is_finite() && r > 0.0 {
                Ok(Some(r))
            } else {
                Err(format!("column {}: ratio `{}` is not finite and positive", i + 1, f[i]))
            }
        };
        Ok(match mode {
            Mode::Trim => Row::Trim {
                n: int(0)?,
                path: int(1)?,
                s_n: num(2)?,
                b_n: int(3)?,
                s_trim: num(4)?,
                d_n: num(5)?,
                ratio: ratio(6)?,
            },
            Mode::Truncate => Row::Truncate {
                n: int(0)?,
                path: int(1)?,
                f_n: num(2)?,
                t_n: num(3)?,
                expected: num(4)?,
                ratio: ratio(5)?,
                plateau: num(6)?,
                sandwich: match f[7] {
                    "0" => false,
                    "1" => true,
                    other => return Err(format!("column 8: expected 0 or 1, got `{other}`")),
                },
            },
            Mode::Exceedance => Row::Exceedance {
                n: int(0)?,
                path: int(1)?,
                f_n: num(2)?,
                above: int(3)?,
                equal: int(4)?,
                n_tail: num(5)?,
                n_point: num(6)?,
                gamma: num(7)?,
                gamma_prime: num(8)?,
                ratio: ratio(9)?,
            },
        })
    }
}

/// 17 significant digits.
fn real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub rows: Vec<Row>,
}

fn preamble(mode: Mode) -> String {
    format!("# trimshift report v{CSV_VERSION} mode={}", mode.as_str())
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(columns(self.mode)).expect("writing to memory");
        for row in &self.rows {
            w.write_record(row.fields()).expect("writing to memory");
        }
        let body = String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output");
        format!("{}\n{body}", preamble(self.mode))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |msg: String| Error::Parse(msg);
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        let mode = first
            .trim_end_matches('\r')
            .strip_prefix(&format!("# trimshift report v{CSV_VERSION} mode="))
            .ok_or_else(|| parse_err(format!("line 1: expected a v{CSV_VERSION} report preamble")))?
            .parse::<Mode>()
            .map_err(|e| parse_err(format!("line 1: {e}")))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let header = reader.headers().map_err(|e| parse_err(format!("line 2: {e}")))?;
        if header.iter().ne(columns(mode).iter().copied()) {
            return Err(parse_err(format!("line 2: expected columns {}", columns(mode).join(","))));
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 3;
            let record = record.map_err(|e| parse_err(format!("line {line}: {e}")))?;
            let fields: Vec<&str> = record.iter().collect();
            rows.push(Row::from_fields(mode, &fields).map_err(|e| parse_err(format!("line {line}: {e}")))?);
        }
        Ok(Self { mode, rows })
    }
}
