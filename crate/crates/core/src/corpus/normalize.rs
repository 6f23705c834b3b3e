//! Token normalization: lowercasing, placeholder substitution for numbers,
//! times and measurements, and removal of punctuation-only tokens.

use regex::Regex;

use crate::error::{Error, Result};

pub const NUMERIC_VAL: &str = "numeric_val";
pub const TIME_VAL: &str = "time_val";
pub const MEAS_VAL: &str = "meas_val";

const NUMBER_PATTERN: &str = r"^[0-9]+([.,][0-9]+)*$";
const TIME_PATTERN: &str = r"^[0-9]{1,2}:[0-9]{2}(am|pm)?$";
const DEFAULT_UNITS: &[&str] = &[
    "mg", "mcg", "ug", "g", "kg", "ml", "l", "dl", "cc", "mm", "cm", "m", "mmhg", "meq", "mmol",
    "iu", "u", "unit", "units", "hr", "hrs", "h", "min", "mins", "sec", "s", "bpm", "%", "f", "c",
    "lb", "lbs", "oz", "in",
];

/// What happens to tokens that match the number/time/measurement patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaceholderMode {
    /// Replace with `numeric_val` / `time_val` / `meas_val` (bag-of-words path).
    Replace,
    /// Drop the token entirely (paragraph-vector path).
    Remove,
}

#[derive(Debug, Clone)]
pub struct Normalizer {
    number: Regex,
    time: Regex,
    measurement: Regex,
    mode: PlaceholderMode,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::new(PlaceholderMode::Replace)
    }
}

fn measurement_pattern(units: &[&str]) -> String {
    let mut units: Vec<String> = units.iter().map(|u| regex::escape(u)).collect();
    // longest first so `mmhg` wins over `m`
    units.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let units = units.join("|");
    let num = r"[0-9]+([.,][0-9]+)*";
    format!(r"^{num}((/{num})+|({units})(/({units}|[0-9]+))?)$")
}

impl Normalizer {
    pub fn new(mode: PlaceholderMode) -> Self {
        Normalizer::with_patterns(
            mode,
            NUMBER_PATTERN,
            TIME_PATTERN,
            &measurement_pattern(DEFAULT_UNITS),
        )
        .expect("built-in patterns compile")
    }

    /// Custom pattern set. Patterns are matched against lowercased tokens
    /// with surrounding punctuation stripped.
    pub fn with_patterns(
        mode: PlaceholderMode,
        number: &str,
        time: &str,
        measurement: &str,
    ) -> Result<Self> {
        let compile = |p: &str| {
            Regex::new(p).map_err(|e| Error::invalid(format!("bad pattern {p:?}: {e}")))
        };
        Ok(Normalizer {
            number: compile(number)?,
            time: compile(time)?,
            measurement: compile(measurement)?,
            mode,
        })
    }

    /// Measurement pattern built from a custom unit list.
    pub fn with_units(mode: PlaceholderMode, units: &[&str]) -> Self {
        Normalizer::with_patterns(mode, NUMBER_PATTERN, TIME_PATTERN, &measurement_pattern(units))
            .expect("unit list is escaped")
    }

    pub fn mode(&self) -> PlaceholderMode {
        self.mode
    }

    fn placeholder(&self, token: &str) -> Option<&'static str> {
        if !token.bytes().any(|b| b.is_ascii_digit()) {
            return None;
        }
        if self.number.is_match(token) {
            Some(NUMERIC_VAL)
        } else if self.time.is_match(token) {
            Some(TIME_VAL)
        } else if self.measurement.is_match(token) {
            Some(MEAS_VAL)
        } else {
            None
        }
    }

    pub fn normalize(&self, raw: &str) -> Vec<String> {
        let mut out = Vec::new();
        for piece in raw.split_whitespace() {
            let lower = piece.to_lowercase();
            let token = lower.trim_matches(|c: char| !c.is_alphanumeric() && c != '%');
            if !token.chars().any(char::is_alphanumeric) {
                continue;
            }
            match (self.placeholder(token), self.mode) {
                (Some(p), PlaceholderMode::Replace) => out.push(p.to_owned()),
                (Some(_), PlaceholderMode::Remove) => {}
                (None, _) => out.push(token.to_owned()),
            }
        }
        out
    }
}

/// Normalizes with the default pattern set, replacing matches with
/// placeholders.
pub fn normalize_tokens(raw: &str) -> Vec<String> {
    Normalizer::default().normalize(raw)
}
