use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sampled columns used by [`SignalSpec::CsvColumn`], linearly interpolated
/// in time and held constant outside the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTable {
    times: Vec<f64>,
    columns: BTreeMap<String, Vec<f64>>,
}

impl SignalTable {
    pub fn new(times: Vec<f64>, columns: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Io("signal table has no rows".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Io("signal table times must be strictly increasing".into()));
        }
        if let Some((name, _)) = columns.iter().find(|(_, v)| v.len() != times.len()) {
            return Err(Error::Io(format!(
                "column `{name}` length differs from the time column"
            )));
        }
        Ok(Self { times, columns })
    }

    /// CSV with a `t` column plus any number of named value columns.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if !headers.iter().any(|h| h == "t") {
            return Err(Error::Io("signal table needs a `t` column".into()));
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Io(format!("signal table row {}: bad number `{field}`", row + 1))
                })?;
                cols[j].push(v);
            }
        }
        let mut times = Vec::new();
        let mut columns = BTreeMap::new();
        for (name, col) in headers.into_iter().zip(cols) {
            if name == "t" {
                times = col;
            } else {
                columns.insert(name, col);
            }
        }
        Self::new(times, columns)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    fn interpolate(&self, name: &str, t: f64) -> Result<f64> {
        let values = self
            .column(name)
            .ok_or_else(|| Error::Io(format!("signal table has no column `{name}`")))?;
        let n = self.times.len();
        if t <= self.times[0] {
            return Ok(values[0]);
        }
        if t >= self.times[n - 1] {
            return Ok(values[n - 1]);
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        Ok(values[lo] + w * (values[hi] - values[lo]))
    }
}

/// Test-signal generator evaluable at any real time.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    Constant {
        value: f64,
    },
    /// 0 before `time`, `offset + amplitude` at and after it.
    Step {
        time: f64,
        amplitude: f64,
        offset: f64,
    },
    /// `offset + amplitude * sin(2 pi f t + phase)`.
    Sine {
        amplitude: f64,
        freq_hz: f64,
        phase: f64,
        offset: f64,
    },
    /// Linear-frequency sweep from `f0` to `f1` over `duration`, then a
    /// constant `f1` tone with continuous phase.
    Chirp {
        amplitude: f64,
        f0: f64,
        f1: f64,
        duration: f64,
        phase: f64,
        offset: f64,
    },
    CsvColumn {
        column: String,
        table: Option<SignalTable>,
    },
}

impl SignalSpec {
    pub fn constant(value: f64) -> Self {
        SignalSpec::Constant { value }
    }

    pub fn sine(amplitude: f64, freq_hz: f64, phase: f64, offset: f64) -> Self {
        SignalSpec::Sine {
            amplitude,
            freq_hz,
            phase,
            offset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Signal(format!("{name} must be finite, got {v}")))
            }
        };
        match self {
            SignalSpec::Constant { value } => finite("value", *value),
            SignalSpec::Step {
                time,
                amplitude,
                offset,
            } => {
                finite("step time", *time)?;
                finite("amplitude", *amplitude)?;
                finite("offset", *offset)
            }
            SignalSpec::Sine {
                amplitude,
                freq_hz,
                phase,
                offset,
            } => {
                finite("amplitude", *amplitude)?;
                finite("phase", *phase)?;
                finite("offset", *offset)?;
                if !(*freq_hz >= 0.0 && freq_hz.is_finite()) {
                    return Err(Error::Signal(format!(
                        "frequency must be non-negative, got {freq_hz}"
                    )));
                }
                Ok(())
            }
            SignalSpec::Chirp {
                amplitude,
                f0,
                f1,
                duration,
                phase,
                offset,
            } => {
                finite("amplitude", *amplitude)?;
                finite("phase", *phase)?;
                finite("offset", *offset)?;
                if !(*f0 >= 0.0 && f0.is_finite() && f1.is_finite()) {
                    return Err(Error::Signal(format!(
                        "chirp start frequency must be non-negative, got {f0}"
                    )));
                }
                if f1 < f0 {
                    return Err(Error::Signal(format!(
                        "chirp end frequency {f1} is below start frequency {f0}"
                    )));
                }
                if !(*duration > 0.0 && duration.is_finite()) {
                    return Err(Error::Signal(format!(
                        "chirp duration must be positive, got {duration}"
                    )));
                }
                Ok(())
            }
            SignalSpec::CsvColumn { .. } => Ok(()),
        }
    }

    /// Attaches a table to a `CsvColumn` spec; other kinds are returned unchanged.
    pub fn with_table(self, table: &SignalTable) -> Self {
        match self {
            SignalSpec::CsvColumn { column, .. } => SignalSpec::CsvColumn {
                column,
                table: Some(table.clone()),
            },
            other => other,
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(match self {
            SignalSpec::Constant { value } => *value,
            SignalSpec::Step {
                time,
                amplitude,
                offset,
            } => {
                if t >= *time {
                    offset + amplitude
                } else {
                    0.0
                }
            }
            SignalSpec::Sine {
                amplitude,
                freq_hz,
                phase,
                offset,
            } => offset + amplitude * (2.0 * PI * freq_hz * t + phase).sin(),
            SignalSpec::Chirp {
                amplitude,
                f0,
                f1,
                duration,
                phase,
                offset,
            } => {
                let cycles = if t <= *duration {
                    f0 * t + (f1 - f0) * t * t / (2.0 * duration)
                } else {
                    (f0 + f1) * duration / 2.0 + f1 * (t - duration)
                };
                offset + amplitude * (2.0 * PI * cycles + phase).sin()
            }
            SignalSpec::CsvColumn { column, table } => table
                .as_ref()
                .ok_or_else(|| {
                    Error::Io(format!("csv signal `{column}` has no attached table"))
                })?
                .interpolate(column, t)?,
        })
    }
}

/// Pointwise evaluation of `spec` at `times`.
pub fn generate_signal(spec: &SignalSpec, times: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    times.iter().map(|&t| spec.eval(t)).collect()
}

/// Parses the inline mini-grammar `kind:key=value,key=value`.
///
/// | kind            | keys                                             |
/// |-----------------|--------------------------------------------------|
/// | `const`         | `value` (also `const:2.5` or a bare `2.5`)       |
/// | `step`          | `t`, `amp`, `offset`                             |
/// | `sine`          | `amp`, `f` (Hz), `phase` (rad), `offset`         |
/// | `chirp`         | `amp`, `f0`, `f1`, `T` (s), `phase`, `offset`    |
/// | `csv`           | `col`                                            |
impl FromStr for SignalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(v) = s.parse::<f64>() {
            return Ok(SignalSpec::Constant { value: v });
        }
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        if matches!(kind.trim(), "const" | "constant") {
            if let Ok(v) = rest.trim().parse::<f64>() {
                return Ok(SignalSpec::Constant { value: v });
            }
        }
        let mut kv = BTreeMap::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Signal(format!("expected key=value, got `{part}`")))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Signal(format!("duplicate key `{}`", k.trim())));
            }
        }
        let mut take = |keys: &[&str], default: Option<f64>| -> Result<f64> {
            for k in keys {
                if let Some(v) = kv.remove(*k) {
                    return v
                        .parse()
                        .map_err(|_| Error::Signal(format!("`{k}` is not a number: `{v}`")));
                }
            }
            default.ok_or_else(|| Error::Signal(format!("{kind} signal needs `{}`", keys[0])))
        };
        let spec = match kind.trim() {
            "const" | "constant" => SignalSpec::Constant {
                value: take(&["value", "amp"], None)?,
            },
            "step" => SignalSpec::Step {
                time: take(&["t", "time"], None)?,
                amplitude: take(&["amp"], Some(1.0))?,
                offset: take(&["offset"], Some(0.0))?,
            },
            "sine" | "sin" => SignalSpec::Sine {
                amplitude: take(&["amp"], Some(1.0))?,
                freq_hz: take(&["f"], None)?,
                phase: take(&["phase"], Some(0.0))?,
                offset: take(&["offset"], Some(0.0))?,
            },
            "chirp" => SignalSpec::Chirp {
                amplitude: take(&["amp"], Some(1.0))?,
                f0: take(&["f0"], None)?,
                f1: take(&["f1"], None)?,
                duration: take(&["T", "duration"], None)?,
                phase: take(&["phase"], Some(0.0))?,
                offset: take(&["offset"], Some(0.0))?,
            },
            "csv" => {
                let column = kv
                    .remove("col")
                    .ok_or_else(|| Error::Signal("csv signal needs `col`".into()))?;
                SignalSpec::CsvColumn {
                    column,
                    table: None,
                }
            }
            other => return Err(Error::Signal(format!("unknown signal kind `{other}`"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::Signal(format!("unknown key `{k}` for {kind} signal")));
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for SignalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalSpec::Constant { value } => write!(f, "const:value={value}"),
            SignalSpec::Step {
                time,
                amplitude,
                offset,
            } => write!(f, "step:t={time},amp={amplitude},offset={offset}"),
            SignalSpec::Sine {
                amplitude,
                freq_hz,
                phase,
                offset,
            } => write!(f, "sine:amp={amplitude},f={freq_hz},phase={phase},offset={offset}"),
            SignalSpec::Chirp {
                amplitude,
                f0,
                f1,
                duration,
                phase,
                offset,
            } => write!(
                f,
                "chirp:amp={amplitude},f0={f0},f1={f1},T={duration},phase={phase},offset={offset}"
            ),
            SignalSpec::CsvColumn { column, .. } => write!(f, "csv:col={column}"),
        }
    }
}
