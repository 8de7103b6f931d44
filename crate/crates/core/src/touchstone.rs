//! Touchstone v1 one-port (`.s1p`) reading, writing and reference
//! impedance renormalization.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{fmt17, FrequencyResponse, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FrequencyUnit {
    Hz,
    Khz,
    Mhz,
    Ghz,
}

impl FrequencyUnit {
    pub fn multiplier(self) -> f64 {
        match self {
            FrequencyUnit::Hz => 1.0,
            FrequencyUnit::Khz => 1e3,
            FrequencyUnit::Mhz => 1e6,
            FrequencyUnit::Ghz => 1e9,
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            FrequencyUnit::Hz => "HZ",
            FrequencyUnit::Khz => "KHZ",
            FrequencyUnit::Mhz => "MHZ",
            FrequencyUnit::Ghz => "GHZ",
        }
    }
}

/// Number pair encoding. `Db` magnitudes are 20·log10|S|; angles are degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DataFormat {
    Ri,
    Ma,
    Db,
}

impl DataFormat {
    fn keyword(self) -> &'static str {
        match self {
            DataFormat::Ri => "RI",
            DataFormat::Ma => "MA",
            DataFormat::Db => "DB",
        }
    }

    pub fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            DataFormat::Ri => Complex64::new(a, b),
            DataFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            DataFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    pub fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            DataFormat::Ri => (z.re, z.im),
            DataFormat::Ma => (z.norm(), z.arg().to_degrees()),
            DataFormat::Db => (20.0 * z.norm().log10(), z.arg().to_degrees()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchstoneData {
    pub unit: FrequencyUnit,
    pub format: DataFormat,
    /// Reference impedance (ohms).
    pub reference: f64,
    /// `(frequency in Hz, S11)`.
    pub samples: Vec<(f64, Complex64)>,
}

impl TouchstoneData {
    pub fn to_response(&self) -> Result<FrequencyResponse> {
        FrequencyResponse::new(
            self.samples
                .iter()
                .map(|&(freq, gamma)| Sample { freq, gamma })
                .collect(),
        )
    }

    /// Writes a v1 file in this data's unit and format, numbers at full precision.
    pub fn serialize(&self) -> String {
        let mut out = format!(
            "# {} S {} R {}\n",
            self.unit.keyword(),
            self.format.keyword(),
            fmt17(self.reference)
        );
        let scale = self.unit.multiplier();
        for &(f, s) in &self.samples {
            let (a, b) = self.format.encode(s);
            let _ = writeln!(out, "{} {} {}", fmt17(f / scale), fmt17(a), fmt17(b));
        }
        out
    }
}

struct Options {
    unit: FrequencyUnit,
    format: DataFormat,
    reference: f64,
}

fn parse_option_line(body: &str, line: usize) -> Result<Options> {
    let mut opts = Options {
        unit: FrequencyUnit::Ghz,
        format: DataFormat::Ma,
        reference: 50.0,
    };
    let mut tokens = body.split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opts.unit = FrequencyUnit::Hz,
            "KHZ" => opts.unit = FrequencyUnit::Khz,
            "MHZ" => opts.unit = FrequencyUnit::Mhz,
            "GHZ" => opts.unit = FrequencyUnit::Ghz,
            "S" => {}
            p @ ("Y" | "Z" | "H" | "G") => {
                return Err(Error::UnsupportedParameter(format!(
                    "line {line}: parameter type {p} (only S is supported)"
                )))
            }
            "RI" => opts.format = DataFormat::Ri,
            "MA" => opts.format = DataFormat::Ma,
            "DB" => opts.format = DataFormat::Db,
            "R" => {
                let v = tokens
                    .next()
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: "option R needs a numeric reference impedance".into(),
                    })?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Parse {
                        line,
                        message: format!("reference impedance must be > 0, got {v}"),
                    });
                }
                opts.reference = v;
            }
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown option `{other}`"),
                })
            }
        }
    }
    Ok(opts)
}

/// Parses a one-port Touchstone v1 file. Without an option line the
/// defaults `# GHZ S MA R 50` apply.
pub fn parse_touchstone(text: &str) -> Result<TouchstoneData> {
    let mut opts: Option<Options> = None;
    let mut samples: Vec<(f64, Complex64)> = Vec::new();
    let mut pending: Vec<(usize, [f64; 3])> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('!').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(body) = content.strip_prefix('#') {
            // Only the first option line counts.
            if opts.is_none() && pending.is_empty() {
                opts = Some(parse_option_line(body, line)?);
            }
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() >= 5 {
            return Err(Error::UnsupportedPortCount {
                line,
                columns: fields.len(),
            });
        }
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 numeric fields, found {}", fields.len()),
            });
        }
        let mut nums = [0.0; 3];
        for (slot, f) in nums.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("`{f}` is not a number"),
            })?;
            if !slot.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("`{f}` is not finite"),
                });
            }
        }
        pending.push((line, nums));
    }

    let opts = opts.unwrap_or(Options {
        unit: FrequencyUnit::Ghz,
        format: DataFormat::Ma,
        reference: 50.0,
    });
    let scale = opts.unit.multiplier();
    for (line, [f, a, b]) in pending {
        let f = f * scale;
        if !(f > 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("frequency must be > 0, got {f} Hz"),
            });
        }
        if let Some(&(prev, _)) = samples.last() {
            if f <= prev {
                return Err(Error::Parse {
                    line,
                    message: format!("frequency {f} Hz does not increase (previous {prev} Hz)"),
                });
            }
        }
        samples.push((f, opts.format.decode(a, b)));
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "no data lines".into(),
        });
    }
    Ok(TouchstoneData {
        unit: opts.unit,
        format: opts.format,
        reference: opts.reference,
        samples,
    })
}

/// Re-references one reflection coefficient. `Γ = 1` (open) maps to itself.
pub fn renormalize_gamma(gamma: Complex64, from: f64, to: f64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    if gamma == one {
        return one;
    }
    let z = from * (one + gamma) / (one - gamma);
    (z - to) / (z + to)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Renormalized {
    pub data: TouchstoneData,
    /// Indices of samples with `Γ = 1`, passed through unchanged.
    pub singular: Vec<usize>,
}

pub fn renormalize(data: &TouchstoneData, target: f64) -> Result<Renormalized> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "reference impedance must be > 0, got {target}"
        )));
    }
    let one = Complex64::new(1.0, 0.0);
    let mut singular = Vec::new();
    let samples = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, &(f, g))| {
            if g == one {
                singular.push(i);
            }
            (f, renormalize_gamma(g, data.reference, target))
        })
        .collect();
    Ok(Renormalized {
        data: TouchstoneData {
            reference: target,
            samples,
            ..*data
        },
        singular,
    })
}
