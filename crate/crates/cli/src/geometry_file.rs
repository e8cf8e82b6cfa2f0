//! Line-oriented reach geometry files.
//!
//! ```text
//! REACH: lower-7
//! UNITS: SI
//! XS 0
//! N 0.03
//! BANKS 0 20
//! PROFILE
//! 0 5
//! 10 1
//! 20 5
//! END
//! ```
//!
//! `UNITS: US` reads chainage, stations and elevations in feet. Blank lines
//! and lines starting with `#` are ignored.

use std::fmt::Write as _;

use reach_surrogate_core::geometry::{ft_to_m, CrossSection, GeometryError, Reach};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Si,
    Us,
}

impl Units {
    fn to_m(self, x: f64) -> f64 {
        match self {
            Units::Si => x,
            Units::Us => ft_to_m(x),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeometryFileError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Reach(#[from] GeometryError),
}

fn syntax(line: usize, msg: impl Into<String>) -> GeometryFileError {
    GeometryFileError::Syntax { line, msg: msg.into() }
}

fn number(line: usize, token: Option<&str>, what: &str) -> Result<f64, GeometryFileError> {
    let t = token.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    let v: f64 = t.parse().map_err(|_| syntax(line, format!("{what} `{t}` is not a number")))?;
    if !v.is_finite() {
        return Err(syntax(line, format!("{what} `{t}` is not finite")));
    }
    Ok(v)
}

#[derive(Default)]
struct Block {
    line: usize,
    chainage: f64,
    manning: Option<f64>,
    banks: Option<(f64, f64)>,
    profile: Vec<(f64, f64)>,
    in_profile: bool,
}

impl Block {
    fn finish(self, units: Units) -> Result<CrossSection, GeometryFileError> {
        let manning = self
            .manning
            .ok_or_else(|| syntax(self.line, format!("cross-section at {} has no roughness (N line)", self.chainage)))?;
        let (left, right) = self
            .banks
            .ok_or_else(|| syntax(self.line, format!("cross-section at {} has no BANKS line", self.chainage)))?;
        let profile = self.profile.iter().map(|&(s, z)| (units.to_m(s), units.to_m(z))).collect();
        CrossSection::new(
            units.to_m(self.chainage),
            profile,
            units.to_m(left),
            units.to_m(right),
            manning,
        )
        .map_err(|source| GeometryFileError::Invalid { line: self.line, source })
    }
}

pub fn parse_geometry(text: &str) -> Result<Reach, GeometryFileError> {
    let mut id: Option<String> = None;
    let mut units = Units::Si;
    let mut sections = Vec::new();
    let mut block: Option<Block> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        if let Some(b) = block.as_mut().filter(|b| b.in_profile) {
            if s == "END" {
                let done = block.take().expect("open block");
                sections.push(done.finish(units)?);
                continue;
            }
            let mut it = s.split_whitespace();
            let station = number(line, it.next(), "station")?;
            let elevation = number(line, it.next(), "elevation")?;
            if it.next().is_some() {
                return Err(syntax(line, "expected `<station> <elevation>`"));
            }
            b.profile.push((station, elevation));
            continue;
        }

        let (key, rest) = match s.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (s, ""),
        };
        match key {
            "REACH:" if sections.is_empty() && block.is_none() => {
                if rest.is_empty() {
                    return Err(syntax(line, "empty reach id"));
                }
                id = Some(rest.to_string());
            }
            "UNITS:" if sections.is_empty() && block.is_none() => {
                units = match rest {
                    "SI" => Units::Si,
                    "US" => Units::Us,
                    other => return Err(syntax(line, format!("unknown unit system `{other}`, expected SI or US"))),
                };
            }
            "XS" => {
                if block.is_some() {
                    return Err(syntax(line, "XS before the previous cross-section's END"));
                }
                let mut it = rest.split_whitespace();
                let chainage = number(line, it.next(), "chainage")?;
                block = Some(Block {
                    line,
                    chainage,
                    ..Block::default()
                });
            }
            "N" | "BANKS" | "PROFILE" => {
                let b = block.as_mut().ok_or_else(|| syntax(line, format!("{key} outside a cross-section block")))?;
                let mut it = rest.split_whitespace();
                match key {
                    "N" => b.manning = Some(number(line, it.next(), "Manning n")?),
                    "BANKS" => {
                        let l = number(line, it.next(), "left bank station")?;
                        let r = number(line, it.next(), "right bank station")?;
                        b.banks = Some((l, r));
                    }
                    _ => b.in_profile = true,
                }
                if it.next().is_some() {
                    return Err(syntax(line, format!("trailing tokens after {key}")));
                }
            }
            "END" => return Err(syntax(line, "END without PROFILE")),
            _ => return Err(syntax(line, format!("unexpected `{s}`"))),
        }
    }
    if let Some(b) = block {
        return Err(syntax(b.line, "cross-section is not terminated by END"));
    }
    let id = id.ok_or_else(|| syntax(1, "missing `REACH:` header"))?;
    Ok(Reach::new(id, sections)?)
}

/// Writes SI units with shortest round-trip float formatting.
pub fn serialize_geometry(reach: &Reach) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "REACH: {}", reach.id);
    let _ = writeln!(out, "UNITS: SI");
    for xs in &reach.cross_sections {
        let _ = writeln!(out, "XS {}", xs.chainage);
        let _ = writeln!(out, "N {}", xs.manning_n);
        let _ = writeln!(out, "BANKS {} {}", xs.bank_left, xs.bank_right);
        let _ = writeln!(out, "PROFILE");
        for (s, z) in &xs.profile {
            let _ = writeln!(out, "{s} {z}");
        }
        let _ = writeln!(out, "END");
    }
    out
}
