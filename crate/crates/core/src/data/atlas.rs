use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BrainResponse;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hemisphere {
    L,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lobe {
    Frontal,
    Temporal,
    Parietal,
    Occipital,
}

impl Lobe {
    pub const ALL: [Lobe; 4] = [Lobe::Frontal, Lobe::Temporal, Lobe::Parietal, Lobe::Occipital];
}

impl fmt::Display for Lobe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lobe::Frontal => "frontal",
            Lobe::Temporal => "temporal",
            Lobe::Parietal => "parietal",
            Lobe::Occipital => "occipital",
        })
    }
}

impl FromStr for Lobe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frontal" => Ok(Lobe::Frontal),
            "temporal" => Ok(Lobe::Temporal),
            "parietal" => Ok(Lobe::Parietal),
            "occipital" => Ok(Lobe::Occipital),
            other => Err(Error::invalid(format!("unknown lobe `{other}`"))),
        }
    }
}

impl FromStr for Hemisphere {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L" | "l" | "left" => Ok(Hemisphere::L),
            "R" | "r" | "right" => Ok(Hemisphere::R),
            other => Err(Error::invalid(format!("unknown hemisphere `{other}`"))),
        }
    }
}

/// Sensor index -> (hemisphere, lobe).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionAtlas {
    cells: Vec<(Hemisphere, Lobe)>,
}

impl RegionAtlas {
    pub fn new(cells: Vec<(Hemisphere, Lobe)>) -> Self {
        Self { cells }
    }

    pub fn sensors(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, sensor: usize) -> Option<(Hemisphere, Lobe)> {
        self.cells.get(sensor).copied()
    }

    /// CSV `sensor_index,hemisphere,lobe`. A header row and `#` comment lines
    /// are skipped. Rows may appear in any order but every index in
    /// `0..sensors` must be present exactly once.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, Hemisphere, Lobe)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("sensor_index") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |msg: String| Error::format("atlas csv", format!("line {}: {msg}", lineno + 1));
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, got {}", fields.len())));
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad sensor index `{}`", fields[0])))?;
            let hemi: Hemisphere = fields[1].parse().map_err(|e: Error| bad(e.to_string()))?;
            let lobe: Lobe = fields[2].parse().map_err(|e: Error| bad(e.to_string()))?;
            rows.push((idx, hemi, lobe));
        }
        rows.sort_by_key(|r| r.0);
        for (expect, row) in rows.iter().enumerate() {
            if row.0 != expect {
                return Err(Error::format(
                    "atlas csv",
                    format!(
                        "sensor indices must cover 0..{} exactly once; problem at index {}",
                        rows.len(),
                        row.0
                    ),
                ));
            }
        }
        Ok(Self {
            cells: rows.into_iter().map(|(_, h, l)| (h, l)).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sensor_index,hemisphere,lobe\n");
        for (i, (h, l)) in self.cells.iter().enumerate() {
            out.push_str(&format!("{i},{h:?},{l}\n"));
        }
        out
    }

    /// Approximate layout for a 306-channel helmet: 102 locations with three
    /// sensors each, the first 51 locations on the left. Not a measured
    /// anatomical assignment.
    pub fn example_306() -> Self {
        Self::parse_csv(include_str!("../../data/example_atlas.csv")).expect("shipped atlas parses")
    }

    /// Evenly spread atlas for small simulated shapes: sensors alternate
    /// hemispheres and cycle through the lobes.
    pub fn synthetic(sensors: usize) -> Self {
        let cells = (0..sensors)
            .map(|s| {
                let hemi = if s % 2 == 0 { Hemisphere::L } else { Hemisphere::R };
                (hemi, Lobe::ALL[(s / 2) % 4])
            })
            .collect();
        Self { cells }
    }

    pub fn sensors_in(&self, region: &RegionSelector) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, cell)| region.contains(**cell))
            .map(|(i, _)| i)
            .collect()
    }

    /// Restrict a response to the sensors of `region`, keeping sensor order.
    pub fn region_slice(&self, response: &BrainResponse, region: &RegionSelector) -> Result<BrainResponse> {
        if self.sensors() != response.sensors() {
            return Err(Error::shape("atlas sensor count", response.sensors(), self.sensors()));
        }
        let rows = self.sensors_in(region);
        if rows.is_empty() {
            return Err(Error::invalid(format!("region {region} has no sensors")));
        }
        Ok(BrainResponse {
            values: response.values.select_rows(rows.iter()),
            ..response.clone()
        })
    }
}

/// Hemisphere + lobe selector. `None` means "any". Serializes as its
/// display string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionSelector {
    pub hemisphere: Option<Hemisphere>,
    pub lobe: Option<Lobe>,
}

impl RegionSelector {
    pub const ALL: RegionSelector = RegionSelector {
        hemisphere: None,
        lobe: None,
    };

    pub fn new(hemisphere: Option<Hemisphere>, lobe: Option<Lobe>) -> Self {
        Self { hemisphere, lobe }
    }

    pub fn contains(&self, (h, l): (Hemisphere, Lobe)) -> bool {
        self.hemisphere.is_none_or(|x| x == h) && self.lobe.is_none_or(|x| x == l)
    }

    /// The ten regions of the per-region analysis: eight hemisphere/lobe cells,
    /// bilateral frontal and the whole head.
    pub fn standard_set() -> Vec<RegionSelector> {
        let mut out = Vec::new();
        for lobe in Lobe::ALL {
            for hemi in [Hemisphere::L, Hemisphere::R] {
                out.push(RegionSelector::new(Some(hemi), Some(lobe)));
            }
        }
        out.push(RegionSelector::new(None, Some(Lobe::Frontal)));
        out.push(RegionSelector::ALL);
        out
    }
}

impl fmt::Display for RegionSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.hemisphere, self.lobe) {
            (None, None) => f.write_str("all"),
            (Some(h), None) => write!(f, "{h:?}-all"),
            (None, Some(l)) => write!(f, "bilateral-{l}"),
            (Some(h), Some(l)) => write!(f, "{h:?}-{l}"),
        }
    }
}

impl Serialize for RegionSelector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionSelector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for RegionSelector {
    type Err = Error;

    /// `all`, `L-temporal`, `R-occipital`, `bilateral-frontal`, `L-all`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self::ALL);
        }
        let (h, l) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("region `{s}` is not `<hemisphere>-<lobe>`")))?;
        let hemisphere = if h.eq_ignore_ascii_case("bilateral") {
            None
        } else {
            Some(h.parse()?)
        };
        let lobe = if l.eq_ignore_ascii_case("all") {
            None
        } else {
            Some(l.parse()?)
        };
        Ok(Self { hemisphere, lobe })
    }
}
