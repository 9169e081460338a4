use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GrayImage, Raster, RgbImage, ThermalError};

pub const PALETTE_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    Ironbow,
    Whitehot,
    Rainbow,
    Sepia,
}

impl Palette {
    pub const ALL: [Palette; 4] = [Palette::Ironbow, Palette::Whitehot, Palette::Rainbow, Palette::Sepia];

    pub fn name(self) -> &'static str {
        match self {
            Palette::Ironbow => "ironbow",
            Palette::Whitehot => "whitehot",
            Palette::Rainbow => "rainbow",
            Palette::Sepia => "sepia",
        }
    }

    fn shipped_source(self) -> &'static str {
        match self {
            Palette::Ironbow => include_str!("../../data/palettes/ironbow.lut"),
            Palette::Whitehot => include_str!("../../data/palettes/whitehot.lut"),
            Palette::Rainbow => include_str!("../../data/palettes/rainbow.lut"),
            Palette::Sepia => include_str!("../../data/palettes/sepia.lut"),
        }
    }

    /// Generates the table from its defining curve.
    pub fn build(self) -> PaletteLut {
        let table = match self {
            Palette::Whitehot => {
                let mut t = [[0u8; 3]; PALETTE_SIZE];
                for (i, e) in t.iter_mut().enumerate() {
                    *e = [i as u8; 3];
                }
                t
            }
            Palette::Rainbow => piecewise_linear(&[
                (0.00, [0.0, 0.0, 255.0]),
                (0.25, [0.0, 255.0, 255.0]),
                (0.50, [0.0, 255.0, 0.0]),
                (0.75, [255.0, 255.0, 0.0]),
                (1.00, [255.0, 0.0, 0.0]),
            ]),
            Palette::Ironbow => piecewise_linear(&[
                (0.00, [0.0, 0.0, 0.0]),
                (0.15, [30.0, 0.0, 90.0]),
                (0.35, [130.0, 0.0, 150.0]),
                (0.55, [215.0, 60.0, 60.0]),
                (0.70, [245.0, 130.0, 0.0]),
                (0.85, [255.0, 200.0, 20.0]),
                (1.00, [255.0, 255.0, 255.0]),
            ]),
            Palette::Sepia => {
                // warm tint matrix applied to (g, g, g); row sums of the usual sepia kernel
                const TINT: [f64; 3] = [0.393 + 0.769 + 0.189, 0.349 + 0.686 + 0.168, 0.272 + 0.534 + 0.131];
                let mut t = [[0u8; 3]; PALETTE_SIZE];
                for (i, e) in t.iter_mut().enumerate() {
                    for c in 0..3 {
                        e[c] = (TINT[c] * i as f64).round().min(255.0) as u8;
                    }
                }
                t
            }
        };
        PaletteLut { name: self, table }
    }

    /// The checked-in table.
    pub fn lut(self) -> PaletteLut {
        PaletteLut::parse(self, self.shipped_source().as_bytes()).expect("shipped palette file is valid")
    }
}

impl fmt::Display for Palette {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Palette {
    type Err = ThermalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Palette::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ThermalError::Parse(format!("unknown palette {s:?}")))
    }
}

fn piecewise_linear(points: &[(f64, [f64; 3])]) -> [[u8; 3]; PALETTE_SIZE] {
    let mut t = [[0u8; 3]; PALETTE_SIZE];
    for (i, e) in t.iter_mut().enumerate() {
        let x = i as f64 / 255.0;
        let k = points
            .windows(2)
            .position(|w| x <= w[1].0)
            .unwrap_or(points.len() - 2);
        let (x0, c0) = points[k];
        let (x1, c1) = points[k + 1];
        let f = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        for c in 0..3 {
            e[c] = (c0[c] + f * (c1[c] - c0[c])).round().clamp(0.0, 255.0) as u8;
        }
    }
    t
}

/// 256-entry color lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaletteLut {
    pub name: Palette,
    pub table: [[u8; 3]; PALETTE_SIZE],
}

impl PaletteLut {
    /// Reads the `index r g b` text format; blank lines and `#` comments are skipped.
    pub fn parse<R: BufRead>(name: Palette, reader: R) -> Result<Self, ThermalError> {
        let mut table = [[0u8; 3]; PALETTE_SIZE];
        let mut seen = [false; PALETTE_SIZE];
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || ThermalError::Parse(format!("line {}: expected `index r g b`", lineno + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            let idx: usize = fields[0].parse().map_err(|_| bad())?;
            if idx >= PALETTE_SIZE || seen[idx] {
                return Err(ThermalError::Parse(format!("line {}: bad or repeated index {idx}", lineno + 1)));
            }
            for c in 0..3 {
                table[idx][c] = fields[c + 1].parse().map_err(|_| bad())?;
            }
            seen[idx] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(ThermalError::Parse(format!("missing entry {missing}")));
        }
        Ok(Self { name, table })
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, [r, g, b]) in self.table.iter().enumerate() {
            writeln!(w, "{i} {r} {g} {b}")?;
        }
        Ok(())
    }

    /// First index mapping to `rgb`, if any.
    pub fn index_of(&self, rgb: [u8; 3]) -> Option<u8> {
        self.table.iter().position(|&e| e == rgb).map(|i| i as u8)
    }

    /// Groups of indices that share a color. Empty for an injective table.
    pub fn collisions(&self) -> Vec<Vec<u8>> {
        let mut groups: std::collections::BTreeMap<[u8; 3], Vec<u8>> = Default::default();
        for (i, &e) in self.table.iter().enumerate() {
            groups.entry(e).or_default().push(i as u8);
        }
        groups.into_values().filter(|g| g.len() > 1).collect()
    }

    pub fn differing_entries(&self, other: &PaletteLut) -> usize {
        self.table.iter().zip(other.table.iter()).filter(|(a, b)| a != b).count()
    }
}

/// Colorizes a normalized grayscale raster: `table[round(g * 255)]`.
pub fn apply_palette(gray: &GrayImage, lut: &PaletteLut) -> Result<RgbImage, ThermalError> {
    let data = gray
        .data
        .iter()
        .map(|&g| {
            if (0.0..=1.0).contains(&g) {
                Ok(lut.table[(g * 255.0).round() as usize])
            } else {
                Err(ThermalError::GrayRange(g))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Raster {
        width: gray.width,
        height: gray.height,
        data,
    })
}
