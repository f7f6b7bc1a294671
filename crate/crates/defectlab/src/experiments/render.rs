//! Space-time diagrams: row `t` is the configuration at time `t` on a fixed
//! column range, top row first.

use crate::defects::{defect_field, Language};
use crate::error::{Error, Result};
use crate::lattice::{window_sample, Symbol};
use crate::measures::MeasureSpec;
use crate::raster;
use crate::rng::stream;
use crate::rules::Dynamics;

/// Colours per symbol: 0 white, 1 black, 2 red, 3 blue, then a fixed cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette(Vec<[u8; 3]>);

const EXTRA: [[u8; 3]; 8] = [
    [0, 160, 0],
    [230, 200, 0],
    [200, 0, 200],
    [0, 190, 190],
    [240, 130, 0],
    [120, 70, 20],
    [140, 140, 140],
    [90, 0, 140],
];

impl Palette {
    pub fn standard(alphabet_size: usize) -> Self {
        let base = [[255, 255, 255], [0, 0, 0], [255, 0, 0], [0, 0, 255]];
        Self((0..alphabet_size).map(|s| if s < 4 { base[s] } else { EXTRA[(s - 4) % EXTRA.len()] }).collect())
    }

    pub fn from_colours(colours: Vec<[u8; 3]>) -> Result<Self> {
        if colours.is_empty() {
            return Err(Error::Config("empty palette".into()));
        }
        Ok(Self(colours))
    }

    pub fn colour(&self, s: Symbol) -> Result<[u8; 3]> {
        self.0.get(s as usize).copied().ok_or(Error::SymbolOutOfRange { symbol: s, size: self.0.len() })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Spacetime {
    pub width: usize,
    pub rows: Vec<Vec<Symbol>>,
}

impl Spacetime {
    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn to_ppm(&self, palette: &Palette) -> Result<Vec<u8>> {
        let mut rgb = Vec::with_capacity(self.width * self.height() * 3);
        for row in &self.rows {
            for &s in row {
                rgb.extend_from_slice(&palette.colour(s)?);
            }
        }
        raster::ppm(self.width, self.height(), &rgb)
    }

    /// Defect field of every row as a grayscale image; black marks defects,
    /// saturated cells are white.
    pub fn defects_pgm(&self, lang: &dyn Language, alphabet: &crate::Alphabet) -> Result<Vec<u8>> {
        let mut fields = Vec::with_capacity(self.height());
        for row in &self.rows {
            let c = crate::Configuration::new(alphabet.clone(), row.clone(), 0)?;
            fields.push(defect_field(lang, &c)?);
        }
        let top = fields
            .iter()
            .flat_map(|f| f.values().iter().filter(|v| !v.saturated).map(|v| v.value))
            .max()
            .unwrap_or(1)
            .max(1);
        let mut gray = Vec::with_capacity(self.width * self.height());
        for f in &fields {
            let defects = f.defects();
            for (k, v) in f.values().iter().enumerate() {
                gray.push(if defects.binary_search(&(k as i64)).is_ok() {
                    0
                } else if v.saturated {
                    255
                } else {
                    (40 + v.value.min(top) * 214 / top) as u8
                });
            }
        }
        raster::pgm(self.width, self.height(), &gray)
    }
}

/// `height` rows of `width` exact cells starting from a sample of `measure`.
pub fn render_spacetime(
    dynamics: &Dynamics,
    measure: &MeasureSpec,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<Spacetime> {
    if width == 0 || height == 0 {
        return Err(Error::Infeasible(format!("empty diagram {width}x{height}")));
    }
    let margin = dynamics.radius().checked_mul(height - 1).ok_or_else(|| Error::Infeasible("diagram too tall".into()))?;
    let mut rng = stream(seed, 0);
    let c = window_sample(measure, dynamics.alphabet(), width, margin, &mut rng)?;
    let row = |c: &crate::Configuration| (0..width as i64).map(|j| c.at(j)).collect::<Vec<_>>();
    let mut rows = vec![row(&c)];
    dynamics.iterate(c, height - 1, &mut rng, |_, c| rows.push(row(c)))?;
    Ok(Spacetime { width, rows })
}
