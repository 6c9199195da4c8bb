//! Per-cell fields over a layout: successor distance to an anchor and the
//! mean one-step SFC of each cell's moves. Written as CSV or 8-bit PGM.

use std::fmt::Write as _;
use std::path::Path;

use super::SuccessorFeatures;
use crate::env::{Action, Cell, GridSpec};
use crate::error::{Error, Result};

/// Values on the open cells of a layout (apple count 0). Walls are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
}

impl Field {
    pub fn get(&self, c: Cell) -> Option<f64> {
        self.values.get(c.y * self.width + c.x).copied().flatten()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value\n");
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some(v) = self.values[y * self.width + x] {
                    writeln!(out, "{x},{y},{v}").unwrap();
                }
            }
        }
        out
    }

    /// Binary PGM (P5). Open cells span 1..=255 linearly between the
    /// field's min and max; walls are 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (lo, hi) = self
            .values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|v| match v {
            Some(v) => 1 + ((v - lo) / span * 254.0).round() as u8,
            None => 0,
        }));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

fn field_from(spec: &GridSpec, f: impl Fn(Cell, usize) -> f64) -> Field {
    let mut values = vec![None; spec.width() * spec.height()];
    for &c in spec.cells() {
        let s = spec.state_id(c, 0).expect("open cell");
        values[c.y * spec.width() + c.x] = Some(f(c, s));
    }
    Field {
        width: spec.width(),
        height: spec.height(),
        values,
    }
}

/// Successor distance from each cell to `anchor`.
pub fn sd_field(sf: &impl SuccessorFeatures, spec: &GridSpec, anchor: Cell) -> Result<Field> {
    let a = spec
        .state_id(anchor, 0)
        .ok_or(Error::WallCell { x: anchor.x, y: anchor.y })?;
    Ok(field_from(spec, |_, s| sf.successor_distance(a, s)))
}

/// Mean SFC reward over each cell's moves that change the cell.
pub fn sfc_field(sf: &impl SuccessorFeatures, spec: &GridSpec) -> Field {
    field_from(spec, |c, s| {
        let (sum, n) = Action::ALL
            .into_iter()
            .map(|a| spec.move_from(c, a))
            .filter(|&m| m != c)
            .fold((0.0, 0usize), |(sum, n), m| {
                (sum + sf.sfc_reward(s, spec.state_id(m, 0).unwrap()), n + 1)
            });
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::oracle;
    use crate::features::Embedding;
    use crate::sf::{AnalyticSr, Convention};

    fn chain_sr() -> (GridSpec, AnalyticSr) {
        let spec = GridSpec::builtin("chain:4").unwrap();
        let p = oracle::transition_matrix(&spec, &oracle::uniform_policy(&spec)).unwrap();
        let sr = AnalyticSr::solve(&p, &Embedding::one_hot(4).matrix(), 0.9, Convention::NextStateOnly).unwrap();
        (spec, sr)
    }

    #[test]
    fn sd_field_zero_at_anchor() {
        let (spec, sr) = chain_sr();
        let f = sd_field(&sr, &spec, Cell::new(1, 0)).unwrap();
        assert_eq!(f.get(Cell::new(1, 0)), Some(0.0));
        assert!(f.get(Cell::new(3, 0)).unwrap() > 0.0);
        assert!(sd_field(&sr, &spec, Cell::new(9, 0)).is_err());
    }

    #[test]
    fn csv_and_pgm_shapes() {
        let spec = GridSpec::builtin("three_rooms").unwrap();
        let p = oracle::transition_matrix(&spec, &oracle::uniform_policy(&spec)).unwrap();
        let sr = AnalyticSr::solve(&p, &Embedding::one_hot(spec.n_cells()).matrix(), 0.9, Convention::NextStateOnly)
            .unwrap();
        let f = sfc_field(&sr, &spec);
        let csv = f.to_csv();
        assert_eq!(csv.lines().count(), 1 + spec.n_cells());
        let pgm = f.to_pgm();
        let header = b"P5\n17 11\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 17 * 11);
        // wall pixel
        assert_eq!(pgm[header.len() + 5], 0);
    }
}
