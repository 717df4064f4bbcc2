//! Grid-hashing classifier: training points are binned into `2^m` cells per
//! dimension and each occupied cell stores its class counts. A query is a
//! single hash lookup returning the cell's majority class.
//!
//! This variant does not compute bounds. The local kernel mass depends on the
//! query's distances to the training points, which the aggregated table no
//! longer has. Use [`RegularModel`](crate::RegularModel) or
//! [`LocalizedModel`](crate::LocalizedModel) when bounds are needed.

use std::collections::HashMap;

use crate::dataset::LabeledDataset;
use crate::error::{NwcError, Result};
use crate::estimate::{argmax, ClassPredictor};
use crate::scalar::Scalar;

/// Largest supported per-dimension resolution (cell coordinates are `u32`).
pub const MAX_RESOLUTION: u32 = 31;

/// Default out-of-box tolerance, as a fraction of the box width.
pub const DEFAULT_TOLERANCE: f64 = 0.1;

pub type CellKey = Box<[u32]>;

#[derive(Debug, Clone)]
pub struct DyadicModel<T> {
    resolution: u32,
    lower: Vec<T>,
    upper: Vec<T>,
    tolerance: T,
    cells: HashMap<CellKey, Vec<usize>>,
    num_classes: usize,
    n: usize,
}

/// One row of [`DyadicModel::export_grid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridCell {
    pub coords: Vec<u32>,
    pub counts: Vec<usize>,
    pub majority: usize,
}

impl<T: Scalar> DyadicModel<T> {
    /// Bins `ds` at resolution `m` (i.e. `2^m` cells per dimension).
    ///
    /// A dimension whose training values are all equal collapses to a single
    /// cell.
    pub fn fit(ds: &LabeledDataset<T>, resolution: u32) -> Result<Self> {
        Self::fit_with_tolerance(ds, resolution, T::lit(DEFAULT_TOLERANCE))
    }

    pub fn fit_with_tolerance(ds: &LabeledDataset<T>, resolution: u32, tolerance: T) -> Result<Self> {
        if resolution == 0 {
            return Err(NwcError::param("resolution", "must be at least 1"));
        }
        if resolution > MAX_RESOLUTION {
            return Err(NwcError::Capacity(format!(
                "resolution {resolution} exceeds the supported maximum of {MAX_RESOLUTION} (2^{} cells in {} dimensions)",
                u64::from(resolution) * ds.dim() as u64,
                ds.dim()
            )));
        }
        if !(tolerance >= T::zero()) {
            return Err(NwcError::param("tolerance", "must be non-negative"));
        }
        let d = ds.dim();
        let mut lower = vec![T::infinity(); d];
        let mut upper = vec![T::neg_infinity(); d];
        for row in ds.rows() {
            for j in 0..d {
                lower[j] = lower[j].min(row[j]);
                upper[j] = upper[j].max(row[j]);
            }
        }
        let mut model = DyadicModel {
            resolution,
            lower,
            upper,
            tolerance,
            cells: HashMap::new(),
            num_classes: ds.num_classes(),
            n: ds.len(),
        };
        for (row, &c) in ds.rows().zip(ds.labels()) {
            let key = model.cell_of(row);
            model.cells.entry(key).or_insert_with(|| vec![0; ds.num_classes()])[c] += 1;
        }
        Ok(model)
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Total cell count `2^(m·d)` of the full grid, if it fits in a `u128`.
    pub fn grid_size(&self) -> Option<u128> {
        let bits = u64::from(self.resolution).checked_mul(self.lower.len() as u64)?;
        (bits < 128).then(|| 1u128 << bits)
    }

    pub fn bounding_box(&self) -> (&[T], &[T]) {
        (&self.lower, &self.upper)
    }

    /// Cell index along each dimension, `floor((y − min)/width)` clamped into
    /// `[0, 2^m − 1]`.
    pub fn cell_of(&self, y: &[T]) -> CellKey {
        let cells = T::lit(f64::from(1u32 << (self.resolution - 1)) * 2.0);
        let top = (1u64 << self.resolution) - 1;
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| {
                let span = hi - lo;
                if span <= T::zero() {
                    return 0;
                }
                // Scale by 2^m after normalising so coarser grids nest exactly.
                let t = ((v - lo) / span * cells).floor();
                if t <= T::zero() {
                    0
                } else {
                    t.to_u64().unwrap_or(top).min(top) as u32
                }
            })
            .collect()
    }

    fn inside_tolerance(&self, y: &[T]) -> bool {
        y.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&lo, &hi))| {
            let span = hi - lo;
            if span <= T::zero() {
                return true;
            }
            let slack = self.tolerance * span;
            v >= lo - slack && v <= hi + slack
        })
    }

    /// Class counts of the cell containing `y`, if it is populated and `y`
    /// lies within the tolerance band around the training box.
    pub fn counts_at(&self, y: &[T]) -> Result<Option<&[usize]>> {
        self.check_dim(y)?;
        if !self.inside_tolerance(y) {
            return Ok(None);
        }
        Ok(self.cells.get(&self.cell_of(y)).map(Vec::as_slice))
    }

    /// Occupied cells in lexicographic coordinate order.
    pub fn export_grid(&self) -> Vec<GridCell> {
        let mut rows: Vec<GridCell> = self
            .cells
            .iter()
            .map(|(k, counts)| GridCell {
                coords: k.to_vec(),
                counts: counts.clone(),
                majority: argmax(counts).unwrap_or(0),
            })
            .collect();
        rows.sort_by(|a, b| a.coords.cmp(&b.coords));
        rows
    }

    /// Writes the grid as CSV: `c0..c{d-1}, count_0..count_{C-1}, majority`.
    pub fn write_grid_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.lower.len()).map(|j| format!("c{j}")).collect();
        header.extend((0..self.num_classes).map(|c| format!("count_{c}")));
        header.push("majority".into());
        w.write_record(&header)?;
        for cell in self.export_grid() {
            let mut rec: Vec<String> = cell.coords.iter().map(u32::to_string).collect();
            rec.extend(cell.counts.iter().map(usize::to_string));
            rec.push(cell.majority.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn training_size(&self) -> usize {
        self.n
    }
}

impl<T: Scalar> ClassPredictor<T> for DyadicModel<T> {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict_class(&self, y: &[T]) -> Result<Option<usize>> {
        Ok(self.counts_at(y)?.and_then(argmax))
    }
}
