//! Staggered characteristic lattice.
//!
//! Nodes sit at `r_i = (i + 1/2) h`, `t_n = n h`, so neighbours along the
//! characteristics `t ± r` are `(i ± 1, n ± 1)`. Rows extend past the
//! reporting box so that every reporting node sees its full light cone:
//! row `n` holds `0 <= i <= n + reach` with `reach = R + cells`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// User-facing grid description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Radius of the reporting box.
    pub r_max: f64,
    /// Final time of the reporting box.
    pub t_max: f64,
    /// Characteristic cells along `[0, t_max]`; `h = t_max / cells`.
    pub cells: usize,
    /// Half-cell offset in `r`. Only the staggered layout is supported.
    pub stagger: bool,
    /// Last time level stored. Backward Duhamel integrals are cut here.
    pub horizon: f64,
}

impl GridSpec {
    /// Grid with the default horizon `2 t_max`.
    pub fn new(r_max: f64, t_max: f64, cells: usize) -> Self {
        GridSpec {
            r_max,
            t_max,
            cells,
            stagger: true,
            horizon: 2.0 * t_max,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn h(&self) -> f64 {
        self.t_max / self.cells as f64
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !finite_pos(self.r_max) || !finite_pos(self.t_max) {
            return Err(Error::InvalidGrid(format!(
                "r_max and t_max must be positive (got {}, {})",
                self.r_max, self.t_max
            )));
        }
        if self.cells < 8 {
            return Err(Error::InvalidGrid(format!(
                "need at least 8 cells, got {}",
                self.cells
            )));
        }
        if !self.stagger {
            return Err(Error::InvalidGrid(
                "unstaggered grids put a node on r = 0".into(),
            ));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.t_max * (1.0 - 1e-12)) {
            return Err(Error::InvalidGrid(format!(
                "horizon {} must be at least t_max {}",
                self.horizon, self.t_max
            )));
        }
        if (self.r_max / self.h()).round() < 1.0 {
            return Err(Error::InvalidGrid("r_max is below one cell".into()));
        }
        Ok(())
    }
}

/// Index bookkeeping for a validated [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub spec: GridSpec,
    pub h: f64,
    /// Columns `0..report_cols` lie inside `r_max`.
    pub report_cols: usize,
    /// Rows `0..=report_rows` lie inside `t_max`.
    pub report_rows: usize,
    /// Last stored row.
    pub levels: usize,
    /// Row `n` holds columns `0..=n + reach`.
    pub reach: usize,
    offsets: Vec<usize>,
}

impl Lattice {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let h = spec.h();
        let report_cols = (spec.r_max / h).round() as usize;
        let report_rows = spec.cells;
        let levels = ((spec.horizon / h).round() as usize).max(report_rows);
        let reach = report_cols + report_rows;
        let mut offsets = Vec::with_capacity(levels + 2);
        let mut acc = 0;
        for n in 0..=levels {
            offsets.push(acc);
            acc += n + reach + 1;
        }
        offsets.push(acc);
        Ok(Lattice {
            spec,
            h,
            report_cols,
            report_rows,
            levels,
            reach,
            offsets,
        })
    }

    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.h
    }

    #[inline]
    pub fn row_len(&self, n: usize) -> usize {
        n + self.reach + 1
    }

    #[inline]
    pub fn idx(&self, i: usize, n: usize) -> usize {
        debug_assert!(n <= self.levels && i < self.row_len(n));
        self.offsets[n] + i
    }

    #[inline]
    pub fn contains(&self, i: isize, n: isize) -> bool {
        n >= 0 && i >= 0 && (n as usize) <= self.levels && (i as usize) < self.row_len(n as usize)
    }

    #[inline]
    pub fn in_report(&self, i: usize, n: usize) -> bool {
        i < self.report_cols && n <= self.report_rows
    }

    /// Total number of stored nodes.
    pub fn len(&self) -> usize {
        self.offsets[self.levels + 1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row holding time `t`; `t` must be a lattice level.
    pub fn row_of_time(&self, t: f64) -> Result<usize> {
        let x = t / self.h;
        let n = x.round();
        if !(n >= 0.0 && (x - n).abs() <= 1e-6 && n as usize <= self.levels) {
            return Err(Error::InvalidGrid(format!(
                "t = {t} is not a lattice level"
            )));
        }
        Ok(n as usize)
    }

    /// Nearest lattice row to `t`, clamped to the stored levels.
    pub fn nearest_row(&self, t: f64) -> usize {
        ((t / self.h).round().max(0.0) as usize).min(self.levels)
    }

    /// Visits every stored node in row-major order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.levels).flat_map(move |n| (0..self.row_len(n)).map(move |i| (i, n)))
    }

    /// Visits the reporting box in row-major order.
    pub fn report_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.report_rows).flat_map(move |n| (0..self.report_cols).map(move |i| (i, n)))
    }

    /// Number of data samples needed to evaluate the free propagator on
    /// every stored node.
    pub fn data_len(&self) -> usize {
        2 * self.levels + self.reach + 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_offsets() {
        let lat = Lattice::new(GridSpec::new(4.0, 2.0, 8)).unwrap();
        assert_eq!(lat.h, 0.25);
        assert_eq!(lat.report_cols, 16);
        assert_eq!(lat.levels, 16);
        assert_eq!(lat.reach, 24);
        let mut k = 0;
        for (i, n) in lat.nodes() {
            assert_eq!(lat.idx(i, n), k);
            k += 1;
        }
        assert_eq!(k, lat.len());
        assert_eq!(lat.row_of_time(1.0).unwrap(), 4);
        assert!(lat.row_of_time(0.3).is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Lattice::new(GridSpec::new(1.0, 1.0, 4)).is_err());
        assert!(Lattice::new(GridSpec::new(-1.0, 1.0, 16)).is_err());
        let mut g = GridSpec::new(1.0, 1.0, 16);
        g.stagger = false;
        assert!(Lattice::new(g).is_err());
        assert!(Lattice::new(GridSpec::new(1.0, 1.0, 16).with_horizon(0.5)).is_err());
    }
}
