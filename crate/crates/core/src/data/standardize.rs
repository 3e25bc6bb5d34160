use super::SeriesTable;
use crate::error::{Result, TriformerError};

/// Per-variable mean and population standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizeStats {
    /// Fits statistics on `table`. A column whose standard deviation is at
    /// most `1e-12` is an error.
    pub fn fit(table: &SeriesTable) -> Result<Self> {
        let (rows, n) = (table.rows(), table.n_vars());
        if rows == 0 {
            return Err(TriformerError::Data("cannot standardize an empty table".into()));
        }
        let mut mean = vec![0.0; n];
        for r in 0..rows {
            for (m, v) in mean.iter_mut().zip(table.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        let mut var = vec![0.0; n];
        for r in 0..rows {
            for ((s, v), m) in var.iter_mut().zip(table.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / rows as f64).sqrt()).collect();
        if let Some(i) = std.iter().position(|&s| s <= 1e-12) {
            return Err(TriformerError::Data(format!(
                "column {} is constant and cannot be standardized",
                table.columns()[i]
            )));
        }
        Ok(StandardizeStats { mean, std })
    }

    fn check(&self, table: &SeriesTable) -> Result<()> {
        if table.n_vars() != self.mean.len() {
            return Err(TriformerError::Shape(format!(
                "statistics cover {} variables, table has {}",
                self.mean.len(),
                table.n_vars()
            )));
        }
        Ok(())
    }

    /// `(x − mean) / std` per column.
    pub fn apply(&self, table: &SeriesTable) -> Result<SeriesTable> {
        self.check(table)?;
        let n = self.mean.len();
        let values = table
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % n]) / self.std[i % n])
            .collect();
        Ok(table.with_values(values))
    }

    /// `x·std + mean` per column.
    pub fn invert(&self, table: &SeriesTable) -> Result<SeriesTable> {
        self.check(table)?;
        let n = self.mean.len();
        let values = table
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.std[i % n] + self.mean[i % n])
            .collect();
        Ok(table.with_values(values))
    }
}

/// Fits statistics on `table` and standardizes it.
pub fn standardize(table: &SeriesTable) -> Result<(SeriesTable, StandardizeStats)> {
    let stats = StandardizeStats::fit(table)?;
    Ok((stats.apply(table)?, stats))
}
