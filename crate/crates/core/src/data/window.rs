use std::ops::Range;

use super::SeriesTable;
use crate::error::{Result, TriformerError};
use crate::tensor::Tensor;

/// Chronological train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    /// 12/4/4 months expressed as row fractions.
    fn default() -> Self {
        SplitSpec {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: SeriesTable,
    pub val: SeriesTable,
    pub test: SeriesTable,
    /// Row ranges of the three segments in the source table.
    pub bounds: [Range<usize>; 3],
}

fn rows_for(total: usize, fraction: f64) -> usize {
    // absorb representation error such as 0.6 * 20 = 12.000000000000002
    (total as f64 * fraction + 1e-9).floor() as usize
}

/// Splits `table` into contiguous, non-overlapping segments in time order.
/// Every segment must hold at least `min_rows` rows (normally `H + F`).
pub fn split(table: &SeriesTable, spec: &SplitSpec, min_rows: usize) -> Result<Splits> {
    let fractions = [spec.train, spec.val, spec.test];
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || fractions.iter().sum::<f64>() > 1.0 + 1e-9 {
        return Err(TriformerError::Config(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to at most 1"
        )));
    }
    let total = table.rows();
    let train_end = rows_for(total, spec.train);
    let val_end = train_end + rows_for(total, spec.val);
    let test_end = (val_end + rows_for(total, spec.test)).min(total);
    let bounds = [0..train_end, train_end..val_end, val_end..test_end];
    for (name, range) in ["train", "validation", "test"].iter().zip(&bounds) {
        if range.len() < min_rows {
            return Err(TriformerError::Data(format!(
                "{name} segment has {} rows, fewer than the {min_rows} one window needs",
                range.len()
            )));
        }
    }
    Ok(Splits {
        train: table.slice_rows(bounds[0].start, bounds[0].end),
        val: table.slice_rows(bounds[1].start, bounds[1].end),
        test: table.slice_rows(bounds[2].start, bounds[2].end),
        bounds,
    })
}

/// Row ranges of one input/target window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub input: Range<usize>,
    pub target: Range<usize>,
}

/// Stride-1 sliding windows over a segment: window `k` reads rows
/// `[k, k+H)` and predicts rows `[k+H, k+H+F)`.
#[derive(Clone, Debug)]
pub struct WindowDataset {
    segment: SeriesTable,
    h: usize,
    f: usize,
}

pub fn windows(segment: &SeriesTable, h: usize, f: usize) -> Result<WindowDataset> {
    WindowDataset::new(segment.clone(), h, f)
}

impl WindowDataset {
    pub fn new(segment: SeriesTable, h: usize, f: usize) -> Result<Self> {
        if h == 0 || f == 0 {
            return Err(TriformerError::Config("H and F must be positive".into()));
        }
        if segment.rows() < h + f {
            return Err(TriformerError::Data(format!(
                "segment of {} rows is shorter than H + F = {}",
                segment.rows(),
                h + f
            )));
        }
        Ok(WindowDataset { segment, h, f })
    }

    pub fn len(&self) -> usize {
        self.segment.rows() - self.h - self.f + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookback(&self) -> usize {
        self.h
    }

    pub fn horizon(&self) -> usize {
        self.f
    }

    pub fn n_vars(&self) -> usize {
        self.segment.n_vars()
    }

    pub fn segment(&self) -> &SeriesTable {
        &self.segment
    }

    pub fn window(&self, k: usize) -> Window {
        assert!(k < self.len(), "window {k} out of range");
        Window {
            input: k..k + self.h,
            target: k + self.h..k + self.h + self.f,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Window> + '_ {
        (0..self.len()).map(|k| self.window(k))
    }

    fn gather(&self, indices: &[usize], len: usize, offset: usize) -> Tensor {
        let n = self.n_vars();
        let mut data = Vec::with_capacity(indices.len() * n * len);
        for &k in indices {
            let start = k + offset;
            for var in 0..n {
                data.extend((start..start + len).map(|r| self.segment.value(r, var)));
            }
        }
        Tensor::new(&[indices.len(), n, len], data).expect("batch shape")
    }

    /// Inputs `[B, N, H]` and targets `[B, N, F]` for the given windows,
    /// variable-major within each window.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        assert!(!indices.is_empty(), "empty batch");
        assert!(indices.iter().all(|&k| k < self.len()), "window index out of range");
        (
            self.gather(indices, self.h, 0),
            self.gather(indices, self.f, self.h),
        )
    }
}
