use nalgebra::DMatrix;
use rayon::prelude::*;

/// A real symmetric linear operator, applied matrix-free.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Compressed sparse row matrix. Both triangles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Accumulates (row, col, value) triplets; duplicates are summed.
#[derive(Debug, Default)]
pub struct TripletBuilder {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, rows: vec![Vec::new(); n] }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.rows[row].push((col, value));
    }

    pub fn build(self) -> CsrMatrix {
        let n = self.n;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in self.rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }
}

impl CsrMatrix {
    /// Concatenates consecutive row blocks, each given as per-row entry
    /// counts plus column indices (sorted within a row) and values.
    pub fn from_row_blocks(n: usize, blocks: Vec<(Vec<usize>, Vec<usize>, Vec<f64>)>) -> Self {
        let nnz = blocks.iter().map(|b| b.1.len()).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (counts, c, v) in blocks {
            for k in counts {
                row_ptr.push(row_ptr.last().unwrap() + k);
            }
            cols.extend(c);
            vals.extend(v);
        }
        assert_eq!(row_ptr.len(), n + 1, "row blocks do not cover the matrix");
        assert_eq!(*row_ptr.last().unwrap(), cols.len());
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (start, end) = (self.row_ptr[row], self.row_ptr[row + 1]);
        match self.cols[start..end].binary_search(&col) {
            Ok(k) => self.vals[start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (start, end) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.cols[start..end].iter().copied().zip(self.vals[start..end].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest |A_ij - A_ji| over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Largest absolute entrywise difference between two matrices of equal size.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - other.get(i, j)).abs());
            }
            for (j, v) in other.row(i) {
                worst = worst.max((v - self.get(i, j)).abs());
            }
        }
        worst
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j))).max().unwrap_or(0)
    }

    /// Gershgorin lower bound on the spectrum.
    pub fn gershgorin_lower(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let off: f64 = self.row(i).filter(|(j, _)| *j != i).map(|(_, v)| v.abs()).sum();
                self.get(i, i) - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn scale(&mut self, factor: f64) {
        self.vals.iter_mut().for_each(|v| *v *= factor);
    }
}

impl SymOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let body = |(i, yi): (usize, &mut f64)| {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = 0.0;
            for k in start..end {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        };
        if self.n >= 20_000 {
            y.par_iter_mut().enumerate().for_each(body);
        } else {
            y.iter_mut().enumerate().for_each(body);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2);
        b.add(0, 0, 1.0);
        b.add(0, 0, 2.0);
        b.add(0, 1, -1.0);
        b.add(1, 0, -1.0);
        let m = b.build();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.symmetry_defect(), 0.0);
        let mut y = vec![0.0; 2];
        m.apply(&[1.0, 2.0], &mut y);
        assert_eq!(y, vec![1.0, -1.0]);
    }
}
