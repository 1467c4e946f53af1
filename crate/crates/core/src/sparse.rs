/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Pattern from sorted, deduplicated `(row, col)` pairs with zero values.
    pub fn from_pattern(n: usize, pairs: &[(u32, u32)]) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        for &(r, _) in pairs {
            row_ptr[r as usize + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        let cols = pairs.iter().map(|&(_, c)| c).collect();
        Self { n, row_ptr, cols, vals: vec![0.0; pairs.len()] }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let mut pairs = Vec::new();
        for (r, row) in a.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    pairs.push((r as u32, c as u32));
                }
            }
        }
        let mut m = Self::from_pattern(n, &pairs);
        for (k, &(r, c)) in pairs.iter().enumerate() {
            m.vals[k] = a[r as usize][c as usize];
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let pairs: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, i)).collect();
        let mut m = Self::from_pattern(n, &pairs);
        m.vals.iter_mut().for_each(|v| *v = 1.0);
        m
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Position of `(row, col)` in `vals`.
    pub fn position(&self, row: usize, col: u32) -> Option<usize> {
        let (s, e) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.cols[s..e].binary_search(&col).ok().map(|k| s + k)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.position(row, col as u32).map_or(0.0, |k| self.vals[k])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k] as usize];
            }
            *yr = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[r][self.cols[k] as usize] = self.vals[k];
            }
        }
        d
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= c);
        m
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k] as usize;
                worst = worst.max((self.vals[k] - self.get(c, r)).abs());
            }
        }
        worst
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_matvec() {
        let a = vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]];
        let m = CsrMatrix::from_dense(&a);
        assert_eq!(m.nnz(), 7);
        assert_eq!(m.to_dense(), a);
        let mut y = vec![0.0; 3];
        m.matvec(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![1.0, 0.0, 1.0]);
        assert_eq!(m.diagonal(), vec![2.0; 3]);
        assert_eq!(m.max_asymmetry(), 0.0);
    }
}
