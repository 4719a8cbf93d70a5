//! Symmetric positive definite band matrices with in-place Cholesky.

/// Lower band of an `n × n` symmetric matrix with half-bandwidth `p`;
/// entry `(i, i - k)` lives at `data[i * (p + 1) + k]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
    factored: bool,
}

impl BandMatrix {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self { n, p, data: vec![0.0; n * (p + 1)], factored: false }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        (i - j <= self.p).then(|| i * (self.p + 1) + (i - j))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `c · u uᵀ` for a sparse vector `u` given as `(index, value)` pairs.
    pub fn add_outer(&mut self, c: f64, u: &[(usize, f64)]) {
        for &(i, a) in u {
            for &(j, b) in u {
                if j <= i {
                    let k = self.idx(i, j).expect("outer product exceeds the bandwidth");
                    self.data[k] += c * a * b;
                }
            }
        }
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * (self.p + 1)]).fold(0.0, f64::max)
    }

    pub fn shift_diagonal(&mut self, s: f64) {
        for i in 0..self.n {
            self.data[i * (self.p + 1)] += s;
        }
    }

    /// Overwrites the band with `L` where `A = L Lᵀ`. Returns `false` on a non-positive pivot.
    pub fn factor(&mut self) -> bool {
        let p = self.p;
        let w = p + 1;
        for i in 0..self.n {
            for j in i.saturating_sub(p)..=i {
                let mut s = self.data[i * w + (i - j)];
                for t in i.saturating_sub(p).max(j.saturating_sub(p))..j {
                    s -= self.data[i * w + (i - t)] * self.data[j * w + (j - t)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return false;
                    }
                    self.data[i * w] = s.sqrt();
                } else {
                    self.data[i * w + (i - j)] = s / self.data[j * w];
                }
            }
        }
        self.factored = true;
        true
    }

    /// Solves `A x = b` in place after [`factor`](Self::factor).
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert!(self.factored);
        let p = self.p;
        let w = p + 1;
        for i in 0..self.n {
            let mut s = b[i];
            for t in i.saturating_sub(p)..i {
                s -= self.data[i * w + (i - t)] * b[t];
            }
            b[i] = s / self.data[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for t in i + 1..(i + p + 1).min(self.n) {
                s -= self.data[t * w + (t - i)] * b[t];
            }
            b[i] = s / self.data[i * w];
        }
    }
}
