use super::directions::JOE_KUO;
use crate::{Error, Matrix, Result};

pub const MAX_DIMENSION: usize = 64;

const BITS: usize = 32;
const SCALE: f64 = 1.0 / (1u64 << BITS) as f64;

/// Unscrambled Sobol sequence in gray-code order.
///
/// Index 0 (the origin) is never emitted, so every coordinate lies in
/// `(0, 1)`; the first point is index 1.
#[derive(Debug, Clone)]
pub struct SobolGenerator {
    dimension: usize,
    directions: Vec<[u32; BITS]>,
    /// Point at `index - 1`.
    state: Vec<u32>,
    index: u64,
}

impl SobolGenerator {
    pub fn new(dimension: usize) -> Result<Self> {
        Self::starting_at(dimension, 1)
    }

    /// Generator whose next point is `index` (≥ 1).
    pub fn starting_at(dimension: usize, index: u64) -> Result<Self> {
        if dimension == 0 || dimension > MAX_DIMENSION {
            return Err(Error::UnsupportedDimension(dimension));
        }
        let directions: Vec<[u32; BITS]> = (0..dimension).map(direction_numbers).collect();
        let index = index.max(1);
        let gray = (index - 1) ^ ((index - 1) >> 1);
        let state = directions
            .iter()
            .map(|v| {
                (0..BITS)
                    .filter(|&k| (gray >> k) & 1 == 1)
                    .fold(0u32, |acc, k| acc ^ v[k])
            })
            .collect();
        Ok(Self {
            dimension,
            directions,
            state,
            index,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Index of the next point to be emitted.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Writes the next point into `out` (length = dimension).
    pub fn next_into(&mut self, out: &mut [f64]) {
        let bit = (self.index - 1).trailing_ones() as usize;
        assert!(bit < BITS, "Sobol sequence exhausted at 2^32 points");
        for ((x, v), o) in self.state.iter_mut().zip(&self.directions).zip(out.iter_mut()) {
            *x ^= v[bit];
            *o = *x as f64 * SCALE;
        }
        self.index += 1;
    }

    /// The next `count` points as a `count × d` matrix.
    pub fn next_points(&mut self, count: usize) -> Matrix {
        let mut m = Matrix::zeros(count, self.dimension);
        for i in 0..count {
            self.next_into(m.row_mut(i));
        }
        m
    }
}

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[dim - 1];
    let s = s as usize;
    for k in 0..s {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for i in 1..s {
            if (a >> (s - 1 - i)) & 1 == 1 {
                x ^= v[k - i];
            }
        }
        v[k] = x;
    }
    v
}
