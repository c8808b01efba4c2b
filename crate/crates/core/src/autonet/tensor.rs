use crate::error::{Error, Result};
use crate::grid::Field;

/// Batched activations `[n, c, h, w]`; dense layers use `h = w = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::shape(format!("{} values for tensor [{n}, {c}, {h}, {w}]", data.len())));
        }
        Ok(Tensor { n, c, h, w, data })
    }

    /// Stacks equally shaped fields into a batch.
    pub fn from_fields<'a>(fields: impl IntoIterator<Item = &'a Field>) -> Result<Self> {
        let mut it = fields.into_iter().peekable();
        let (c, h, w) = it.peek().ok_or_else(|| Error::shape("empty batch"))?.shape();
        let mut data = Vec::new();
        let mut n = 0;
        for f in it {
            if f.shape() != (c, h, w) {
                return Err(Error::shape("batch fields differ in shape"));
            }
            data.extend_from_slice(f.data());
            n += 1;
        }
        Ok(Tensor { n, c, h, w, data })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let l = self.sample_len();
        &mut self.data[i * l..(i + 1) * l]
    }

    pub fn to_field(&self, i: usize) -> Field {
        Field::from_vec(self.c, self.h, self.w, self.sample(i).to_vec()).expect("tensor sample shape")
    }

    pub fn fields(&self) -> Vec<Field> {
        (0..self.n).map(|i| self.to_field(i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}
