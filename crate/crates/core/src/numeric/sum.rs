//! Compensated (Neumaier) summation. Every reduction in the crate goes
//! through these helpers.

#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = CompensatedSum::new();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

/// Dot product weighted by a diagonal mass: `sum w_i a_i b_i`.
pub fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for ((wi, x), y) in w.iter().zip(a).zip(b) {
        acc.add(wi * x * y);
    }
    acc.value()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
