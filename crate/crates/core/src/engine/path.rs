/// A path sampled at increasing times, positions stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    dim: usize,
    times: Vec<f64>,
    coords: Vec<f64>,
}

impl Path {
    pub fn new(dim: usize) -> Self {
        Path { dim, times: Vec::new(), coords: Vec::new() }
    }

    pub fn with_capacity(dim: usize, points: usize) -> Self {
        Path { dim, times: Vec::with_capacity(points), coords: Vec::with_capacity(points * dim) }
    }

    pub fn push(&mut self, t: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert!(self.times.last().map_or(true, |&last| t >= last));
        self.times.push(t);
        self.coords.extend_from_slice(x);
    }

    pub fn clear(&mut self) {
        self.times.clear();
        self.coords.clear();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Final position; panics on an empty path.
    pub fn end_point(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times.iter().copied().zip(self.coords.chunks_exact(self.dim))
    }
}
