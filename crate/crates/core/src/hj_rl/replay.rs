use ndarray::Array2;
use rand::Rng;

/// Ring buffer of network-ready transitions `(s, c, a, ℓ̃, s′)`.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    s_dim: usize,
    c_dim: usize,
    s: Vec<f32>,
    c: Vec<f32>,
    a: Vec<f32>,
    margin: Vec<f32>,
    s_next: Vec<f32>,
    len: usize,
    head: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayBatch {
    pub s: Array2<f32>,
    pub c: Array2<f32>,
    pub a: Array2<f32>,
    pub margin: Vec<f32>,
    pub s_next: Array2<f32>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, s_dim: usize, c_dim: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            s_dim,
            c_dim,
            s: vec![0.0; capacity * s_dim],
            c: vec![0.0; capacity * c_dim],
            a: vec![0.0; capacity],
            margin: vec![0.0; capacity],
            s_next: vec![0.0; capacity * s_dim],
            len: 0,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, s: &[f32], c: &[f32], a: f32, margin: f32, s_next: &[f32]) {
        debug_assert!(s.len() == self.s_dim && s_next.len() == self.s_dim && c.len() == self.c_dim);
        debug_assert!((-1.0..=1.0).contains(&a) && (-1.0..=1.0).contains(&margin));
        let h = self.head;
        self.s[h * self.s_dim..(h + 1) * self.s_dim].copy_from_slice(s);
        self.c[h * self.c_dim..(h + 1) * self.c_dim].copy_from_slice(c);
        self.s_next[h * self.s_dim..(h + 1) * self.s_dim].copy_from_slice(s_next);
        self.a[h] = a;
        self.margin[h] = margin;
        self.head = (h + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> ReplayBatch {
        assert!(self.len > 0, "sampling an empty replay buffer");
        let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..self.len)).collect();
        let rows = |src: &[f32], dim: usize| {
            let mut out = Array2::zeros((batch, dim));
            for (mut row, &k) in out.rows_mut().into_iter().zip(&idx) {
                row.as_slice_mut()
                    .expect("standard layout")
                    .copy_from_slice(&src[k * dim..(k + 1) * dim]);
            }
            out
        };
        ReplayBatch {
            s: rows(&self.s, self.s_dim),
            c: rows(&self.c, self.c_dim),
            a: rows(&self.a, 1),
            margin: idx.iter().map(|&k| self.margin[k]).collect(),
            s_next: rows(&self.s_next, self.s_dim),
        }
    }
}
