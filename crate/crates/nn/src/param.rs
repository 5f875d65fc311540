use crate::matrix::{Matrix, Real};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::atomic::{AtomicU32, Ordering};

static NEXT_STORE: AtomicU32 = AtomicU32::new(1);

/// Positional handle to a parameter. Valid for the store that issued it and
/// for any store with the same layout (clones, targets).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub(crate) store: u32,
    pub(crate) index: u32,
}

impl ParamId {
    pub fn index(&self) -> usize {
        self.index as usize
    }
}

/// How a parameter was initialized. Kept for checkpoint readers and for
/// re-initialization after structural edits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Zeros,
    /// Uniform in ±1/sqrt(fan_in).
    FanInUniform,
    /// Orthogonal columns (recurrent weights).
    Orthogonal,
    Constant(i64),
}

impl Init {
    pub fn tag(&self) -> String {
        match self {
            Init::Zeros => "zeros".into(),
            Init::FanInUniform => "fan_in_uniform".into(),
            Init::Orthogonal => "orthogonal".into(),
            Init::Constant(v) => format!("constant:{v}"),
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "zeros" => Some(Init::Zeros),
            "fan_in_uniform" => Some(Init::FanInUniform),
            "orthogonal" => Some(Init::Orthogonal),
            t => t.strip_prefix("constant:")?.parse().ok().map(Init::Constant),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub init: Init,
}

/// An owning collection of named parameters. Each network owns one store;
/// a computation graph may read from several.
#[derive(Debug)]
pub struct ParamStore {
    uid: u32,
    params: Vec<Param>,
}

impl Clone for ParamStore {
    /// Clones get a fresh identity so their gradients never alias the source.
    fn clone(&self) -> Self {
        Self {
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
        }
    }

    pub(crate) fn uid(&self) -> u32 {
        self.uid
    }

    /// Registers a parameter initialized from `init`. Names must be unique.
    pub fn add<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let value = initialize(rows, cols, init, rng);
        self.insert(name, value, init)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix, init: Init) -> ParamId {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let (r, c) = value.shape();
        self.params.push(Param {
            name,
            value,
            grad: Matrix::zeros(r, c),
            init,
        });
        ParamId {
            store: self.uid,
            index: (self.params.len() - 1) as u32,
        }
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(|i| ParamId {
            store: self.uid,
            index: i as u32,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(move |i| ParamId {
            store: self.uid,
            index: i as u32,
        })
    }

    fn check(&self, id: ParamId) -> usize {
        assert!((id.index as usize) < self.params.len(), "parameter id out of range");
        id.index as usize
    }

    /// The same position, stamped with this store's identity.
    pub(crate) fn local(&self, id: ParamId) -> ParamId {
        ParamId {
            store: self.uid,
            index: id.index,
        }
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[self.check(id)]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        let i = self.check(id);
        &mut self.params[i]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.get(id).value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.get_mut(id).value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.get(id).grad
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> Real {
        self.params
            .iter()
            .map(|p| p.grad.data().iter().map(|g| g * g).sum::<Real>())
            .sum::<Real>()
            .sqrt()
    }

    /// Rescales all gradients so their joint L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: Real) -> Real {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for p in &mut self.params {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }

    /// Copies values from a store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        assert!(self.same_layout(other), "parameter layout mismatch");
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.value.data_mut().copy_from_slice(b.value.data());
        }
    }
}

pub(crate) fn initialize<R: Rng + ?Sized>(rows: usize, cols: usize, init: Init, rng: &mut R) -> Matrix {
    match init {
        Init::Zeros => Matrix::zeros(rows, cols),
        Init::Constant(v) => Matrix::filled(rows, cols, v as Real),
        Init::FanInUniform => {
            let bound = 1.0 / (rows.max(1) as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng.gen_range(-bound..=bound) as Real)
                .collect();
            Matrix::from_vec(rows, cols, data)
        }
        Init::Orthogonal => orthogonal(rows, cols, rng),
    }
}

/// Gram-Schmidt on a Gaussian matrix. Orthonormalizes whichever of rows or
/// columns is the smaller set.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let (n, dim) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for u in &vecs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        vecs.push(v);
    }
    let mut m = Matrix::zeros(rows, cols);
    for (k, v) in vecs.iter().enumerate() {
        for (e, &x) in v.iter().enumerate() {
            if rows >= cols {
                m.set(e, k, x as Real);
            } else {
                m.set(k, e, x as Real);
            }
        }
    }
    m
}
