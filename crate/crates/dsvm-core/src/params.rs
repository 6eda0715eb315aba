//! Named parameter storage.
//!
//! Architectures register their parameters through a [`ParamSink`] so the
//! same definition serves three uses: allocation + initialization, shape
//! accounting (no allocation), and checkpoint naming.

use crate::rng::Rng;
use crate::tensor::{Arr, Graph, Tensor};

/// How a parameter is initialized.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    /// Gaussian with the given standard deviation.
    Normal(f64),
    /// Uniform in [lo, hi].
    Uniform(f64, f64),
    /// Real diagonal state-matrix log: a_log[d, n] = ln(n + 1).
    StateLog,
    /// Inverse-softplus of a log-uniform step size in [dt_min, dt_max].
    DtBias { dt_min: f64, dt_max: f64 },
    /// Bilinear-interpolation resize operator between two square grids,
    /// flattened row-major: shape (to*to, from*from).
    BilinearResize { from: usize, to: usize },
}

/// Receiver for parameter registrations.
pub trait ParamSink {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize;
}

/// Ordered, named parameter arrays.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    names: Vec<String>,
    arrs: Vec<Arr>,
}

impl ParamSet {
    pub fn len(&self) -> usize {
        self.arrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrs.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn get(&self, idx: usize) -> &Arr {
        &self.arrs[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Arr {
        &mut self.arrs[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn push(&mut self, name: String, arr: Arr) -> usize {
        self.names.push(name);
        self.arrs.push(arr);
        self.arrs.len() - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arr)> {
        self.names.iter().map(|s| s.as_str()).zip(self.arrs.iter())
    }

    pub fn arrays_mut(&mut self) -> &mut [Arr] {
        &mut self.arrs
    }

    /// Total number of scalar elements.
    pub fn element_count(&self) -> usize {
        self.arrs.iter().map(|a| a.len()).sum()
    }

    /// Register every array as a graph leaf, in order.
    pub fn bind(&self, g: &Graph) -> Bound {
        Bound {
            tensors: self.arrs.iter().map(|a| g.leaf(a.clone())).collect(),
        }
    }

    /// Deterministic checksum over names and values, used to verify shared
    /// initialization across ablation runs.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (name, arr) in self.iter() {
            mix(name.as_bytes());
            for v in arr.data() {
                mix(&v.to_le_bytes());
            }
        }
        h
    }
}

/// Parameters bound to a graph for one forward/backward pass.
pub struct Bound {
    tensors: Vec<Tensor>,
}

impl Bound {
    pub fn t(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// Sink that allocates and initializes parameters.
pub struct AllocSink<'a> {
    pub set: ParamSet,
    pub rng: &'a mut Rng,
}

impl<'a> AllocSink<'a> {
    pub fn new(rng: &'a mut Rng) -> Self {
        AllocSink { set: ParamSet::default(), rng }
    }
}

impl ParamSink for AllocSink<'_> {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let mut arr = Arr::zeros(shape);
        match init {
            Init::Zeros => {}
            Init::Ones => arr.data_mut().fill(1.0),
            Init::Normal(std) => self.rng.fill_normal(arr.data_mut(), std),
            Init::Uniform(lo, hi) => self.rng.fill_uniform(arr.data_mut(), lo, hi),
            Init::StateLog => {
                let n = *shape.last().expect("StateLog needs a trailing dim");
                for (i, v) in arr.data_mut().iter_mut().enumerate() {
                    *v = ((i % n + 1) as f64).ln();
                }
            }
            Init::DtBias { dt_min, dt_max } => {
                let (llo, lhi) = (dt_min.ln(), dt_max.ln());
                for v in arr.data_mut().iter_mut() {
                    let dt = self.rng.uniform_in(llo, lhi).exp();
                    // inverse softplus: ln(e^dt - 1)
                    *v = dt.exp_m1().ln();
                }
            }
            Init::BilinearResize { from, to } => {
                assert_eq!(shape, [to * to, from * from], "resize operator shape");
                let axis = |o: usize| {
                    let src = ((o as f64 + 0.5) * from as f64 / to as f64 - 0.5)
                        .max(0.0)
                        .min((from - 1) as f64);
                    let lo = src.floor() as usize;
                    (lo, (lo + 1).min(from - 1), src - lo as f64)
                };
                for oi in 0..to {
                    let (i0, i1, wi) = axis(oi);
                    for oj in 0..to {
                        let (j0, j1, wj) = axis(oj);
                        let row = (oi * to + oj) * from * from;
                        let d = arr.data_mut();
                        d[row + i0 * from + j0] += (1.0 - wi) * (1.0 - wj);
                        d[row + i0 * from + j1] += (1.0 - wi) * wj;
                        d[row + i1 * from + j0] += wi * (1.0 - wj);
                        d[row + i1 * from + j1] += wi * wj;
                    }
                }
            }
        }
        let idx = self.set.arrs.len();
        self.set.names.push(name);
        self.set.arrs.push(arr);
        idx
    }
}

/// Sink that records names and shapes without allocating data.
#[derive(Default)]
pub struct CountSink {
    pub entries: Vec<(String, Vec<usize>)>,
}

impl ParamSink for CountSink {
    fn add(&mut self, name: String, shape: &[usize], _init: Init) -> usize {
        self.entries.push((name, shape.to_vec()));
        self.entries.len() - 1
    }
}

impl CountSink {
    pub fn element_count(&self) -> usize {
        self.entries.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Total elements under a name prefix.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}
