//! Reverse-mode autodiff over [`Arr`] values.
//!
//! A [`Graph`] is a tape of nodes; each op records its forward value and a
//! backward closure that routes the output gradient to its parents. Tapes
//! are built per forward pass, consumed by [`Graph::backward`], and dropped.
//! Parameters live outside the tape and are bound as leaves each pass.

use std::cell::RefCell;
use std::rc::Rc;

use super::{matmul_into, Arr};

type BackFn = Box<dyn Fn(&Arr, &mut dyn FnMut(usize, Arr))>;

struct Node {
    value: Rc<Arr>,
    backward: Option<BackFn>,
}

#[derive(Default)]
struct GraphInner {
    nodes: Vec<Node>,
}

/// Tape of operations. Cheap to clone (shared handle).
#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

/// Handle to a node in a [`Graph`].
#[derive(Clone)]
pub struct Tensor {
    graph: Graph,
    id: usize,
    shape: Vec<usize>,
}

/// Gradients of a scalar loss with respect to every leaf that received one.
pub struct Gradients {
    grads: Vec<Option<Arr>>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&Arr> {
        self.grads.get(t.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, t: &Tensor) -> Option<Arr> {
        self.grads.get_mut(t.id).and_then(|g| g.take())
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&self, value: Arr, backward: Option<BackFn>) -> Tensor {
        let shape = value.shape().to_vec();
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node { value: Rc::new(value), backward });
        Tensor { graph: self.clone(), id, shape }
    }

    /// Insert a leaf (parameter or constant input).
    pub fn leaf(&self, value: Arr) -> Tensor {
        self.push(value, None)
    }

    /// Insert a node with a caller-supplied backward closure. The closure
    /// receives the output gradient and an `emit(parent_id, contribution)`
    /// sink; contributions are accumulated by the driver.
    pub fn custom(
        &self,
        value: Arr,
        backward: impl Fn(&Arr, &mut dyn FnMut(usize, Arr)) + 'static,
    ) -> Tensor {
        self.push(value, Some(Box::new(backward)))
    }

    pub fn node_count(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// Reverse sweep from a scalar loss. Interior gradients are freed as
    /// soon as they are consumed; leaf gradients are returned.
    pub fn backward(&self, loss: &Tensor) -> Gradients {
        assert_eq!(loss.value().len(), 1, "backward() requires a scalar loss");
        let inner = self.inner.borrow();
        let mut grads: Vec<Option<Arr>> = Vec::with_capacity(inner.nodes.len());
        grads.resize_with(inner.nodes.len(), || None);
        grads[loss.id] = Some(Arr::full(loss.value().shape(), 1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &inner.nodes[id].backward {
                Some(back) => {
                    let (before, after) = grads.split_at_mut(id);
                    let _ = after;
                    back(&g, &mut |pid, contrib| {
                        debug_assert!(pid < id, "backward emitted to non-parent {pid} from {id}");
                        match &mut before[pid] {
                            Some(acc) => acc.axpy(1.0, &contrib),
                            slot @ None => *slot = Some(contrib),
                        }
                    });
                }
                None => grads[id] = Some(g), // leaf: keep
            }
        }
        Gradients { grads }
    }
}

impl Tensor {
    pub fn value(&self) -> Rc<Arr> {
        self.graph.inner.borrow().nodes[self.id].value.clone()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        *self.shape.first().unwrap_or(&1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() <= 1 {
            if self.shape.is_empty() { 1 } else { self.shape[0] }
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// Scalar value of a 1-element tensor.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    /// Cut the tape: same value, no gradient flow.
    pub fn detach(&self) -> Tensor {
        self.graph.leaf(self.value().as_ref().clone())
    }

    /// Reinterpret shape (same buffer size); gradient reshapes back.
    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.value().len());
        let v = self.value().as_ref().clone().reshaped(shape);
        let id = self.id;
        let old_shape = self.shape.clone();
        self.graph.custom(v, move |g, emit| {
            emit(id, g.clone().reshaped(&old_shape));
        })
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "add shape mismatch");
        let v = self.value().add(&other.value());
        let (a, b) = (self.id, other.id);
        self.graph.custom(v, move |g, emit| {
            emit(a, g.clone());
            emit(b, g.clone());
        })
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "sub shape mismatch");
        let v = self.value().sub(&other.value());
        let (a, b) = (self.id, other.id);
        self.graph.custom(v, move |g, emit| {
            emit(a, g.clone());
            emit(b, g.scale(-1.0));
        })
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "mul shape mismatch");
        let av = self.value();
        let bv = other.value();
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let v = Arr::from_vec(av.shape(), data);
        let (a, b) = (self.id, other.id);
        self.graph.custom(v, move |g, emit| {
            let mut ga = g.clone();
            for (gv, bvv) in ga.data_mut().iter_mut().zip(bv.data()) {
                *gv *= bvv;
            }
            emit(a, ga);
            let mut gb = g.clone();
            for (gv, avv) in gb.data_mut().iter_mut().zip(av.data()) {
                *gv *= avv;
            }
            emit(b, gb);
        })
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape, "div shape mismatch");
        let av = self.value();
        let bv = other.value();
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x / y).collect();
        let v = Arr::from_vec(av.shape(), data);
        let (a, b) = (self.id, other.id);
        self.graph.custom(v, move |g, emit| {
            let mut ga = g.clone();
            for (gv, bvv) in ga.data_mut().iter_mut().zip(bv.data()) {
                *gv /= bvv;
            }
            emit(a, ga);
            let mut gb = g.clone();
            for ((gv, avv), bvv) in gb.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                *gv *= -avv / (bvv * bvv);
            }
            emit(b, gb);
        })
    }

    pub fn scale(&self, s: f64) -> Tensor {
        let v = self.value().scale(s);
        let id = self.id;
        self.graph.custom(v, move |g, emit| emit(id, g.scale(s)))
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        let v = self.value().map(|x| x + s);
        let id = self.id;
        self.graph.custom(v, move |g, emit| emit(id, g.clone()))
    }

    pub fn exp(&self) -> Tensor {
        let v = self.value().map(f64::exp);
        let out = Rc::new(v);
        let id = self.id;
        let cap = out.clone();
        let t = self.graph.custom(out.as_ref().clone(), move |g, emit| {
            let mut ga = g.clone();
            for (gv, ov) in ga.data_mut().iter_mut().zip(cap.data()) {
                *gv *= ov;
            }
            emit(id, ga);
        });
        t
    }

    pub fn ln(&self) -> Tensor {
        let xv = self.value();
        let v = xv.map(f64::ln);
        let id = self.id;
        self.graph.custom(v, move |g, emit| {
            let mut ga = g.clone();
            for (gv, x) in ga.data_mut().iter_mut().zip(xv.data()) {
                *gv /= x;
            }
            emit(id, ga);
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        let v = self.value().map(sigmoid);
        let out = Rc::new(v);
        let id = self.id;
        let cap = out.clone();
        self.graph.custom(out.as_ref().clone(), move |g, emit| {
            let mut ga = g.clone();
            for (gv, s) in ga.data_mut().iter_mut().zip(cap.data()) {
                *gv *= s * (1.0 - s);
            }
            emit(id, ga);
        })
    }

    pub fn silu(&self) -> Tensor {
        let xv = self.value();
        let v = xv.map(|x| x * sigmoid(x));
        let id = self.id;
        self.graph.custom(v, move |g, emit| {
            let mut ga = g.clone();
            for (gv, &x) in ga.data_mut().iter_mut().zip(xv.data()) {
                let s = sigmoid(x);
                *gv *= s * (1.0 + x * (1.0 - s));
            }
            emit(id, ga);
        })
    }

    pub fn softplus(&self) -> Tensor {
        let xv = self.value();
        let v = xv.map(softplus);
        let id = self.id;
        self.graph.custom(v, move |g, emit| {
            let mut ga = g.clone();
            for (gv, &x) in ga.data_mut().iter_mut().zip(xv.data()) {
                *gv *= sigmoid(x);
            }
            emit(id, ga);
        })
    }

    pub fn square(&self) -> Tensor {
        let xv = self.value();
        let v = xv.map(|x| x * x);
        let id = self.id;
        self.graph.custom(v, move |g, emit| {
            let mut ga = g.clone();
            for (gv, &x) in ga.data_mut().iter_mut().zip(xv.data()) {
                *gv *= 2.0 * x;
            }
            emit(id, ga);
        })
    }

    /// Elementwise clamp; gradient passes only strictly inside (lo, hi).
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        let xv = self.value();
        let v = xv.map(|x| x.clamp(lo, hi));
        let id = self.id;
        self.graph.custom(v, move |g, emit| {
            let mut ga = g.clone();
            for (gv, &x) in ga.data_mut().iter_mut().zip(xv.data()) {
                if !(x > lo && x < hi) {
                    *gv = 0.0;
                }
            }
            emit(id, ga);
        })
    }

    pub fn sum_all(&self) -> Tensor {
        let v = Arr::scalar(self.value().sum());
        let id = self.id;
        let shape = self.shape.clone();
        self.graph.custom(v, move |g, emit| {
            emit(id, Arr::full(&shape, g.item()));
        })
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.value().len() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// 2-D matrix product: (m x k) @ (k x n).
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let av = self.value();
        let bv = other.value();
        let (m, k) = (av.rows(), av.cols());
        let (k2, n) = (bv.rows(), bv.cols());
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        matmul_into(av.data(), bv.data(), &mut out, m, k, n);
        let (a, b) = (self.id, other.id);
        self.graph.custom(Arr::from_vec(&[m, n], out), move |g, emit| {
            // gA = g @ B^T : (m x n)(n x k) with B^T rows = B cols
            let mut ga = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    let brow = &bv.data()[p * n..(p + 1) * n];
                    let grow = &g.data()[i * n..(i + 1) * n];
                    let mut acc = 0.0;
                    for (gvv, bvv) in grow.iter().zip(brow) {
                        acc += gvv * bvv;
                    }
                    ga[i * k + p] = acc;
                }
            }
            emit(a, Arr::from_vec(&[m, k], ga));
            // gB = A^T @ g : accumulate row-wise
            let mut gb = vec![0.0; k * n];
            for i in 0..m {
                let grow = &g.data()[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = av.data()[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let gbrow = &mut gb[p * n..(p + 1) * n];
                    for (gbv, gvv) in gbrow.iter_mut().zip(grow) {
                        *gbv += aip * gvv;
                    }
                }
            }
            emit(b, Arr::from_vec(&[k, n], gb));
        })
    }

    /// y = x @ w^T + b with x (m x k), w (o x k), b (o).
    pub fn linear(&self, w: &Tensor, b: Option<&Tensor>) -> Tensor {
        let xv = self.value();
        let wv = w.value();
        let (m, k) = (xv.rows(), xv.cols());
        let (o, k2) = (wv.rows(), wv.cols());
        assert_eq!(k, k2, "linear: input cols {k} vs weight cols {k2}");
        let bv = b.map(|t| t.value());
        if let Some(ref bvv) = bv {
            assert_eq!(bvv.len(), o, "linear: bias len");
        }
        // transpose the weight once so the hot loop runs over contiguous
        // rows with no reduction chain
        let mut wt = vec![0.0; k * o];
        for j in 0..o {
            for p in 0..k {
                wt[p * o + j] = wv.data()[j * k + p];
            }
        }
        let mut out = vec![0.0; m * o];
        for i in 0..m {
            let xrow = &xv.data()[i * k..(i + 1) * k];
            let orow = &mut out[i * o..(i + 1) * o];
            if let Some(bb) = bv.as_ref() {
                orow.copy_from_slice(bb.data());
            }
            for (p, &xip) in xrow.iter().enumerate() {
                if xip == 0.0 {
                    continue;
                }
                let wrow = &wt[p * o..(p + 1) * o];
                for (ov, wvv) in orow.iter_mut().zip(wrow) {
                    *ov += xip * wvv;
                }
            }
        }
        let xid = self.id;
        let wid = w.id;
        let bid = b.map(|t| t.id);
        self.graph.custom(Arr::from_vec(&[m, o], out), move |g, emit| {
            // gx[i,:] = sum_j g[i,j] * w[j,:]
            let mut gx = vec![0.0; m * k];
            for i in 0..m {
                let grow = &g.data()[i * o..(i + 1) * o];
                let gxrow = &mut gx[i * k..(i + 1) * k];
                for (j, &gij) in grow.iter().enumerate() {
                    if gij == 0.0 {
                        continue;
                    }
                    let wrow = &wv.data()[j * k..(j + 1) * k];
                    for (gxv, wvv) in gxrow.iter_mut().zip(wrow) {
                        *gxv += gij * wvv;
                    }
                }
            }
            emit(xid, Arr::from_vec(&[m, k], gx));
            // gw[j,:] = sum_i g[i,j] * x[i,:]
            let mut gw = vec![0.0; o * k];
            for i in 0..m {
                let grow = &g.data()[i * o..(i + 1) * o];
                let xrow = &xv.data()[i * k..(i + 1) * k];
                for (j, &gij) in grow.iter().enumerate() {
                    if gij == 0.0 {
                        continue;
                    }
                    let gwrow = &mut gw[j * k..(j + 1) * k];
                    for (gwv, xvv) in gwrow.iter_mut().zip(xrow) {
                        *gwv += gij * xvv;
                    }
                }
            }
            emit(wid, Arr::from_vec(&[o, k], gw));
            if let Some(bid) = bid {
                let mut gb = vec![0.0; o];
                for i in 0..m {
                    let grow = &g.data()[i * o..(i + 1) * o];
                    for (gbv, gvv) in gb.iter_mut().zip(grow) {
                        *gbv += gvv;
                    }
                }
                emit(bid, Arr::from_vec(&[o], gb));
            }
        })
    }

    /// Row-wise layer norm over the last dimension with affine params.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Tensor {
        let xv = self.value();
        let gv = gamma.value();
        let bv = beta.value();
        let c = xv.cols();
        let r = xv.len() / c;
        assert_eq!(gv.len(), c, "layer_norm gamma len");
        assert_eq!(bv.len(), c, "layer_norm beta len");
        let mut out = vec![0.0; r * c];
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        for i in 0..r {
            let row = &xv.data()[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let xh = (row[j] - mean) * is;
                xhat[i * c + j] = xh;
                out[i * c + j] = xh * gv.data()[j] + bv.data()[j];
            }
        }
        let xhat = Rc::new(xhat);
        let inv_std = Rc::new(inv_std);
        let xid = self.id;
        let gid = gamma.id;
        let bid = beta.id;
        let shape = xv.shape().to_vec();
        self.graph.custom(Arr::from_vec(&shape, out), move |g, emit| {
            let mut gx = vec![0.0; r * c];
            let mut ggamma = vec![0.0; c];
            let mut gbeta = vec![0.0; c];
            for i in 0..r {
                let grow = &g.data()[i * c..(i + 1) * c];
                let xh = &xhat[i * c..(i + 1) * c];
                // dy = g * gamma; gx = (dy - mean(dy) - xh * mean(dy*xh)) * inv_std
                let mut mean_dy = 0.0;
                let mut mean_dy_xh = 0.0;
                for j in 0..c {
                    let dy = grow[j] * gv.data()[j];
                    mean_dy += dy;
                    mean_dy_xh += dy * xh[j];
                    ggamma[j] += grow[j] * xh[j];
                    gbeta[j] += grow[j];
                }
                mean_dy /= c as f64;
                mean_dy_xh /= c as f64;
                let is = inv_std[i];
                for j in 0..c {
                    let dy = grow[j] * gv.data()[j];
                    gx[i * c + j] = (dy - mean_dy - xh[j] * mean_dy_xh) * is;
                }
            }
            emit(xid, Arr::from_vec(&shape, gx));
            emit(gid, Arr::from_vec(&[c], ggamma));
            emit(bid, Arr::from_vec(&[c], gbeta));
        })
    }

    /// out[k] = x.flat[idx[k]]; the index map must refer to valid elements.
    /// Backward scatter-adds, so non-bijective maps are handled correctly.
    pub fn gather(&self, out_shape: &[usize], idx: Rc<Vec<usize>>) -> Tensor {
        let xv = self.value();
        let n: usize = out_shape.iter().product();
        assert_eq!(n, idx.len(), "gather: index map length");
        let mut out = vec![0.0; n];
        for (o, &src) in out.iter_mut().zip(idx.iter()) {
            *o = xv.data()[src];
        }
        let xid = self.id;
        let in_shape = xv.shape().to_vec();
        self.graph.custom(Arr::from_vec(out_shape, out), move |g, emit| {
            let mut gx = Arr::zeros(&in_shape);
            for (gv, &src) in g.data().iter().zip(idx.iter()) {
                gx.data_mut()[src] += gv;
            }
            emit(xid, gx);
        })
    }

    /// Columns [start, start+len) of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor {
        let xv = self.value();
        let (r, c) = (xv.rows(), xv.cols());
        assert!(start + len <= c, "slice_cols out of range");
        let mut out = vec![0.0; r * len];
        for i in 0..r {
            out[i * len..(i + 1) * len]
                .copy_from_slice(&xv.data()[i * c + start..i * c + start + len]);
        }
        let xid = self.id;
        self.graph.custom(Arr::from_vec(&[r, len], out), move |g, emit| {
            let mut gx = vec![0.0; r * c];
            for i in 0..r {
                gx[i * c + start..i * c + start + len]
                    .copy_from_slice(&g.data()[i * len..(i + 1) * len]);
            }
            emit(xid, Arr::from_vec(&[r, c], gx));
        })
    }

    /// Horizontal concatenation of two 2-D tensors with equal row counts.
    pub fn concat_cols(&self, other: &Tensor) -> Tensor {
        let av = self.value();
        let bv = other.value();
        let r = av.rows();
        assert_eq!(r, bv.rows(), "concat_cols row mismatch");
        let (ca, cb) = (av.cols(), bv.cols());
        let mut out = vec![0.0; r * (ca + cb)];
        for i in 0..r {
            out[i * (ca + cb)..i * (ca + cb) + ca]
                .copy_from_slice(&av.data()[i * ca..(i + 1) * ca]);
            out[i * (ca + cb) + ca..(i + 1) * (ca + cb)]
                .copy_from_slice(&bv.data()[i * cb..(i + 1) * cb]);
        }
        let (aid, bid) = (self.id, other.id);
        self.graph.custom(Arr::from_vec(&[r, ca + cb], out), move |g, emit| {
            let mut ga = vec![0.0; r * ca];
            let mut gb = vec![0.0; r * cb];
            for i in 0..r {
                ga[i * ca..(i + 1) * ca]
                    .copy_from_slice(&g.data()[i * (ca + cb)..i * (ca + cb) + ca]);
                gb[i * cb..(i + 1) * cb]
                    .copy_from_slice(&g.data()[i * (ca + cb) + ca..(i + 1) * (ca + cb)]);
            }
            emit(aid, Arr::from_vec(&[r, ca], ga));
            emit(bid, Arr::from_vec(&[r, cb], gb));
        })
    }

    /// Sum over rows of a 2-D tensor, yielding a row vector (cols).
    pub fn col_sums(&self) -> Tensor {
        let xv = self.value();
        let (r, c) = (xv.rows(), xv.cols());
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (ov, xvv) in out.iter_mut().zip(&xv.data()[i * c..(i + 1) * c]) {
                *ov += xvv;
            }
        }
        let xid = self.id;
        self.graph.custom(Arr::from_vec(&[c], out), move |g, emit| {
            let mut gx = vec![0.0; r * c];
            for i in 0..r {
                gx[i * c..(i + 1) * c].copy_from_slice(g.data());
            }
            emit(xid, Arr::from_vec(&[r, c], gx));
        })
    }

    /// Row-wise log-softmax of a 2-D tensor.
    pub fn log_softmax_rows(&self) -> Tensor {
        let xv = self.value();
        let (r, c) = (xv.rows(), xv.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xv.data()[i * c..(i + 1) * c];
            let mx = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = mx + row.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln();
            for j in 0..c {
                out[i * c + j] = row[j] - lse;
            }
        }
        let out_rc = Rc::new(out);
        let cap = out_rc.clone();
        let xid = self.id;
        self.graph.custom(
            Arr::from_vec(&[r, c], out_rc.as_ref().clone()),
            move |g, emit| {
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    let grow = &g.data()[i * c..(i + 1) * c];
                    let orow = &cap[i * c..(i + 1) * c];
                    let gsum: f64 = grow.iter().sum();
                    for j in 0..c {
                        gx[i * c + j] = grow[j] - orow[j].exp() * gsum;
                    }
                }
                emit(xid, Arr::from_vec(&[r, c], gx));
            },
        )
    }

    /// Mean negative log-likelihood: -(1/r) * sum_i logp[i, targets[i]].
    pub fn nll_mean(&self, targets: Rc<Vec<usize>>) -> Tensor {
        let xv = self.value();
        let (r, c) = (xv.rows(), xv.cols());
        assert_eq!(r, targets.len(), "nll_mean target count");
        let mut acc = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            assert!(t < c, "nll_mean: class index {t} out of range {c}");
            acc -= xv.data()[i * c + t];
        }
        let xid = self.id;
        self.graph.custom(Arr::scalar(acc / r as f64), move |g, emit| {
            let gs = g.item() / r as f64;
            let mut gx = vec![0.0; r * c];
            for (i, &t) in targets.iter().enumerate() {
                gx[i * c + t] = -gs;
            }
            emit(xid, Arr::from_vec(&[r, c], gx));
        })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
