//! Four-directional traversal of a 2-D feature map (SS2D scan orders) and
//! the inverse merge.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::Arr;

/// Token visit order for one scan direction over an h x w grid.
/// 0: row-major, 1: column-major, 2/3: their reversals.
pub fn scan_order(h: usize, w: usize, dir: usize) -> Vec<usize> {
    assert!(dir < 4, "direction out of range");
    let mut order: Vec<usize> = match dir {
        0 | 2 => (0..h * w).collect(),
        _ => {
            let mut o = Vec::with_capacity(h * w);
            for j in 0..w {
                for i in 0..h {
                    o.push(i * w + j);
                }
            }
            o
        }
    };
    if dir >= 2 {
        order.reverse();
    }
    order
}

/// Expand a token order into an element index map over an (L, C) tensor,
/// usable with `Tensor::gather`. When `inverse` is set, the map places
/// sequence positions back at their grid tokens.
pub fn token_perm(order: &[usize], c: usize, inverse: bool) -> Rc<Vec<usize>> {
    let l = order.len();
    let mut idx = vec![0usize; l * c];
    if inverse {
        // out[token] = seq[pos] where order[pos] = token
        let mut pos_of = vec![0usize; l];
        for (pos, &tok) in order.iter().enumerate() {
            pos_of[tok] = pos;
        }
        for tok in 0..l {
            let p = pos_of[tok];
            for k in 0..c {
                idx[tok * c + k] = p * c + k;
            }
        }
    } else {
        for (pos, &tok) in order.iter().enumerate() {
            for k in 0..c {
                idx[pos * c + k] = tok * c + k;
            }
        }
    }
    Rc::new(idx)
}

/// Flatten a (C, H, W) map into four directional (H*W, C) sequences.
pub fn cross_scan(x: &Arr) -> Result<[Arr; 4]> {
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(Error::Contract(format!("cross_scan expects (C,H,W), got {shape:?}")));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if h < 1 || w < 1 {
        return Err(Error::Contract("cross_scan: H and W must be >= 1".into()));
    }
    let mut out: Vec<Arr> = Vec::with_capacity(4);
    for dir in 0..4 {
        let order = scan_order(h, w, dir);
        let mut seq = Arr::zeros(&[h * w, c]);
        for (pos, &tok) in order.iter().enumerate() {
            for k in 0..c {
                let v = x.data()[k * h * w + tok];
                seq.data_mut()[pos * c + k] = v;
            }
        }
        out.push(seq);
    }
    Ok([
        out.remove(0),
        out.remove(0),
        out.remove(0),
        out.remove(0),
    ])
}

/// Inverse-permute each directional sequence back to grid order and sum.
pub fn cross_merge(seqs: &[Arr; 4], h: usize, w: usize) -> Result<Arr> {
    let c = seqs[0].cols();
    for (dir, s) in seqs.iter().enumerate() {
        if s.rows() != h * w || s.cols() != c {
            return Err(Error::Contract(format!(
                "cross_merge: direction {dir} has shape {:?}, expected [{}, {c}]",
                s.shape(),
                h * w
            )));
        }
    }
    let mut out = Arr::zeros(&[c, h, w]);
    for (dir, s) in seqs.iter().enumerate() {
        let order = scan_order(h, w, dir);
        for (pos, &tok) in order.iter().enumerate() {
            for k in 0..c {
                out.data_mut()[k * h * w + tok] += s.data()[pos * c + k];
            }
        }
    }
    Ok(out)
}
