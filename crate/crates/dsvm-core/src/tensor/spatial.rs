//! Spatial ops over token-major feature tensors.
//!
//! Feature maps flow through the graph as (L, C) matrices with L = H*W in
//! row-major pixel order; these ops reinterpret the row index as (i, j).

use std::rc::Rc;

use super::{Arr, Tensor};

/// Per-axis interpolation table: output coordinate -> (lo, hi, weight of hi).
fn interp_axis(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            // align_corners = false convention
            let src = (o as f64 + 0.5) * scale - 0.5;
            let src = src.max(0.0).min((n_in - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

impl Tensor {
    /// Bilinear resize of an (h*w, C) tensor to (oh*ow, C).
    pub fn bilinear_resize(&self, h: usize, w: usize, oh: usize, ow: usize) -> Tensor {
        let xv = self.value();
        let c = xv.cols();
        assert_eq!(xv.rows(), h * w, "bilinear_resize: rows != h*w");
        let ti = Rc::new(interp_axis(h, oh));
        let tj = Rc::new(interp_axis(w, ow));
        let mut out = vec![0.0; oh * ow * c];
        for (oi, &(i0, i1, wi)) in ti.iter().enumerate() {
            for (oj, &(j0, j1, wj)) in tj.iter().enumerate() {
                let orow = &mut out[(oi * ow + oj) * c..(oi * ow + oj + 1) * c];
                let r00 = &xv.data()[(i0 * w + j0) * c..(i0 * w + j0 + 1) * c];
                let r01 = &xv.data()[(i0 * w + j1) * c..(i0 * w + j1 + 1) * c];
                let r10 = &xv.data()[(i1 * w + j0) * c..(i1 * w + j0 + 1) * c];
                let r11 = &xv.data()[(i1 * w + j1) * c..(i1 * w + j1 + 1) * c];
                let (w00, w01, w10, w11) = corner_weights(wi, wj);
                for k in 0..c {
                    orow[k] = w00 * r00[k] + w01 * r01[k] + w10 * r10[k] + w11 * r11[k];
                }
            }
        }
        let xid = self.id();
        let (ti_b, tj_b) = (ti, tj);
        self.graph().custom(Arr::from_vec(&[oh * ow, c], out), move |g, emit| {
            let mut gx = vec![0.0; h * w * c];
            for (oi, &(i0, i1, wi)) in ti_b.iter().enumerate() {
                for (oj, &(j0, j1, wj)) in tj_b.iter().enumerate() {
                    let grow = &g.data()[(oi * ow + oj) * c..(oi * ow + oj + 1) * c];
                    let (w00, w01, w10, w11) = corner_weights(wi, wj);
                    for k in 0..c {
                        let gv = grow[k];
                        gx[(i0 * w + j0) * c + k] += w00 * gv;
                        gx[(i0 * w + j1) * c + k] += w01 * gv;
                        gx[(i1 * w + j0) * c + k] += w10 * gv;
                        gx[(i1 * w + j1) * c + k] += w11 * gv;
                    }
                }
            }
            emit(xid, Arr::from_vec(&[h * w, c], gx));
        })
    }

    /// Depthwise 3x3 convolution with zero padding 1 over an (h*w, C) tensor.
    /// weight has shape (C, 3, 3), bias (C).
    pub fn conv_dw3x3(&self, h: usize, w: usize, weight: &Tensor, bias: &Tensor) -> Tensor {
        let xv = self.value();
        let wv = weight.value();
        let bv = bias.value();
        let c = xv.cols();
        assert_eq!(xv.rows(), h * w, "conv_dw3x3: rows != h*w");
        assert_eq!(wv.len(), c * 9, "conv_dw3x3: weight size");
        assert_eq!(bv.len(), c, "conv_dw3x3: bias size");
        // tap-major weight copy: contiguous channel rows in the hot loop
        let mut wt = vec![0.0; 9 * c];
        for k in 0..c {
            for tap in 0..9 {
                wt[tap * c + k] = wv.data()[k * 9 + tap];
            }
        }
        let mut out = vec![0.0; h * w * c];
        for i in 0..h {
            for j in 0..w {
                let orow = &mut out[(i * w + j) * c..(i * w + j + 1) * c];
                orow.copy_from_slice(bv.data());
                for di in 0..3usize {
                    let si = i as isize + di as isize - 1;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for dj in 0..3usize {
                        let sj = j as isize + dj as isize - 1;
                        if sj < 0 || sj >= w as isize {
                            continue;
                        }
                        let xrow =
                            &xv.data()[(si as usize * w + sj as usize) * c..][..c];
                        let tap = di * 3 + dj;
                        let wrow = &wt[tap * c..(tap + 1) * c];
                        for ((ov, xvv), wvv) in orow.iter_mut().zip(xrow).zip(wrow) {
                            *ov += wvv * xvv;
                        }
                    }
                }
            }
        }
        let xid = self.id();
        let wid = weight.id();
        let bid = bias.id();
        self.graph().custom(Arr::from_vec(&[h * w, c], out), move |g, emit| {
            let mut wt = vec![0.0; 9 * c];
            for k in 0..c {
                for tap in 0..9 {
                    wt[tap * c + k] = wv.data()[k * 9 + tap];
                }
            }
            let mut gx = vec![0.0; h * w * c];
            let mut gwt = vec![0.0; 9 * c];
            let mut gb = vec![0.0; c];
            for i in 0..h {
                for j in 0..w {
                    let grow = &g.data()[(i * w + j) * c..(i * w + j + 1) * c];
                    for (gbv, gvv) in gb.iter_mut().zip(grow) {
                        *gbv += gvv;
                    }
                    for di in 0..3usize {
                        let si = i as isize + di as isize - 1;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        for dj in 0..3usize {
                            let sj = j as isize + dj as isize - 1;
                            if sj < 0 || sj >= w as isize {
                                continue;
                            }
                            let src = (si as usize * w + sj as usize) * c;
                            let tap = di * 3 + dj;
                            let xrow = &xv.data()[src..src + c];
                            let gxrow = &mut gx[src..src + c];
                            let wrow = &wt[tap * c..(tap + 1) * c];
                            let gwrow = &mut gwt[tap * c..(tap + 1) * c];
                            for k in 0..c {
                                gxrow[k] += wrow[k] * grow[k];
                                gwrow[k] += xrow[k] * grow[k];
                            }
                        }
                    }
                }
            }
            let mut gw = vec![0.0; c * 9];
            for k in 0..c {
                for tap in 0..9 {
                    gw[k * 9 + tap] = gwt[tap * c + k];
                }
            }
            emit(xid, Arr::from_vec(&[h * w, c], gx));
            emit(wid, Arr::from_vec(&[c, 3, 3], gw));
            emit(bid, Arr::from_vec(&[c], gb));
        })
    }
}

fn corner_weights(wi: f64, wj: f64) -> (f64, f64, f64, f64) {
    (
        (1.0 - wi) * (1.0 - wj),
        (1.0 - wi) * wj,
        wi * (1.0 - wj),
        wi * wj,
    )
}

/// Element index maps for pixel rearrangements, shared by forward code and
/// the parameter-free spec-level helpers.
pub mod rearrange {
    /// space_to_depth: (h*w, C) -> (h/f * w/f, C*f*f), channel order (p1, p2, c).
    pub fn space_to_depth_indices(h: usize, w: usize, c: usize, f: usize) -> Vec<usize> {
        assert!(h % f == 0 && w % f == 0);
        let (oh, ow) = (h / f, w / f);
        let mut idx = Vec::with_capacity(h * w * c);
        for oi in 0..oh {
            for oj in 0..ow {
                for p1 in 0..f {
                    for p2 in 0..f {
                        let src_pix = (oi * f + p1) * w + (oj * f + p2);
                        for k in 0..c {
                            idx.push(src_pix * c + k);
                        }
                    }
                }
            }
        }
        let _ = ow;
        idx
    }

    /// depth_to_space: (h*w, C*f*f) -> (h*f * w*f, C), channel order (p1, p2, c).
    pub fn depth_to_space_indices(h: usize, w: usize, c_out: usize, f: usize) -> Vec<usize> {
        let c_in = c_out * f * f;
        let (oh, ow) = (h * f, w * f);
        let mut idx = Vec::with_capacity(oh * ow * c_out);
        for oi in 0..oh {
            for oj in 0..ow {
                let (si, p1) = (oi / f, oi % f);
                let (sj, p2) = (oj / f, oj % f);
                let src_pix = si * w + sj;
                for k in 0..c_out {
                    idx.push(src_pix * c_in + (p1 * f + p2) * c_out + k);
                }
            }
        }
        idx
    }
}
