//! Segmentation evaluation: confusion-count metrics (IoU, DSC, accuracy,
//! specificity, sensitivity), the 95th-percentile Hausdorff boundary
//! distance, per-class reports for multi-class maps, and dataset
//! aggregation with CSV/JSON serialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// Exact per-pixel tallies of two binary masks.
pub fn confusion_counts(pred: &[u8], gt: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != gt.len() {
        return Err(Error::Contract(format!(
            "confusion_counts: size mismatch {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.iter().zip(gt) {
        if p > 1 || g > 1 {
            return Err(Error::Contract("confusion_counts: masks must be binary".into()));
        }
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub miou: f64,
    pub dsc: f64,
    pub acc: f64,
    pub spe: f64,
    pub sen: f64,
}

/// Ratio metrics from confusion counts. Zero denominators resolve by the
/// empty-set convention: a set absent from both masks scores 1, absent from
/// exactly one scores 0.
pub fn segmentation_metrics(c: &ConfusionCounts) -> SegScores {
    let ratio = |num: u64, den: u64, empty_ok: bool| -> f64 {
        if den == 0 {
            if empty_ok { 1.0 } else { 0.0 }
        } else {
            num as f64 / den as f64
        }
    };
    let miou = ratio(c.tp, c.tp + c.fp + c.fn_, true);
    let dsc = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, true);
    let acc = ratio(c.tp + c.tn, c.total(), true);
    // gt foreground empty: perfect only if the prediction is empty too
    let sen = if c.tp + c.fn_ == 0 {
        if c.fp == 0 { 1.0 } else { 0.0 }
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    // gt background empty: perfect only if the prediction has no background
    let spe = if c.tn + c.fp == 0 {
        if c.fn_ == 0 { 1.0 } else { 0.0 }
    } else {
        c.tn as f64 / (c.tn + c.fp) as f64
    };
    SegScores { miou, dsc, acc, spe, sen }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hd95Mode {
    /// 95th percentile of the combined multiset of both directed distance
    /// sets (the common medical-imaging convention).
    CombinedMultiset,
    /// Max of the two directed 95th percentiles.
    MaxDirected,
}

/// A foreground pixel is boundary if any 4-neighbor is background or it
/// touches the image edge.
pub fn boundary_pixels(mask: &[u8], h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if mask[i * w + j] == 0 {
                continue;
            }
            let edge = i == 0 || j == 0 || i == h - 1 || j == w - 1;
            let bg_neighbor = !edge
                && (mask[(i - 1) * w + j] == 0
                    || mask[(i + 1) * w + j] == 0
                    || mask[i * w + j - 1] == 0
                    || mask[i * w + j + 1] == 0);
            if edge || bg_neighbor {
                out.push((i, j));
            }
        }
    }
    out
}

/// 1-D squared-distance transform (lower envelope of parabolas) over samples
/// at positions i * spacing.
fn dt_1d(f: &[f64], spacing: f64, out: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let pos = |i: usize| i as f64 * spacing;
    for q in 1..n {
        if f[q] == f64::INFINITY {
            continue;
        }
        loop {
            let p = v[k];
            let denom = 2.0 * pos(q) - 2.0 * pos(p);
            let s = if f[p] == f64::INFINITY {
                // previous parabola infinitely high: new one wins everywhere
                f64::NEG_INFINITY
            } else {
                ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / denom
            };
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < pos(q) {
            k += 1;
        }
        let p = v[k];
        out[q] = if f[p] == f64::INFINITY {
            f64::INFINITY
        } else {
            let d = pos(q) - pos(p);
            d * d + f[p]
        };
    }
}

/// Exact squared Euclidean distance to the nearest seed, with per-axis
/// spacing (row spacing, column spacing).
fn distance_transform(seeds: &[(usize, usize)], h: usize, w: usize, spacing: (f64, f64)) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; h * w];
    for &(i, j) in seeds {
        d[i * w + j] = 0.0;
    }
    let mut row_buf = vec![0.0f64; w];
    for i in 0..h {
        dt_1d(&d[i * w..(i + 1) * w].to_vec(), spacing.1, &mut row_buf);
        d[i * w..(i + 1) * w].copy_from_slice(&row_buf);
    }
    let mut col_in = vec![0.0f64; h];
    let mut col_out = vec![0.0f64; h];
    for j in 0..w {
        for i in 0..h {
            col_in[i] = d[i * w + j];
        }
        dt_1d(&col_in, spacing.0, &mut col_out);
        for i in 0..h {
            d[i * w + j] = col_out[i];
        }
    }
    d
}

/// Linear-interpolation percentile of an unsorted sample (q in [0, 1]).
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 < values.len() {
        values[lo] * (1.0 - frac) + values[lo + 1] * frac
    } else {
        values[lo]
    }
}

/// 95th-percentile boundary-to-boundary distance between two binary masks.
/// Returns None when either mask has no foreground (undefined).
pub fn hd95(
    pred: &[u8],
    gt: &[u8],
    h: usize,
    w: usize,
    spacing: (f64, f64),
    mode: Hd95Mode,
) -> Option<f64> {
    let pb = boundary_pixels(pred, h, w);
    let gb = boundary_pixels(gt, h, w);
    if pb.is_empty() || gb.is_empty() {
        return None;
    }
    let dt_g = distance_transform(&gb, h, w, spacing);
    let dt_p = distance_transform(&pb, h, w, spacing);
    let pred_to_gt: Vec<f64> = pb.iter().map(|&(i, j)| dt_g[i * w + j].sqrt()).collect();
    let gt_to_pred: Vec<f64> = gb.iter().map(|&(i, j)| dt_p[i * w + j].sqrt()).collect();
    Some(match mode {
        Hd95Mode::CombinedMultiset => {
            let mut all = pred_to_gt;
            all.extend(gt_to_pred);
            percentile(&mut all, 0.95)
        }
        Hd95Mode::MaxDirected => {
            let mut a = pred_to_gt;
            let mut b = gt_to_pred;
            percentile(&mut a, 0.95).max(percentile(&mut b, 0.95))
        }
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerClass {
    pub class: usize,
    pub dsc: f64,
    pub hd95: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub miou: f64,
    pub dsc: f64,
    pub acc: f64,
    pub spe: f64,
    pub sen: f64,
    pub hd95: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<Vec<PerClass>>,
}

/// Binary per-image report including HD95.
pub fn binary_report(pred: &[u8], gt: &[u8], h: usize, w: usize) -> Result<MetricReport> {
    let c = confusion_counts(pred, gt)?;
    let s = segmentation_metrics(&c);
    Ok(MetricReport {
        miou: s.miou,
        dsc: s.dsc,
        acc: s.acc,
        spe: s.spe,
        sen: s.sen,
        hd95: hd95(pred, gt, h, w, (1.0, 1.0), Hd95Mode::CombinedMultiset),
        per_class: None,
    })
}

/// Multi-class report: one-vs-rest DSC and HD95 per foreground class, with
/// aggregates averaged over foreground classes (undefined HD95 skipped).
pub fn multiclass_report(pred: &[u8], gt: &[u8], h: usize, w: usize, k: usize) -> Result<MetricReport> {
    if pred.len() != h * w || gt.len() != h * w {
        return Err(Error::Contract("multiclass_report: size mismatch".into()));
    }
    if k < 2 {
        return Err(Error::Contract("multiclass_report: K must be >= 2".into()));
    }
    if let Some(&bad) = pred.iter().chain(gt).find(|&&v| v as usize >= k) {
        return Err(Error::Contract(format!(
            "multiclass_report: class value {bad} out of range for K = {k}"
        )));
    }
    let mut per_class = Vec::with_capacity(k - 1);
    let mut sums = SegScores { miou: 0.0, dsc: 0.0, acc: 0.0, spe: 0.0, sen: 0.0 };
    let mut hd_sum = 0.0;
    let mut hd_n = 0usize;
    for class in 1..k {
        let pc: Vec<u8> = pred.iter().map(|&v| (v as usize == class) as u8).collect();
        let gc: Vec<u8> = gt.iter().map(|&v| (v as usize == class) as u8).collect();
        let c = confusion_counts(&pc, &gc)?;
        let s = segmentation_metrics(&c);
        let hd = hd95(&pc, &gc, h, w, (1.0, 1.0), Hd95Mode::CombinedMultiset);
        if let Some(d) = hd {
            hd_sum += d;
            hd_n += 1;
        }
        sums.miou += s.miou;
        sums.dsc += s.dsc;
        sums.spe += s.spe;
        sums.sen += s.sen;
        per_class.push(PerClass { class, dsc: s.dsc, hd95: hd });
    }
    let nfg = (k - 1) as f64;
    let correct = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(MetricReport {
        miou: sums.miou / nfg,
        dsc: sums.dsc / nfg,
        acc: correct as f64 / (h * w) as f64,
        spe: sums.spe / nfg,
        sen: sums.sen / nfg,
        hd95: if hd_n > 0 { Some(hd_sum / hd_n as f64) } else { None },
        per_class: Some(per_class),
    })
}

/// Dataset-level aggregate: mean over per-image reports (primary) plus
/// pooled-confusion metrics for the binary path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetReport {
    pub per_image: Vec<(String, MetricReport)>,
    pub mean: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled: Option<MetricReport>,
    /// Images whose HD95 was undefined (empty mask on either side).
    pub hd95_undefined: usize,
}

pub fn aggregate_reports(
    per_image: Vec<(String, MetricReport)>,
    pooled_counts: Option<ConfusionCounts>,
) -> DatasetReport {
    let n = per_image.len().max(1) as f64;
    let mut mean = MetricReport {
        miou: 0.0,
        dsc: 0.0,
        acc: 0.0,
        spe: 0.0,
        sen: 0.0,
        hd95: None,
        per_class: None,
    };
    let mut hd_sum = 0.0;
    let mut hd_n = 0usize;
    let mut undefined = 0usize;
    // mean per-class table when every image carries one
    let mut class_acc: Option<Vec<(usize, f64, f64, usize)>> = None;
    for (_, r) in &per_image {
        mean.miou += r.miou / n;
        mean.dsc += r.dsc / n;
        mean.acc += r.acc / n;
        mean.spe += r.spe / n;
        mean.sen += r.sen / n;
        match r.hd95 {
            Some(d) => {
                hd_sum += d;
                hd_n += 1;
            }
            None => undefined += 1,
        }
        if let Some(pcs) = &r.per_class {
            let acc = class_acc.get_or_insert_with(|| {
                pcs.iter().map(|p| (p.class, 0.0, 0.0, 0usize)).collect()
            });
            for (slot, p) in acc.iter_mut().zip(pcs) {
                slot.1 += p.dsc / n;
                if let Some(d) = p.hd95 {
                    slot.2 += d;
                    slot.3 += 1;
                }
            }
        }
    }
    mean.hd95 = if hd_n > 0 { Some(hd_sum / hd_n as f64) } else { None };
    mean.per_class = class_acc.map(|acc| {
        acc.into_iter()
            .map(|(class, dsc, hd, hn)| PerClass {
                class,
                dsc,
                hd95: if hn > 0 { Some(hd / hn as f64) } else { None },
            })
            .collect()
    });
    let pooled = pooled_counts.map(|c| {
        let s = segmentation_metrics(&c);
        MetricReport {
            miou: s.miou,
            dsc: s.dsc,
            acc: s.acc,
            spe: s.spe,
            sen: s.sen,
            hd95: None,
            per_class: None,
        }
    });
    DatasetReport { per_image, mean, pooled, hd95_undefined: undefined }
}

/// Fixed-column CSV: id, miou, dsc, acc, spe, sen, hd95.
pub fn report_csv(report: &DatasetReport) -> String {
    let mut out = String::from("id,miou,dsc,acc,spe,sen,hd95\n");
    let fmt_row = |id: &str, r: &MetricReport| -> String {
        let hd = r.hd95.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{id},{:.6},{:.6},{:.6},{:.6},{:.6},{hd}\n",
            r.miou, r.dsc, r.acc, r.spe, r.sen
        )
    };
    for (id, r) in &report.per_image {
        out.push_str(&fmt_row(id, r));
    }
    out.push_str(&fmt_row("mean", &report.mean));
    if let Some(p) = &report.pooled {
        out.push_str(&fmt_row("pooled", p));
    }
    out
}

pub fn report_json(report: &DatasetReport) -> String {
    serde_json::to_string_pretty(report).expect("metric report serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn perfect_and_complement_counts() {
        let ones = vec![1u8; 16];
        let c = confusion_counts(&ones, &ones).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (16, 0, 0, 0));
        let zeros = vec![0u8; 16];
        let c = confusion_counts(&zeros, &ones).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert_eq!(c.fn_, 16);
    }

    #[test]
    fn constructed_counts_are_exact() {
        // 4x4 masks laid out to give tp=6, fp=2, fn=1, tn=7
        let pred = [1, 1, 1, 0, 1, 1, 1, 0, 1, 1, 0, 0, 0, 0, 0, 0];
        let gt = [1, 1, 1, 0, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0];
        let c = confusion_counts(&pred, &gt).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (6, 2, 1, 7));
        let s = segmentation_metrics(&c);
        assert!((s.miou - 6.0 / 9.0).abs() < 1e-12);
        assert!((s.dsc - 0.8).abs() < 1e-12);
        assert!((s.acc - 13.0 / 16.0).abs() < 1e-12);
        assert!((s.spe - 7.0 / 9.0).abs() < 1e-12);
        assert!((s.sen - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn empty_set_conventions() {
        let zeros = vec![0u8; 8];
        let c = confusion_counts(&zeros, &zeros).unwrap();
        let s = segmentation_metrics(&c);
        assert_eq!((s.miou, s.dsc, s.acc, s.spe, s.sen), (1.0, 1.0, 1.0, 1.0, 1.0));
        // gt empty, pred not: sen = 0 by the one-sided convention
        let pred = vec![1u8, 0, 0, 0, 0, 0, 0, 0];
        let c = confusion_counts(&pred, &zeros).unwrap();
        let s = segmentation_metrics(&c);
        assert_eq!(s.sen, 0.0);
        assert_eq!(s.miou, 0.0);
    }

    #[test]
    fn dsc_iou_identity_on_random_counts() {
        let mut rng = Rng::new(1);
        for _ in 0..200 {
            let c = ConfusionCounts {
                tp: rng.below(100) as u64,
                fp: rng.below(100) as u64,
                tn: rng.below(100) as u64,
                fn_: rng.below(100) as u64,
            };
            let s = segmentation_metrics(&c);
            let want = 2.0 * s.miou / (1.0 + s.miou);
            assert!((s.dsc - want).abs() < 1e-12, "counts {c:?}");
        }
    }

    #[test]
    fn metrics_invariant_under_joint_permutation() {
        let mut rng = Rng::new(2);
        let n = 64;
        let pred: Vec<u8> = (0..n).map(|_| (rng.uniform() > 0.5) as u8).collect();
        let gt: Vec<u8> = (0..n).map(|_| (rng.uniform() > 0.5) as u8).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let pred2: Vec<u8> = idx.iter().map(|&i| pred[i]).collect();
        let gt2: Vec<u8> = idx.iter().map(|&i| gt[i]).collect();
        let a = segmentation_metrics(&confusion_counts(&pred, &gt).unwrap());
        let b = segmentation_metrics(&confusion_counts(&pred2, &gt2).unwrap());
        assert_eq!(a, b);
    }

    fn brute_force_hd95(pred: &[u8], gt: &[u8], h: usize, w: usize, mode: Hd95Mode) -> Option<f64> {
        let pb = boundary_pixels(pred, h, w);
        let gb = boundary_pixels(gt, h, w);
        if pb.is_empty() || gb.is_empty() {
            return None;
        }
        let nearest = |from: &[(usize, usize)], to: &[(usize, usize)]| -> Vec<f64> {
            from.iter()
                .map(|&(i, j)| {
                    to.iter()
                        .map(|&(a, b)| {
                            let (di, dj) = (i as f64 - a as f64, j as f64 - b as f64);
                            (di * di + dj * dj).sqrt()
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        };
        let p2g = nearest(&pb, &gb);
        let g2p = nearest(&gb, &pb);
        Some(match mode {
            Hd95Mode::CombinedMultiset => {
                let mut all = p2g;
                all.extend(g2p);
                percentile(&mut all, 0.95)
            }
            Hd95Mode::MaxDirected => {
                let mut a = p2g;
                let mut b = g2p;
                percentile(&mut a, 0.95).max(percentile(&mut b, 0.95))
            }
        })
    }

    #[test]
    fn hd95_identical_masks_is_zero() {
        let mut m = vec![0u8; 64];
        for i in 2..5 {
            for j in 2..5 {
                m[i * 8 + j] = 1;
            }
        }
        let d = hd95(&m, &m, 8, 8, (1.0, 1.0), Hd95Mode::CombinedMultiset).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn hd95_single_pixels_three_apart() {
        let mut a = vec![0u8; 64];
        let mut b = vec![0u8; 64];
        a[2 * 8 + 1] = 1;
        b[2 * 8 + 4] = 1;
        let d = hd95(&a, &b, 8, 8, (1.0, 1.0), Hd95Mode::CombinedMultiset).unwrap();
        assert!((d - 3.0).abs() < 1e-12, "got {d}");
    }

    #[test]
    fn hd95_empty_mask_is_undefined() {
        let empty = vec![0u8; 16];
        let mut full = vec![0u8; 16];
        full[5] = 1;
        assert!(hd95(&empty, &full, 4, 4, (1.0, 1.0), Hd95Mode::CombinedMultiset).is_none());
        assert!(hd95(&full, &empty, 4, 4, (1.0, 1.0), Hd95Mode::CombinedMultiset).is_none());
    }

    #[test]
    fn hd95_matches_brute_force_oracle() {
        let mut rng = Rng::new(3);
        for case in 0..40 {
            let h = 4 + rng.below(29);
            let w = 4 + rng.below(29);
            let blob = |rng: &mut Rng| -> Vec<u8> {
                let mut m = vec![0u8; h * w];
                let shapes = 1 + rng.below(2);
                for _ in 0..shapes {
                    let ci = rng.below(h);
                    let cj = rng.below(w);
                    let r = 1 + rng.below(5);
                    for i in 0..h {
                        for j in 0..w {
                            let di = i as i64 - ci as i64;
                            let dj = j as i64 - cj as i64;
                            if di * di + dj * dj <= (r * r) as i64 {
                                m[i * w + j] = 1;
                            }
                        }
                    }
                }
                m
            };
            let a = blob(&mut rng);
            let b = blob(&mut rng);
            for mode in [Hd95Mode::CombinedMultiset, Hd95Mode::MaxDirected] {
                let fast = hd95(&a, &b, h, w, (1.0, 1.0), mode);
                let slow = brute_force_hd95(&a, &b, h, w, mode);
                match (fast, slow) {
                    (Some(x), Some(y)) => {
                        assert!((x - y).abs() < 1e-6, "case {case}: {x} vs {y}")
                    }
                    (None, None) => {}
                    other => panic!("case {case}: definedness mismatch {other:?}"),
                }
            }
        }
    }

    #[test]
    fn hd95_symmetric_in_combined_mode() {
        let mut rng = Rng::new(4);
        let n = 12;
        let a: Vec<u8> = (0..n * n).map(|_| (rng.uniform() > 0.6) as u8).collect();
        let b: Vec<u8> = (0..n * n).map(|_| (rng.uniform() > 0.6) as u8).collect();
        let ab = hd95(&a, &b, n, n, (1.0, 1.0), Hd95Mode::CombinedMultiset);
        let ba = hd95(&b, &a, n, n, (1.0, 1.0), Hd95Mode::CombinedMultiset);
        assert_eq!(ab, ba);
    }

    #[test]
    fn hd95_respects_spacing() {
        let mut a = vec![0u8; 64];
        let mut b = vec![0u8; 64];
        a[2 * 8 + 1] = 1;
        b[2 * 8 + 4] = 1; // 3 columns apart
        let d = hd95(&a, &b, 8, 8, (1.0, 2.5), Hd95Mode::CombinedMultiset).unwrap();
        assert!((d - 7.5).abs() < 1e-12, "got {d}");
    }

    #[test]
    fn multiclass_report_perfect_and_oracle() {
        let mut rng = Rng::new(5);
        let (h, w, k) = (16, 16, 3);
        let gt: Vec<u8> = (0..h * w).map(|_| rng.below(k) as u8).collect();
        let r = multiclass_report(&gt, &gt, h, w, k).unwrap();
        for pc in r.per_class.as_ref().unwrap() {
            assert_eq!(pc.dsc, 1.0);
        }
        assert_eq!(r.dsc, 1.0);
        assert_eq!(r.per_class.as_ref().unwrap().len(), k - 1);

        // random prediction matches one-vs-rest binary computation
        let pred: Vec<u8> = (0..h * w).map(|_| rng.below(k) as u8).collect();
        let r = multiclass_report(&pred, &gt, h, w, k).unwrap();
        for class in 1..k {
            let pc: Vec<u8> = pred.iter().map(|&v| (v as usize == class) as u8).collect();
            let gc: Vec<u8> = gt.iter().map(|&v| (v as usize == class) as u8).collect();
            let s = segmentation_metrics(&confusion_counts(&pc, &gc).unwrap());
            let row = &r.per_class.as_ref().unwrap()[class - 1];
            assert_eq!(row.dsc, s.dsc);
        }
    }

    #[test]
    fn multiclass_single_wrong_class_and_absent_convention() {
        let (h, w, k) = (4, 4, 4);
        let gt = vec![1u8; 16];
        let pred = vec![2u8; 16];
        let r = multiclass_report(&pred, &gt, h, w, k).unwrap();
        let pcs = r.per_class.unwrap();
        assert_eq!(pcs[0].dsc, 0.0); // class 1: in gt only
        assert_eq!(pcs[1].dsc, 0.0); // class 2: in pred only
        assert_eq!(pcs[2].dsc, 1.0); // class 3: absent from both
        assert!(pcs[2].hd95.is_none());
    }

    #[test]
    fn aggregation_is_mean_of_per_image() {
        let r1 = MetricReport { miou: 0.5, dsc: 0.6, acc: 0.7, spe: 0.8, sen: 0.9, hd95: Some(2.0), per_class: None };
        let r2 = MetricReport { miou: 0.7, dsc: 0.8, acc: 0.9, spe: 1.0, sen: 0.7, hd95: None, per_class: None };
        let agg = aggregate_reports(vec![("a".into(), r1), ("b".into(), r2)], None);
        assert!((agg.mean.miou - 0.6).abs() < 1e-12);
        assert!((agg.mean.dsc - 0.7).abs() < 1e-12);
        assert_eq!(agg.mean.hd95, Some(2.0));
        assert_eq!(agg.hd95_undefined, 1);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let r = MetricReport { miou: 1.0, dsc: 1.0, acc: 1.0, spe: 1.0, sen: 1.0, hd95: Some(0.0), per_class: None };
        let agg = aggregate_reports(vec![("img0".into(), r)], Some(ConfusionCounts { tp: 1, fp: 0, tn: 1, fn_: 0 }));
        let csv = report_csv(&agg);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "id,miou,dsc,acc,spe,sen,hd95");
        assert!(csv.lines().any(|l| l.starts_with("mean,")));
        assert!(csv.lines().any(|l| l.starts_with("pooled,")));
    }
}
