//! History Marker: dissolves per-instance masks weighted by their ID vectors
//! into a spatial map added to the previous frame's features.
//!
//! S[h,w,:] = sum_i M_i[h,w] * A_i / (eps + sum_i M_i[h,w])

use crate::backbone::FrameFeatureMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f32 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MaskKind {
    /// Values constrained to {0, 1}.
    Hard,
    /// Values constrained to [0, 1].
    Soft,
}

/// N stacked instance masks over one spatial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskStack {
    n: usize,
    h: usize,
    w: usize,
    kind: MaskKind,
    values: Tensor,
}

impl MaskStack {
    pub fn new(n: usize, h: usize, w: usize, kind: MaskKind, values: Tensor) -> Result<MaskStack> {
        if values.shape() != [n, h, w] {
            return Err(Error::dimension(
                "MaskStack::new",
                values.shape(),
                &[n, h, w],
            ));
        }
        for &v in values.data() {
            let ok = match kind {
                MaskKind::Hard => v == 0.0 || v == 1.0,
                MaskKind::Soft => (0.0..=1.0).contains(&v),
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "mask value {v} invalid for {kind:?} stack"
                )));
            }
        }
        Ok(MaskStack {
            n,
            h,
            w,
            kind,
            values,
        })
    }

    pub fn empty(h: usize, w: usize) -> MaskStack {
        MaskStack {
            n: 0,
            h,
            w,
            kind: MaskKind::Hard,
            values: Tensor::zeros(&[0, h, w]),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn mask(&self, i: usize) -> &[f32] {
        &self.values.data()[i * self.h * self.w..(i + 1) * self.h * self.w]
    }

    /// Append one mask row (used by the registry's admit path).
    pub fn push(&mut self, mask: &[f32], kind: MaskKind) -> Result<()> {
        if mask.len() != self.h * self.w {
            return Err(Error::dimension(
                "MaskStack::push",
                &[mask.len()],
                &[self.h * self.w],
            ));
        }
        for &v in mask {
            let ok = match kind {
                MaskKind::Hard => v == 0.0 || v == 1.0,
                MaskKind::Soft => (0.0..=1.0).contains(&v),
            };
            if !ok {
                return Err(Error::InvalidInput(format!("mask value {v} out of range")));
            }
        }
        if self.n == 0 {
            self.kind = kind;
        } else if kind != self.kind {
            self.kind = MaskKind::Soft; // mixed stacks degrade to soft
        }
        let mut data = std::mem::take(&mut self.values).into_data();
        data.extend_from_slice(mask);
        self.n += 1;
        self.values = Tensor::from_vec(&[self.n, self.h, self.w], data)?;
        Ok(())
    }

    /// Replace row i in place; value constraints are the caller's problem
    /// only in the sense that they are re-checked here.
    pub fn set_mask(&mut self, i: usize, mask: &[f32]) -> Result<()> {
        if mask.len() != self.h * self.w {
            return Err(Error::dimension(
                "MaskStack::set_mask",
                &[mask.len()],
                &[self.h * self.w],
            ));
        }
        let hw = self.h * self.w;
        self.values.data_mut()[i * hw..(i + 1) * hw].copy_from_slice(mask);
        Ok(())
    }
}

/// The marker formula. N = 0 yields the all-zero map.
pub fn mark(ids: &Tensor, masks: &MaskStack, eps: f32) -> Result<Tensor> {
    if eps <= 0.0 {
        return Err(Error::Config(format!("marker eps must be > 0, got {eps}")));
    }
    let n = masks.n();
    if ids.shape().len() != 2 || ids.shape()[0] != n {
        return Err(Error::dimension(
            "mark: ids vs masks",
            ids.shape(),
            &[n, 0],
        ));
    }
    let d = ids.shape()[1];
    let (h, w) = (masks.h(), masks.w());
    let mut out = vec![0.0f32; h * w * d];
    if n == 0 {
        return Tensor::from_vec(&[h, w, d], out);
    }
    let mvals = masks.values().data();
    let ivals = ids.data();
    let mut num = vec![0.0f64; d];
    for pix in 0..h * w {
        num.iter_mut().for_each(|v| *v = 0.0);
        let mut den = eps as f64;
        for i in 0..n {
            let m = mvals[i * h * w + pix] as f64;
            if m == 0.0 {
                continue;
            }
            den += m;
            let row = &ivals[i * d..(i + 1) * d];
            for (a, &v) in num.iter_mut().zip(row) {
                *a += m * v as f64;
            }
        }
        let inv = 1.0 / den;
        for (o, &a) in out[pix * d..(pix + 1) * d].iter_mut().zip(&num) {
            *o = (a * inv) as f32;
        }
    }
    Tensor::from_vec(&[h, w, d], out)
}

/// E_t = X_{t-1} + mark(A, M, eps). Masks live at feature resolution.
pub fn build_marked_input(
    x_prev: &FrameFeatureMap,
    ids: &Tensor,
    masks: &MaskStack,
    eps: f32,
) -> Result<Tensor> {
    if masks.h() != x_prev.h || masks.w() != x_prev.w {
        return Err(Error::dimension(
            "build_marked_input: mask grid vs features",
            &[masks.h(), masks.w()],
            &[x_prev.h, x_prev.w],
        ));
    }
    let s = mark(ids, masks, eps)?;
    x_prev.values.add(&s)
}

/// Area-mean downsample of a full-resolution mask to the feature grid.
pub fn downsample_area(mask: &[f32], full_h: usize, full_w: usize, patch: usize) -> Vec<f32> {
    let (fh, fw) = (full_h / patch, full_w / patch);
    let mut out = vec![0.0f32; fh * fw];
    let inv = 1.0 / (patch * patch) as f64;
    for gy in 0..fh {
        for gx in 0..fw {
            let mut acc = 0.0f64;
            for iy in 0..patch {
                let row = (gy * patch + iy) * full_w + gx * patch;
                for v in &mask[row..row + patch] {
                    acc += *v as f64;
                }
            }
            out[gy * fw + gx] = (acc * inv) as f32;
        }
    }
    out
}

/// Threshold a soft mask at 0.5 into a hard mask.
pub fn binarize(mask: &mut [f32]) {
    for v in mask.iter_mut() {
        *v = if *v > 0.5 { 1.0 } else { 0.0 };
    }
}

/// Full-resolution hard mask -> feature-resolution hard mask.
pub fn downsample_hard(mask: &[f32], full_h: usize, full_w: usize, patch: usize) -> Vec<f32> {
    let mut m = downsample_area(mask, full_h, full_w, patch);
    binarize(&mut m);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;

    fn stack(n: usize, h: usize, w: usize, vals: Vec<f32>) -> MaskStack {
        MaskStack::new(n, h, w, MaskKind::Hard, Tensor::from_vec(&[n, h, w], vals).unwrap())
            .unwrap()
    }

    #[test]
    fn single_full_mask_scales_by_one_over_one_plus_eps() {
        let ids = Tensor::from_vec(&[1, 3], vec![2.0, -1.0, 0.5]).unwrap();
        let masks = stack(1, 2, 2, vec![1.0; 4]);
        let eps = 1e-6;
        let s = mark(&ids, &masks, eps).unwrap();
        for pix in 0..4 {
            for j in 0..3 {
                let want = ids.data()[j] / (1.0 + eps);
                assert!((s.data()[pix * 3 + j] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn disjoint_masks_keep_their_own_vectors() {
        let ids = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // Pixel 0 covered by mask 0, pixel 3 by mask 1, pixels 1-2 uncovered.
        let masks = stack(2, 2, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let s = mark(&ids, &masks, 1e-6).unwrap();
        assert!((s.data()[0] - 1.0 / (1.0 + 1e-6)).abs() < 1e-6);
        assert!((s.data()[1] - 2.0 / (1.0 + 1e-6)).abs() < 1e-6);
        assert_eq!(&s.data()[2..6], &[0.0, 0.0, 0.0, 0.0]);
        assert!((s.data()[6] - 3.0 / (1.0 + 1e-6)).abs() < 1e-6);
        assert!((s.data()[7] - 4.0 / (1.0 + 1e-6)).abs() < 1e-6);
    }

    #[test]
    fn overlapping_masks_average() {
        let a = [1.0f32, 5.0];
        let b = [3.0f32, -1.0];
        let ids = Tensor::from_vec(&[2, 2], vec![a[0], a[1], b[0], b[1]]).unwrap();
        let masks = stack(2, 1, 1, vec![1.0, 1.0]);
        let s = mark(&ids, &masks, 1e-6).unwrap();
        for j in 0..2 {
            let want = (a[j] + b[j]) / (2.0 + 1e-6);
            assert!((s.data()[j] - want).abs() < 1e-6, "{j}");
        }
    }

    #[test]
    fn empty_allocation_returns_x_prev() {
        let x = FrameFeatureMap::from_tensor(
            Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        )
        .unwrap();
        let ids = Tensor::zeros(&[0, 2]);
        let masks = MaskStack::empty(1, 2);
        let e = build_marked_input(&x, &ids, &masks, 1e-6).unwrap();
        assert_eq!(e, x.values);
    }

    #[test]
    fn zero_x_prev_returns_mark() {
        let x = FrameFeatureMap::from_tensor(Tensor::zeros(&[1, 1, 2])).unwrap();
        let ids = Tensor::from_vec(&[1, 2], vec![4.0, 5.0]).unwrap();
        let masks = stack(1, 1, 1, vec![1.0]);
        let e = build_marked_input(&x, &ids, &masks, 1e-6).unwrap();
        let s = mark(&ids, &masks, 1e-6).unwrap();
        assert_eq!(e, s);
    }

    #[test]
    fn marked_input_matches_elementwise_sum_oracle() {
        let mut rng = StreamRng::new(13);
        let (h, w, d, n) = (3, 4, 5, 2);
        let xdata: Vec<f32> = (0..h * w * d).map(|_| rng.range_f32(-1.0, 1.0)).collect();
        let x = FrameFeatureMap::from_tensor(
            Tensor::from_vec(&[h, w, d], xdata.clone()).unwrap(),
        )
        .unwrap();
        let ids = Tensor::from_vec(
            &[n, d],
            (0..n * d).map(|_| rng.range_f32(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let mvals: Vec<f32> = (0..n * h * w)
            .map(|_| if rng.unit_f32() > 0.5 { 1.0 } else { 0.0 })
            .collect();
        let masks = stack(n, h, w, mvals);
        let e = build_marked_input(&x, &ids, &masks, 1e-6).unwrap();
        let s = mark(&ids, &masks, 1e-6).unwrap();
        for i in 0..h * w * d {
            let want = xdata[i] + s.data()[i];
            assert!((e.data()[i] - want).abs() <= 1e-6);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = StreamRng::new(77);
        let (h, w, d, n) = (4, 4, 6, 3);
        let ids_data: Vec<f32> = (0..n * d).map(|_| rng.range_f32(-2.0, 2.0)).collect();
        let mask_data: Vec<f32> = (0..n * h * w)
            .map(|_| if rng.unit_f32() > 0.4 { 1.0 } else { 0.0 })
            .collect();
        let ids = Tensor::from_vec(&[n, d], ids_data.clone()).unwrap();
        let masks = stack(n, h, w, mask_data.clone());
        let s1 = mark(&ids, &masks, 1e-6).unwrap();

        // Rotate instance order by one.
        let perm = [2usize, 0, 1];
        let mut pid = vec![0.0; n * d];
        let mut pmask = vec![0.0; n * h * w];
        for (dst, &src) in perm.iter().enumerate() {
            pid[dst * d..(dst + 1) * d].copy_from_slice(&ids_data[src * d..(src + 1) * d]);
            pmask[dst * h * w..(dst + 1) * h * w]
                .copy_from_slice(&mask_data[src * h * w..(src + 1) * h * w]);
        }
        let s2 = mark(
            &Tensor::from_vec(&[n, d], pid).unwrap(),
            &stack(n, h, w, pmask),
            1e-6,
        )
        .unwrap();
        assert!(s1.max_abs_diff(&s2) <= 1e-6);
    }

    #[test]
    fn linear_in_ids() {
        let mut rng = StreamRng::new(31);
        let (h, w, d, n) = (2, 3, 4, 2);
        let ids_data: Vec<f32> = (0..n * d).map(|_| rng.range_f32(-1.0, 1.0)).collect();
        let mask_data: Vec<f32> = (0..n * h * w)
            .map(|_| if rng.unit_f32() > 0.5 { 1.0 } else { 0.0 })
            .collect();
        let ids = Tensor::from_vec(&[n, d], ids_data.clone()).unwrap();
        let masks = stack(n, h, w, mask_data);
        let c = 2.5f32;
        let s1 = mark(&ids, &masks, 1e-6).unwrap().scale(c);
        let s2 = mark(&ids.scale(c), &masks, 1e-6).unwrap();
        assert!(s1.max_abs_diff(&s2) <= 1e-6);
    }

    #[test]
    fn bounded_by_max_id_magnitude_for_hard_masks() {
        let mut rng = StreamRng::new(55);
        let (h, w, d, n) = (3, 3, 4, 3);
        let ids_data: Vec<f32> = (0..n * d).map(|_| rng.range_f32(-3.0, 3.0)).collect();
        let mask_data: Vec<f32> = (0..n * h * w)
            .map(|_| if rng.unit_f32() > 0.5 { 1.0 } else { 0.0 })
            .collect();
        let max_id = ids_data.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let s = mark(
            &Tensor::from_vec(&[n, d], ids_data).unwrap(),
            &stack(n, h, w, mask_data),
            1e-6,
        )
        .unwrap();
        for v in s.data() {
            assert!(v.abs() <= max_id + 1e-6);
        }
    }

    #[test]
    fn mismatched_n_is_a_dimension_error() {
        let ids = Tensor::zeros(&[2, 3]);
        let masks = MaskStack::empty(2, 2);
        assert!(matches!(
            mark(&ids, &masks, 1e-6).unwrap_err(),
            Error::Dimension { .. }
        ));
    }

    #[test]
    fn downsample_then_binarize() {
        // 4x4 full-res mask, patch 2: top-left block fully on, top-right half on.
        let mask = vec![
            1.0, 1.0, 1.0, 0.0, //
            1.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0,
        ];
        let soft = downsample_area(&mask, 4, 4, 2);
        assert_eq!(soft, vec![1.0, 0.25, 0.0, 0.0]);
        let hard = downsample_hard(&mask, 4, 4, 2);
        assert_eq!(hard, vec![1.0, 0.0, 0.0, 0.0]);
    }
}
