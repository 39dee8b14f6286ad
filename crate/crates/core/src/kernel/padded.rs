use crate::scalar::Real;

/// Zero-bordered copy of one projection image.
///
/// Every bilinear corner read with `iu ∈ [−pad, ISX+pad−2]` and
/// `iv ∈ [−pad, ISY+pad−2]` stays inside `data`, and all border values are
/// exactly zero, so the kernels read without bounds conditionals.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedImage<T> {
    isx: usize,
    isy: usize,
    pad: usize,
    stride: usize,
    data: Vec<T>,
}

impl<T: Real> PaddedImage<T> {
    /// Allocates an all-zero buffer for an `isx × isy` image read by kernels
    /// of lane width `lanes`.
    pub fn zeroed(isx: usize, isy: usize, lanes: usize) -> Self {
        assert!(isx >= 2 && isy >= 2, "image must be at least 2x2, got {isx}x{isy}");
        let lanes = lanes.max(1);
        let pad = lanes.max(2);
        let stride = (isx + 2 * pad).div_ceil(lanes) * lanes;
        let rows = isy + 2 * pad;
        PaddedImage {
            isx,
            isy,
            pad,
            stride,
            data: vec![T::zero(); rows * stride],
        }
    }

    /// Overwrites the interior with `raw` (row-major, `isy × isx`). The border
    /// is never written, so it stays zero.
    pub fn fill_from(&mut self, raw: &[f32]) {
        assert_eq!(raw.len(), self.isx * self.isy, "raw image size mismatch");
        for (iv, src) in raw.chunks_exact(self.isx).enumerate() {
            let start = (iv + self.pad) * self.stride + self.pad;
            for (dst, &s) in self.data[start..start + self.isx].iter_mut().zip(src) {
                *dst = T::from_f32_lossless(s);
            }
        }
    }

    pub fn isx(&self) -> usize {
        self.isx
    }

    pub fn isy(&self) -> usize {
        self.isy
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn size_bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<T>()
    }

    /// Pixel value with out-of-image positions reading as zero; positions
    /// beyond the border are also zero.
    pub fn get(&self, iu: isize, iv: isize) -> T {
        let p = self.pad as isize;
        let col = iu + p;
        let row = iv + p;
        if col < 0 || row < 0 || col as usize >= self.stride || row as usize >= self.isy + 2 * self.pad {
            return T::zero();
        }
        self.data[row as usize * self.stride + col as usize]
    }

    /// Lower clamp bound for floor coordinates (both axes).
    #[inline(always)]
    pub(crate) fn lo(&self) -> T {
        -T::from_index(self.pad)
    }

    /// Upper clamp bounds `(ISX+pad−2, ISY+pad−2)` for floor coordinates.
    #[inline(always)]
    pub(crate) fn hi(&self) -> (T, T) {
        (
            T::from_index(self.isx + self.pad - 2),
            T::from_index(self.isy + self.pad - 2),
        )
    }

    /// Flat index of the top-left corner for in-range floor coordinates.
    #[inline(always)]
    pub(crate) fn offset_of(&self, iu: isize, iv: isize) -> usize {
        ((iv + self.pad as isize) as usize) * self.stride + (iu + self.pad as isize) as usize
    }

    /// The two pixel pairs `(valtl, valtr)` and `(valbl, valbr)` starting at
    /// flat index `idx`; each pair is contiguous in memory.
    #[inline(always)]
    pub(crate) fn pairs_at(&self, idx: usize) -> ([T; 2], [T; 2]) {
        let top = &self.data[idx..idx + 2];
        let bottom = &self.data[idx + self.stride..idx + self.stride + 2];
        ([top[0], top[1]], [bottom[0], bottom[1]])
    }
}

/// Builds the padded copy of `raw` for kernels of lane width `lanes`.
pub fn pad_image<T: Real>(raw: &[f32], isx: usize, isy: usize, lanes: usize) -> PaddedImage<T> {
    let mut img = PaddedImage::zeroed(isx, isy, lanes);
    img.fill_from(raw);
    img
}
