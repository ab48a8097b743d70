//! Single-sample convolution kernels on planar `[C, H, W]` slices.
//!
//! All loops are written as row-wise axpy/dot products over the valid output
//! range so the inner loop is a contiguous slice walk the compiler vectorizes.

/// Geometry shared by forward and backward passes.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.k
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.k
    }

    /// Valid output-column range and source-column start for kernel column `kx`.
    #[inline]
    fn col_span(&self, kx: usize) -> Option<(usize, usize, usize)> {
        let shift = kx as isize - self.pad as isize;
        let ow = self.out_w() as isize;
        let x0 = (-shift).max(0);
        let x1 = ow.min(self.w as isize - shift);
        (x1 > x0).then(|| (x0 as usize, x1 as usize, (x0 + shift) as usize))
    }

    #[inline]
    fn src_row(&self, y: usize, ky: usize) -> Option<usize> {
        let sy = y as isize + ky as isize - self.pad as isize;
        (sy >= 0 && sy < self.h as isize).then_some(sy as usize)
    }
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators give the vectorizer room; the order is fixed, so the
    // result is deterministic.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Accumulates plane `src` convolved with a single `k x k` filter into `dst`.
#[inline]
fn plane_forward(g: &ConvGeom, src: &[f64], filt: &[f64], dst: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    for ky in 0..g.k {
        for kx in 0..g.k {
            let wv = filt[ky * g.k + kx];
            if wv == 0.0 {
                continue;
            }
            let Some((x0, x1, sx0)) = g.col_span(kx) else {
                continue;
            };
            for y in 0..oh {
                let Some(sy) = g.src_row(y, ky) else { continue };
                let srow = &src[sy * g.w + sx0..sy * g.w + sx0 + (x1 - x0)];
                axpy(&mut dst[y * ow + x0..y * ow + x1], wv, srow);
            }
        }
    }
}

/// Gradient of a single-filter plane convolution: accumulates into the source
/// gradient (if requested) and returns the filter gradient into `dfilt`.
#[inline]
fn plane_backward(
    g: &ConvGeom,
    src: &[f64],
    filt: &[f64],
    dout: &[f64],
    dsrc: Option<&mut [f64]>,
    dfilt: Option<&mut [f64]>,
) {
    let (oh, ow) = (g.out_h(), g.out_w());
    if let Some(dfilt) = dfilt {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let Some((x0, x1, sx0)) = g.col_span(kx) else {
                    continue;
                };
                let mut acc = 0.0;
                for y in 0..oh {
                    let Some(sy) = g.src_row(y, ky) else { continue };
                    let srow = &src[sy * g.w + sx0..sy * g.w + sx0 + (x1 - x0)];
                    acc += dot(&dout[y * ow + x0..y * ow + x1], srow);
                }
                dfilt[ky * g.k + kx] += acc;
            }
        }
    }
    if let Some(dsrc) = dsrc {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let wv = filt[ky * g.k + kx];
                if wv == 0.0 {
                    continue;
                }
                let Some((x0, x1, sx0)) = g.col_span(kx) else {
                    continue;
                };
                for y in 0..oh {
                    let Some(sy) = g.src_row(y, ky) else { continue };
                    let drow = &mut dsrc[sy * g.w + sx0..sy * g.w + sx0 + (x1 - x0)];
                    axpy(drow, wv, &dout[y * ow + x0..y * ow + x1]);
                }
            }
        }
    }
}

pub(crate) fn conv_forward(
    g: &ConvGeom,
    input: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    out: &mut [f64],
) {
    let plane_in = g.h * g.w;
    let plane_out = g.out_h() * g.out_w();
    let kk = g.k * g.k;
    for co in 0..g.cout {
        let dst = &mut out[co * plane_out..(co + 1) * plane_out];
        if let Some(b) = bias {
            dst.iter_mut().for_each(|v| *v += b[co]);
        }
        for ci in 0..g.cin {
            let filt = &weight[(co * g.cin + ci) * kk..(co * g.cin + ci + 1) * kk];
            plane_forward(g, &input[ci * plane_in..(ci + 1) * plane_in], filt, dst);
        }
    }
}

pub(crate) fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    weight: &[f64],
    dout: &[f64],
    mut dinput: Option<&mut [f64]>,
    mut dweight: Option<&mut [f64]>,
    dbias: Option<&mut [f64]>,
) {
    let plane_in = g.h * g.w;
    let plane_out = g.out_h() * g.out_w();
    let kk = g.k * g.k;
    if let Some(db) = dbias {
        for co in 0..g.cout {
            db[co] += dout[co * plane_out..(co + 1) * plane_out]
                .iter()
                .sum::<f64>();
        }
    }
    for co in 0..g.cout {
        let dplane = &dout[co * plane_out..(co + 1) * plane_out];
        for ci in 0..g.cin {
            let widx = (co * g.cin + ci) * kk;
            let src = &input[ci * plane_in..(ci + 1) * plane_in];
            let dsrc = dinput
                .as_deref_mut()
                .map(|d| &mut d[ci * plane_in..(ci + 1) * plane_in]);
            let dfilt = dweight.as_deref_mut().map(|d| &mut d[widx..widx + kk]);
            plane_backward(g, src, &weight[widx..widx + kk], dplane, dsrc, dfilt);
        }
    }
}

/// Depthwise: channel `c` of the input convolved with filter `c` only.
pub(crate) fn depthwise_forward(g: &ConvGeom, input: &[f64], kernel: &[f64], out: &mut [f64]) {
    let plane = g.h * g.w;
    let kk = g.k * g.k;
    let single = ConvGeom {
        cin: 1,
        cout: 1,
        ..*g
    };
    for c in 0..g.cin {
        plane_forward(
            &single,
            &input[c * plane..(c + 1) * plane],
            &kernel[c * kk..(c + 1) * kk],
            &mut out[c * plane..(c + 1) * plane],
        );
    }
}

pub(crate) fn depthwise_backward(
    g: &ConvGeom,
    input: &[f64],
    kernel: &[f64],
    dout: &[f64],
    mut dinput: Option<&mut [f64]>,
    mut dkernel: Option<&mut [f64]>,
) {
    let plane = g.h * g.w;
    let kk = g.k * g.k;
    let single = ConvGeom {
        cin: 1,
        cout: 1,
        ..*g
    };
    for c in 0..g.cin {
        let dsrc = dinput
            .as_deref_mut()
            .map(|d| &mut d[c * plane..(c + 1) * plane]);
        let dfilt = dkernel.as_deref_mut().map(|d| &mut d[c * kk..(c + 1) * kk]);
        plane_backward(
            &single,
            &input[c * plane..(c + 1) * plane],
            &kernel[c * kk..(c + 1) * kk],
            &dout[c * plane..(c + 1) * plane],
            dsrc,
            dfilt,
        );
    }
}
