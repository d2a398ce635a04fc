//! Patch extraction for channels-last 2-D convolution, and its adjoint.

use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor, WithDType};

/// Geometry of a `(B, T, F, C)` to `(B, T', F', kt·kf·C)` unfold. Columns
/// are ordered (time tap, frequency tap, channel); out-of-range taps read
/// zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Patches {
    pub kt: usize,
    pub kf: usize,
    pub dt: usize,
    pub df: usize,
    /// Zeros before and after the time axis.
    pub pad_t: (usize, usize),
    pub pad_f: (usize, usize),
    pub stride_f: usize,
}

impl Patches {
    pub fn out_dims(&self, t: usize, f: usize) -> (usize, usize) {
        let to = (t + self.pad_t.0 + self.pad_t.1).saturating_sub((self.kt - 1) * self.dt);
        let full = (f + self.pad_f.0 + self.pad_f.1).saturating_sub((self.kf - 1) * self.df);
        (to, full.div_ceil(self.stride_f))
    }

    /// Visit every in-range copy as `(column offset, source offset, len)`,
    /// all in elements. Adjacent frequency taps merge into one run when
    /// `df == 1`.
    fn for_each_run(&self, [b, t, f, c]: [usize; 4], mut visit: impl FnMut(usize, usize, usize)) {
        let (to, fo) = self.out_dims(t, f);
        let k = self.kt * self.kf;
        let mut row = 0;
        for bi in 0..b {
            for ot in 0..to {
                for of in 0..fo {
                    let f0 = of * self.stride_f;
                    // taps j with pad_f.0 <= f0 + j·df < pad_f.0 + f
                    let j0 = self.pad_f.0.saturating_sub(f0).div_ceil(self.df);
                    let j1 = (self.pad_f.0 + f).saturating_sub(f0).div_ceil(self.df).min(self.kf);
                    if j0 < j1 {
                        for i in 0..self.kt {
                            let Some(ti) = (ot + i * self.dt).checked_sub(self.pad_t.0).filter(|&v| v < t) else {
                                continue;
                            };
                            let dst = (row * k + i * self.kf) * c;
                            let src = ((bi * t + ti) * f + f0 + j0 * self.df - self.pad_f.0) * c;
                            if self.df == 1 {
                                visit(dst + j0 * c, src, (j1 - j0) * c);
                            } else {
                                for j in j0..j1 {
                                    visit(dst + j * c, src + (j - j0) * self.df * c, c);
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn unfold_slice<T: WithDType>(&self, x: &[T], dims: [usize; 4]) -> Vec<T> {
        let [b, t, f, c] = dims;
        let (to, fo) = self.out_dims(t, f);
        let mut out = vec![T::zero(); b * to * fo * self.kt * self.kf * c];
        self.for_each_run(dims, |dst, src, n| out[dst..dst + n].copy_from_slice(&x[src..src + n]));
        out
    }

    fn fold_slice<T: WithDType>(&self, cols: &[T], dims: [usize; 4]) -> Vec<T> {
        let [b, t, f, c] = dims;
        let mut out = vec![T::zero(); b * t * f * c];
        self.for_each_run(dims, |dst, src, n| {
            for (o, &v) in out[src..src + n].iter_mut().zip(&cols[dst..dst + n]) {
                *o += v;
            }
        });
        out
    }

    pub fn unfold(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (b, t, f, c) = x.dims4()?;
        x.contiguous()?.apply_op1(Unfold { p: *self, dims: [b, t, f, c] })
    }
}

fn contiguous_slice<'a, T>(data: &'a [T], layout: &Layout, what: &str) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("{what} expects a contiguous input"),
    }
}

macro_rules! dispatch {
    ($storage:expr, $layout:expr, $name:expr, |$x:ident| $body:expr) => {
        match $storage {
            CpuStorage::F32(v) => {
                let $x = contiguous_slice(v, $layout, $name)?;
                CpuStorage::F32($body)
            }
            CpuStorage::F64(v) => {
                let $x = contiguous_slice(v, $layout, $name)?;
                CpuStorage::F64($body)
            }
            _ => candle_core::bail!("{} supports f32 and f64 only", $name),
        }
    };
}

struct Unfold {
    p: Patches,
    dims: [usize; 4],
}

struct Fold {
    p: Patches,
    dims: [usize; 4],
}

impl CustomOp1 for Unfold {
    fn name(&self) -> &'static str {
        "unfold"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let [b, t, f, c] = self.dims;
        let (to, fo) = self.p.out_dims(t, f);
        let out = dispatch!(storage, layout, "unfold", |x| self.p.unfold_slice(x, self.dims));
        Ok((out, Shape::from((b, to, fo, self.p.kt * self.p.kf * c))))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let g = grad.contiguous()?.apply_op1(Fold { p: self.p, dims: self.dims })?;
        Ok(Some(g))
    }
}

impl CustomOp1 for Fold {
    fn name(&self) -> &'static str {
        "fold"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let out = dispatch!(storage, layout, "fold", |x| self.p.fold_slice(x, self.dims));
        Ok((out, Shape::from(self.dims.to_vec())))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(self.p.unfold(grad)?))
    }
}
