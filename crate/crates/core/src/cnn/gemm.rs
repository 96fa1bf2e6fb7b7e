//! Packed single-precision matrix product used by the convolution layers.
//!
//! Computes `C = A · Wᵀ + bias` where `A` is `m × k` (one im2col row per output
//! pixel) and `W` is `n × k` (one row per filter). Every output element is
//! accumulated over `k` in ascending order by a single accumulator, so results
//! do not depend on how rows are split across threads.

use std::sync::OnceLock;

pub(crate) const MR: usize = 6;
pub(crate) const NR: usize = 16;

/// Filter matrix rearranged into `NR`-wide column panels, zero padded.
pub(crate) struct PackedFilters {
    k: usize,
    n: usize,
    panels: Vec<f32>,
}

impl PackedFilters {
    pub(crate) fn pack(weights: &[f32], n: usize, k: usize) -> Self {
        debug_assert_eq!(weights.len(), n * k);
        let panel_count = n.div_ceil(NR);
        let mut panels = vec![0.0f32; panel_count * k * NR];
        for (p, panel) in panels.chunks_exact_mut(k * NR).enumerate() {
            for j in 0..NR {
                let col = p * NR + j;
                if col >= n {
                    break;
                }
                let row = &weights[col * k..(col + 1) * k];
                for (kk, &w) in row.iter().enumerate() {
                    panel[kk * NR + j] = w;
                }
            }
        }
        Self { k, n, panels }
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }

    fn panel(&self, p: usize) -> &[f32] {
        &self.panels[p * self.k * NR..(p + 1) * self.k * NR]
    }

    fn panel_count(&self) -> usize {
        self.n.div_ceil(NR)
    }
}

type Kernel = fn(usize, &[f32], &[f32]) -> [[f32; NR]; MR];

#[inline(always)]
fn kernel_body<const FMA: bool>(k: usize, a: &[f32], b: &[f32]) -> [[f32; NR]; MR] {
    let mut acc = [[0.0f32; NR]; MR];
    for (ar, br) in a.chunks_exact(MR).zip(b.chunks_exact(NR)).take(k) {
        for i in 0..MR {
            let ai = ar[i];
            for j in 0..NR {
                acc[i][j] = if FMA {
                    ai.mul_add(br[j], acc[i][j])
                } else {
                    acc[i][j] + ai * br[j]
                };
            }
        }
    }
    acc
}

fn kernel_portable(k: usize, a: &[f32], b: &[f32]) -> [[f32; NR]; MR] {
    kernel_body::<false>(k, a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn kernel_avx2_inner(k: usize, a: &[f32], b: &[f32]) -> [[f32; NR]; MR] {
    kernel_body::<true>(k, a, b)
}

#[cfg(target_arch = "x86_64")]
fn kernel_avx2(k: usize, a: &[f32], b: &[f32]) -> [[f32; NR]; MR] {
    // SAFETY: only selected after runtime detection of avx2 and fma.
    unsafe { kernel_avx2_inner(k, a, b) }
}

fn select_kernel() -> Kernel {
    static KERNEL: OnceLock<Kernel> = OnceLock::new();
    *KERNEL.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
                return kernel_avx2 as Kernel;
            }
        }
        kernel_portable as Kernel
    })
}

/// Packs `rows` rows of `a` (row-major, width `k`) into `MR`-row panels.
fn pack_rows(a: &[f32], rows: usize, k: usize, out: &mut Vec<f32>) {
    let panel_count = rows.div_ceil(MR);
    out.clear();
    out.resize(panel_count * k * MR, 0.0);
    for (p, panel) in out.chunks_exact_mut(k * MR).enumerate() {
        for i in 0..MR {
            let r = p * MR + i;
            if r >= rows {
                break;
            }
            let src = &a[r * k..(r + 1) * k];
            for (kk, &v) in src.iter().enumerate() {
                panel[kk * MR + i] = v;
            }
        }
    }
}

/// `c[rows × n] = a[rows × k] · filtersᵀ + bias`. `scratch` holds the packed rows.
pub(crate) fn gemm_block(
    a: &[f32],
    rows: usize,
    filters: &PackedFilters,
    bias: &[f32],
    c: &mut [f32],
    scratch: &mut Vec<f32>,
) {
    let k = filters.k;
    let n = filters.n;
    debug_assert_eq!(a.len(), rows * k);
    debug_assert_eq!(c.len(), rows * n);
    pack_rows(a, rows, k, scratch);
    let kernel = select_kernel();
    for bp in 0..filters.panel_count() {
        let b = filters.panel(bp);
        let col0 = bp * NR;
        let cols = NR.min(n - col0);
        for (ap, a_panel) in scratch.chunks_exact(k * MR).enumerate() {
            let acc = kernel(k, a_panel, b);
            let row0 = ap * MR;
            let valid_rows = MR.min(rows - row0);
            for (i, acc_row) in acc.iter().enumerate().take(valid_rows) {
                let out = &mut c[(row0 + i) * n + col0..(row0 + i) * n + col0 + cols];
                for (j, o) in out.iter_mut().enumerate() {
                    *o = bias[col0 + j] + acc_row[j];
                }
            }
        }
    }
}
