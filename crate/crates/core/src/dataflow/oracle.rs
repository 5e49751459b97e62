//! Loop-level reference simulator.
//!
//! Walks the literal `k/c/x/y/i/j` loop nest under each mode's schedule,
//! counting one cycle per array step and marking every MAC it issues. It
//! shares no formulas with the analytic models and is only meant for small
//! layers.

use super::{ConvGeometry, DataflowMode};
use crate::error::SimError;
use crate::hwmodel::AcceleratorConfig;

/// Largest layer (in dense MACs) the oracle accepts.
pub const ORACLE_MAC_LIMIT: u64 = 10_000_000;

/// Per-weight non-zero flags, laid out `[k][c][i][j]` with `c` local to the
/// group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMask {
    filter_len: usize,
    nonzero: Vec<bool>,
}

impl WeightMask {
    pub fn dense(g: &ConvGeometry) -> Self {
        Self::from_fn(g, |_, _, _, _| true)
    }

    /// `f(k, c, i, j)` returns whether that weight is non-zero.
    pub fn from_fn(g: &ConvGeometry, mut f: impl FnMut(u64, u64, u64, u64) -> bool) -> Self {
        let mut nonzero = Vec::with_capacity(g.weight_count() as usize);
        for k in 0..g.out_c {
            for c in 0..g.in_per_group() {
                for i in 0..g.kernel_h {
                    for j in 0..g.kernel_w {
                        nonzero.push(f(k, c, i, j));
                    }
                }
            }
        }
        Self {
            filter_len: g.filter_len() as usize,
            nonzero,
        }
    }

    /// Zeroes `floor(n·s)` weights of every filter at evenly spread,
    /// per-filter rotated positions.
    pub fn uniform(g: &ConvGeometry, sparsity: f64) -> Self {
        let n = g.filter_len() as usize;
        let zeros = (((n as f64) * sparsity + 1e-9).floor() as usize).min(n);
        let mut nonzero = vec![true; g.weight_count() as usize];
        for k in 0..g.out_c as usize {
            for t in 0..zeros {
                let pos = (t * n / zeros + k) % n;
                nonzero[k * n + pos] = false;
            }
        }
        Self {
            filter_len: n,
            nonzero,
        }
    }

    pub fn is_nonzero(&self, k: u64, flat: u64) -> bool {
        self.nonzero[k as usize * self.filter_len + flat as usize]
    }

    pub fn nonzero_in_filter(&self, k: u64) -> usize {
        let start = k as usize * self.filter_len;
        self.nonzero[start..start + self.filter_len]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    fn fits(&self, g: &ConvGeometry) -> bool {
        self.filter_len as u64 == g.filter_len() && self.nonzero.len() as u64 == g.weight_count()
    }
}

struct Coverage<'a> {
    g: &'a ConvGeometry,
    hits: Vec<u8>,
}

impl<'a> Coverage<'a> {
    fn new(g: &'a ConvGeometry) -> Self {
        Self {
            g,
            hits: vec![0; g.dense_macs() as usize],
        }
    }

    fn mark(&mut self, k: u64, c: u64, i: u64, j: u64, y: u64, x: u64) {
        let g = self.g;
        let w = ((k * g.in_per_group() + c) * g.kernel_h + i) * g.kernel_w + j;
        let idx = (w * g.out_h + y) * g.out_w + x;
        self.hits[idx as usize] += 1;
    }

    /// Every MAC whose weight is non-zero ran once; the rest never ran.
    fn check(&self, mask: Option<&WeightMask>) {
        let pixels = self.g.out_pixels() as usize;
        for (w, run) in self.hits.chunks(pixels).enumerate() {
            let expect = match mask {
                Some(m) => m.nonzero[w] as u8,
                None => 1,
            };
            assert!(
                run.iter().all(|&h| h == expect),
                "oracle schedule covered weight {w} incorrectly"
            );
        }
    }
}

/// Exact cycle count by enumeration. WS ignores the mask (it does not skip
/// zero weights); OS skips every masked weight. `None` means dense.
pub fn oracle_cycles(
    g: &ConvGeometry,
    cfg: &AcceleratorConfig,
    mode: DataflowMode,
    mask: Option<&WeightMask>,
) -> Result<u64, SimError> {
    let macs = g.dense_macs();
    if macs > ORACLE_MAC_LIMIT {
        return Err(SimError::OracleTooLarge {
            macs,
            limit: ORACLE_MAC_LIMIT,
        });
    }
    if let Some(m) = mask {
        if !m.fits(g) {
            return Err(SimError::InvalidPlan(
                "weight mask does not match layer".into(),
            ));
        }
    }
    let mut cov = Coverage::new(g);
    let cycles = match mode {
        DataflowMode::Ws => {
            let c = ws_walk(g, cfg, &mut cov);
            cov.check(None);
            c
        }
        DataflowMode::Os => {
            let c = os_walk(g, cfg, mask, &mut cov);
            cov.check(mask);
            c
        }
    };
    Ok(cycles)
}

fn ws_walk(g: &ConvGeometry, cfg: &AcceleratorConfig, cov: &mut Coverage) -> u64 {
    let (pr, pc) = (cfg.pe_rows, cfg.pe_cols);
    let cig = g.in_per_group();
    let cog = g.out_per_group();
    let mut cycles = 0;
    for grp in 0..g.groups {
        for i in 0..g.kernel_h {
            for j in 0..g.kernel_w {
                // load a P_r × P_c block of tap (i, j) into the array
                let mut c0 = 0;
                while c0 < cig {
                    let mut k0 = 0;
                    while k0 < cog {
                        // stream one input vector per output pixel
                        for y in 0..g.out_h {
                            for x in 0..g.out_w {
                                cycles += 1;
                                for r in 0..pr {
                                    for col in 0..pc {
                                        let (c, kl) = (c0 + r, k0 + col);
                                        if c < cig && kl < cog {
                                            cov.mark(grp * cog + kl, c, i, j, y, x);
                                        }
                                    }
                                }
                            }
                        }
                        k0 += pc;
                    }
                    c0 += pr;
                }
            }
        }
    }
    cycles
}

fn os_walk(
    g: &ConvGeometry,
    cfg: &AcceleratorConfig,
    mask: Option<&WeightMask>,
    cov: &mut Coverage,
) -> u64 {
    let (pr, pc) = (cfg.pe_rows, cfg.pe_cols);
    let mut cycles = 0;
    for k in 0..g.out_c {
        let mut y0 = 0;
        while y0 < g.out_h {
            let mut x0 = 0;
            while x0 < g.out_w {
                // each PE owns one output pixel of this tile
                for c in 0..g.in_per_group() {
                    for i in 0..g.kernel_h {
                        for j in 0..g.kernel_w {
                            let flat = (c * g.kernel_h + i) * g.kernel_w + j;
                            if mask.is_some_and(|m| !m.is_nonzero(k, flat)) {
                                continue;
                            }
                            cycles += 1;
                            for r in 0..pr {
                                for col in 0..pc {
                                    let (y, x) = (y0 + r, x0 + col);
                                    if y < g.out_h && x < g.out_w {
                                        cov.mark(k, c, i, j, y, x);
                                    }
                                }
                            }
                        }
                    }
                }
                x0 += pc;
            }
            y0 += pr;
        }
    }
    cycles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwmodel::preset;

    #[test]
    fn three_of_nine_zeroed() {
        let g = ConvGeometry::conv(1, 1, 1, 1, 3, 3, 1);
        let mask = WeightMask::from_fn(&g, |_, _, i, _| i != 0);
        assert_eq!(mask.nonzero_in_filter(0), 6);
        let cfg = preset("8x8_32KB").unwrap();
        assert_eq!(
            oracle_cycles(&g, &cfg, DataflowMode::Os, Some(&mask)).unwrap(),
            6
        );
    }

    #[test]
    fn uniform_mask_zero_count() {
        let g = ConvGeometry::conv(8, 4, 2, 2, 3, 3, 1);
        let m = WeightMask::uniform(&g, 0.4);
        for k in 0..4 {
            assert_eq!(m.nonzero_in_filter(k), 44);
        }
    }

    #[test]
    fn size_guard() {
        let g = ConvGeometry::conv(512, 512, 56, 56, 3, 3, 1);
        let cfg = preset("16x16_128KB").unwrap();
        assert!(matches!(
            oracle_cycles(&g, &cfg, DataflowMode::Ws, None),
            Err(SimError::OracleTooLarge { .. })
        ));
    }
}
