//! Advection and diffusion terms of the momentum equations.
//!
//! For momentum component `c` and axis `d`, at point `p`:
//!
//! * `diu[d] = (vel_c(p) - vel_c(p - e_d)) / h_d(p_d)`
//! * `cov[d] = ((vel_d(p) + vel_d(p - e_d)) / 2) * diu[d]`
//!
//! The combination into a force is the loop-merged formula: terms along the
//! component's own axis are spacing-weighted, the others use plain
//! averages. Both the merged and the two-pass drivers call the same
//! helpers, so their results agree bit for bit.

use super::FlowState;
use crate::field::Field3D;
use crate::sor::Grid;

pub(crate) type P = (usize, usize, usize);

#[inline(always)]
pub(crate) fn coord(p: P, d: usize) -> usize {
    match d {
        0 => p.0,
        1 => p.1,
        _ => p.2,
    }
}

#[inline(always)]
pub(crate) fn plus(p: P, d: usize) -> P {
    match d {
        0 => (p.0 + 1, p.1, p.2),
        1 => (p.0, p.1 + 1, p.2),
        _ => (p.0, p.1, p.2 + 1),
    }
}

#[inline(always)]
pub(crate) fn minus(p: P, d: usize) -> P {
    match d {
        0 => (p.0 - 1, p.1, p.2),
        1 => (p.0, p.1 - 1, p.2),
        _ => (p.0, p.1, p.2 - 1),
    }
}

#[inline(always)]
pub(crate) fn spacing(g: &Grid, d: usize, n: usize) -> f32 {
    match d {
        0 => g.dx1(n),
        1 => g.dy1(n),
        _ => g.dzn(n),
    }
}

pub(crate) type Vel<'a> = [&'a Field3D<f32>; 3];

#[inline(always)]
pub(crate) fn diu(vel: &Vel, g: &Grid, c: usize, d: usize, p: P) -> f32 {
    (vel[c][p] - vel[c][minus(p, d)]) / spacing(g, d, coord(p, d))
}

#[inline(always)]
pub(crate) fn cov(vel: &Vel, g: &Grid, c: usize, d: usize, p: P) -> f32 {
    ((vel[d][p] + vel[d][minus(p, d)]) * 0.5) * diu(vel, g, c, d, p)
}

/// Diffusion term `dfu` of component `c` from `diu` at `p` and at `p + e_d`.
#[inline(always)]
pub(crate) fn dfu(g: &Grid, c: usize, p: P, here: [f32; 3], next: [f32; 3]) -> f32 {
    let mut sum = 0.0f32;
    for d in 0..3 {
        let n = coord(p, d);
        sum += if d == c {
            let (a, b) = (spacing(g, d, n), spacing(g, d, n + 1));
            2.0 * (-here[d] + next[d]) / (a + b)
        } else {
            (-here[d] + next[d]) / spacing(g, d, n)
        };
    }
    sum
}

/// Advection term `covc` of component `c` from `cov` at `p` and at `p + e_d`.
#[inline(always)]
pub(crate) fn covc(g: &Grid, c: usize, p: P, here: [f32; 3], next: [f32; 3]) -> f32 {
    let mut sum = 0.0f32;
    for d in 0..3 {
        let n = coord(p, d);
        sum += if d == c {
            let (a, b) = (spacing(g, d, n), spacing(g, d, n + 1));
            (b * here[d] + a * next[d]) / (a + b)
        } else {
            (here[d] + next[d]) / 2.0
        };
    }
    sum
}

#[inline(always)]
fn force(g: &Grid, c: usize, p: P, vn: f32, cov_h: [f32; 3], cov_n: [f32; 3], diu_h: [f32; 3], diu_n: [f32; 3]) -> f32 {
    -covc(g, c, p, cov_h, cov_n) + vn * dfu(g, c, p, diu_h, diu_n)
}

/// `diu` of component `c` at `p` and at each `p + e_d`.
#[inline(always)]
pub(crate) fn diu_pair(vel: &Vel, g: &Grid, c: usize, p: P) -> ([f32; 3], [f32; 3]) {
    let here = [diu(vel, g, c, 0, p), diu(vel, g, c, 1, p), diu(vel, g, c, 2, p)];
    let next = [
        diu(vel, g, c, 0, plus(p, 0)),
        diu(vel, g, c, 1, plus(p, 1)),
        diu(vel, g, c, 2, plus(p, 2)),
    ];
    (here, next)
}

/// Materialised `cov` and `diu` of one momentum component over
/// `1..=n + 1` on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilPair {
    pub cov: Field3D<[f32; 3]>,
    pub diu: Field3D<[f32; 3]>,
}

impl StencilPair {
    pub fn compute(state: &FlowState, c: usize) -> Self {
        let g = &state.grid;
        let vel = state.velocity_triplet();
        let (im, jm, km) = g.dims();
        let mut cov_f = Field3D::<[f32; 3]>::new(im, jm, km);
        let mut diu_f = Field3D::<[f32; 3]>::new(im, jm, km);
        for k in 1..=km + 1 {
            for j in 1..=jm + 1 {
                for i in 1..=im + 1 {
                    let p = (i, j, k);
                    cov_f[p] = [cov(&vel, g, c, 0, p), cov(&vel, g, c, 1, p), cov(&vel, g, c, 2, p)];
                    diu_f[p] = [diu(&vel, g, c, 0, p), diu(&vel, g, c, 1, p), diu(&vel, g, c, 2, p)];
                }
            }
        }
        Self { cov: cov_f, diu: diu_f }
    }

    pub fn is_finite(&self) -> bool {
        self.cov.all_finite() && self.diu.all_finite()
    }
}

/// Single pass: neighbour values of `cov` and `diu` are recomputed per
/// point and the local force is written once.
pub fn velfg_merged(state: &mut FlowState) {
    let g = &state.grid;
    let vel = [&state.u, &state.v, &state.w];
    let vn = state.params.vn;
    let (im, jm, km) = g.dims();
    for k in 1..=km {
        for j in 1..=jm {
            for i in 1..=im {
                let p = (i, j, k);
                let mut local = [0.0f32; 3];
                for (c, out) in local.iter_mut().enumerate() {
                    let cov_h = [cov(&vel, g, c, 0, p), cov(&vel, g, c, 1, p), cov(&vel, g, c, 2, p)];
                    let cov_n = [
                        cov(&vel, g, c, 0, plus(p, 0)),
                        cov(&vel, g, c, 1, plus(p, 1)),
                        cov(&vel, g, c, 2, plus(p, 2)),
                    ];
                    let (diu_h, diu_n) = diu_pair(&vel, g, c, p);
                    *out = force(g, c, p, vn, cov_h, cov_n, diu_h, diu_n);
                }
                state.fgh[p] = local;
            }
        }
    }
}

/// Reference form: full `cov`/`diu` fields first, then the combination.
pub fn velfg_twopass(state: &mut FlowState) {
    let pairs = [StencilPair::compute(state, 0), StencilPair::compute(state, 1), StencilPair::compute(state, 2)];
    let g = &state.grid;
    let vn = state.params.vn;
    let (im, jm, km) = g.dims();
    for k in 1..=km {
        for j in 1..=jm {
            for i in 1..=im {
                let p = (i, j, k);
                for (c, sp) in pairs.iter().enumerate() {
                    let pick = |f: &Field3D<[f32; 3]>| {
                        let here = f[p];
                        let next = [f[plus(p, 0)][0], f[plus(p, 1)][1], f[plus(p, 2)][2]];
                        (here, next)
                    };
                    let (cov_h, cov_n) = pick(&sp.cov);
                    let (diu_h, diu_n) = pick(&sp.diu);
                    state.fgh[p][c] = force(g, c, p, vn, cov_h, cov_n, diu_h, diu_n);
                }
            }
        }
    }
}
