use std::fmt;
use std::str::FromStr;
use std::sync::Barrier;
use std::thread;

use super::{SorCoeffs, SorError};
use crate::field::Field3D;

/// Pressure field whose cells hold two copies, one per sweep buffer.
pub type TwinnedField3D = Field3D<[f32; 2]>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    RedBlack,
    Twinned,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::RedBlack => "redblack",
            Scheme::Twinned => "twinned",
        }
    }

    pub fn default_omega(self) -> f32 {
        match self {
            Scheme::RedBlack => 1.7,
            Scheme::Twinned => 1.0,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = SorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "redblack" | "red-black" => Ok(Scheme::RedBlack),
            "twinned" => Ok(Scheme::Twinned),
            other => Err(SorError::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

pub fn pack_twinned(p: &Field3D<f32>) -> TwinnedField3D {
    p.map(|v| [v, v])
}

fn check_shapes<T, U>(p: &Field3D<T>, rhs: &Field3D<U>, c: &SorCoeffs) -> Result<(), SorError> {
    if !p.same_shape(rhs) || p.dims() != c.dims() {
        return Err(SorError::Shape(format!(
            "p {:?}, rhs {:?}, coefficients {:?}",
            p.dims(),
            rhs.dims(),
            c.dims()
        )));
    }
    Ok(())
}

/// Index strides of the halo-inclusive layout.
#[derive(Clone, Copy)]
struct Layout {
    im: usize,
    jm: usize,
    sy: usize,
    sz: usize,
}

impl Layout {
    fn of<T>(f: &Field3D<T>) -> Self {
        let (im, jm, _) = f.dims();
        Self { im, jm, sy: im + 2, sz: (im + 2) * (jm + 2) }
    }

    #[inline(always)]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        k * self.sz + j * self.sy + i
    }
}

/// The relaxation increment for one cell. `nb` holds p at
/// (i+1, i-1, j+1, j-1, k+1, k-1).
#[inline(always)]
fn reltmp(c: &SorCoeffs, omega: f32, cn1: f32, (i, j, k): (usize, usize, usize), nb: [f32; 6], rhs: f32, p: f32) -> f32 {
    omega
        * (cn1
            * (c.cn2l(i) * nb[0]
                + c.cn2s(i) * nb[1]
                + c.cn3l(j) * nb[2]
                + c.cn3s(j) * nb[3]
                + c.cn4l(k) * nb[4]
                + c.cn4s(k) * nb[5]
                - rhs)
            - p)
}

/// One red-black iteration (both colour passes) in place; returns Σ reltmp².
///
/// Colour `nrd` covers the cells visited by the loop start
/// `i = 1 + mod(k + j + nrd, 2)`, stepping `i` by two. The halo is held fixed,
/// apart from the periodic y rows that are refreshed after each pass.
pub fn redblack_iteration(p: &mut Field3D<f32>, rhs: &Field3D<f32>, c: &SorCoeffs, omega: f32) -> Result<f64, SorError> {
    check_shapes(p, rhs, c)?;
    let l = Layout::of(p);
    let (im, jm, km) = p.dims();
    let cn1 = c.cn1.as_slice();
    let r = rhs.as_slice();
    let a = p.as_mut_slice();
    let mut sor = 0.0f64;
    for nrd in 0..2 {
        for k in 1..=km {
            for j in 1..=jm {
                let mut i = 1 + (k + j + nrd) % 2;
                while i <= im {
                    let n = l.idx(i, j, k);
                    let nb = [a[n + 1], a[n - 1], a[n + l.sy], a[n - l.sy], a[n + l.sz], a[n - l.sz]];
                    let d = reltmp(c, omega, cn1[n], (i, j, k), nb, r[n], a[n]);
                    a[n] += d;
                    sor += f64::from(d) * f64::from(d);
                    i += 2;
                }
            }
        }
        if c.periodic_y() {
            for k in 1..=km {
                for i in 1..=im {
                    a[l.idx(i, 0, k)] = a[l.idx(i, jm, k)];
                    a[l.idx(i, jm + 1, k)] = a[l.idx(i, 1, k)];
                }
            }
        }
    }
    Ok(sor)
}

#[derive(Clone, Copy)]
struct TwinPtr(*mut f32);

// SAFETY: workers only dereference the pointer inside `twinned_plane`, under
// the disjointness rules documented there.
unsafe impl Send for TwinPtr {}
unsafe impl Sync for TwinPtr {}

/// Updates plane `k`: reads component `nrd`, writes component `1 - nrd`.
///
/// # Safety
/// `data` must point to the flattened pairs of a field with layout `l` and
/// at least `k + 2` planes. Concurrent callers must use the same `nrd` and
/// distinct `k`, so that no element is both read and written concurrently.
unsafe fn twinned_plane(
    data: TwinPtr,
    l: Layout,
    rhs: &[f32],
    c: &SorCoeffs,
    omega: f32,
    nrd: usize,
    k: usize,
) -> f64 {
    let src = |n: usize| *data.0.add(2 * n + nrd);
    let cn1 = c.cn1.as_slice();
    let mut sor = 0.0f64;
    for j in 1..=l.jm {
        for i in 1..=l.im {
            let n = l.idx(i, j, k);
            let nb = [src(n + 1), src(n - 1), src(n + l.sy), src(n - l.sy), src(n + l.sz), src(n - l.sz)];
            let old = src(n);
            let d = reltmp(c, omega, cn1[n], (i, j, k), nb, rhs[n], old);
            *data.0.add(2 * n + 1 - nrd) = old + d;
            sor += f64::from(d) * f64::from(d);
        }
    }
    if c.periodic_y() {
        let dst = |n: usize| data.0.add(2 * n + 1 - nrd);
        for i in 1..=l.im {
            *dst(l.idx(i, 0, k)) = *dst(l.idx(i, l.jm, k));
            *dst(l.idx(i, l.jm + 1, k)) = *dst(l.idx(i, 1, k));
        }
    }
    sor
}

/// One full-grid double-buffer sweep; returns Σ reltmp².
pub fn twinned_sweep(
    tp: &mut TwinnedField3D,
    rhs: &Field3D<f32>,
    c: &SorCoeffs,
    omega: f32,
    nrd: usize,
) -> Result<f64, SorError> {
    check_shapes(tp, rhs, c)?;
    if nrd > 1 {
        return Err(SorError::InvalidArgument(format!("nrd must be 0 or 1, got {nrd}")));
    }
    let l = Layout::of(tp);
    let km = tp.dims().2;
    let data = TwinPtr(tp.as_mut_slice().as_mut_ptr().cast::<f32>());
    let mut sor = 0.0;
    for k in 1..=km {
        // SAFETY: single caller, exclusive borrow of `tp` held for the loop.
        sor += unsafe { twinned_plane(data, l, rhs.as_slice(), c, omega, nrd, k) };
    }
    Ok(sor)
}

/// Contiguous k-slabs, as even as possible, one per worker.
fn slabs(km: usize, workers: usize) -> Vec<std::ops::RangeInclusive<usize>> {
    let base = km / workers;
    let extra = km % workers;
    let mut start = 1;
    (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..=start + len - 1;
            start += len;
            r
        })
        .collect()
}

/// Runs `n_iter` double sweeps over k-slabs, one thread per slab, with a
/// barrier after every sweep. Per-plane partial sums are combined in plane
/// order, so the residuals do not depend on the worker count.
fn twinned_solve(
    tp: &mut TwinnedField3D,
    rhs: &Field3D<f32>,
    c: &SorCoeffs,
    omega: f32,
    n_iter: usize,
    workers: usize,
) -> Vec<f64> {
    let l = Layout::of(tp);
    let km = tp.dims().2;
    let workers = workers.min(km);
    let parts = slabs(km, workers);
    let data = TwinPtr(tp.as_mut_slice().as_mut_ptr().cast::<f32>());
    let barrier = Barrier::new(workers);
    let r = rhs.as_slice();
    // partial[(it * 2 + nrd) * km + (k - 1)]
    let mut partial = vec![0.0f64; n_iter * 2 * km];
    thread::scope(|s| {
        let handles: Vec<_> = parts
            .iter()
            .cloned()
            .map(|slab| {
                let barrier = &barrier;
                s.spawn(move || {
                    let mut out = Vec::with_capacity(n_iter * 2 * slab.clone().count());
                    for _ in 0..n_iter {
                        for nrd in 0..2 {
                            for k in slab.clone() {
                                // SAFETY: slabs are disjoint and every worker
                                // runs the same nrd between barriers.
                                out.push(unsafe { twinned_plane(data, l, r, c, omega, nrd, k) });
                            }
                            barrier.wait();
                        }
                    }
                    out
                })
            })
            .collect();
        for (slab, h) in parts.iter().zip(handles) {
            let out = h.join().expect("sor worker panicked");
            let width = slab.clone().count();
            for (n, v) in out.into_iter().enumerate() {
                let sweep = n / width;
                let k = *slab.start() + n % width;
                partial[sweep * km + k - 1] = v;
            }
        }
    });
    partial.chunks(2 * km).map(|planes| planes.iter().sum()).collect()
}

/// Runs `n_iter` iterations of `scheme` from `p0` and returns the final
/// field with the per-iteration residuals Σ reltmp².
pub fn solve_pressure(
    p0: &Field3D<f32>,
    rhs: &Field3D<f32>,
    c: &SorCoeffs,
    omega: f32,
    n_iter: usize,
    scheme: Scheme,
    workers: usize,
) -> Result<(Field3D<f32>, Vec<f64>), SorError> {
    if n_iter == 0 {
        return Err(SorError::InvalidArgument("n_iter must be at least 1".into()));
    }
    if workers == 0 {
        return Err(SorError::InvalidArgument("workers must be at least 1".into()));
    }
    if scheme == Scheme::RedBlack && workers > 1 {
        return Err(SorError::Unsupported(format!("redblack runs on a single worker, got workers={workers}")));
    }
    check_shapes(p0, rhs, c)?;
    match scheme {
        Scheme::RedBlack => {
            let mut p = p0.clone();
            let mut residuals = Vec::with_capacity(n_iter);
            for _ in 0..n_iter {
                residuals.push(redblack_iteration(&mut p, rhs, c, omega)?);
            }
            Ok((p, residuals))
        }
        Scheme::Twinned => {
            let mut tp = pack_twinned(p0);
            let residuals = twinned_solve(&mut tp, rhs, c, omega, n_iter, workers);
            Ok((tp.component(0), residuals))
        }
    }
}
