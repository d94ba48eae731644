//! Structured 3-D storage with a one-cell halo.
//!
//! Indices run over `0..=n+1` on every axis; `1..=n` is the interior and the
//! outer layer is the halo that stencil reads fall into. Storage is
//! `i`-fastest with `k` outermost, so a fixed-`k` plane is one contiguous
//! slab. The slab layout is what the parallel twinned sweep partitions on.

use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, PartialEq)]
pub struct Field3D<T = f32> {
    im: usize,
    jm: usize,
    km: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Field3D<T> {
    /// A field over an `im × jm × km` interior, filled with `T::default()`.
    pub fn new(im: usize, jm: usize, km: usize) -> Self {
        Self::filled(im, jm, km, T::default())
    }

    pub fn filled(im: usize, jm: usize, km: usize, value: T) -> Self {
        let len = (im + 2) * (jm + 2) * (km + 2);
        Self { im, jm, km, data: vec![value; len] }
    }

    /// Builds a field by evaluating `f(i, j, k)` at every point, halo included.
    pub fn from_fn(im: usize, jm: usize, km: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut field = Self::new(im, jm, km);
        for k in 0..km + 2 {
            for j in 0..jm + 2 {
                for i in 0..im + 2 {
                    let idx = field.idx(i, j, k);
                    field.data[idx] = f(i, j, k);
                }
            }
        }
        field
    }

    /// Applies `f` to every value, producing a field of another element type.
    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Field3D<U> {
        Field3D {
            im: self.im,
            jm: self.jm,
            km: self.km,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl<T> Field3D<T> {
    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.im, self.jm, self.km)
    }

    #[inline]
    pub fn same_shape<U>(&self, other: &Field3D<U>) -> bool {
        self.dims() == other.dims()
    }

    /// Flat offset of `(i, j, k)`; every index must be in `0..=n+1`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i <= self.im + 1 && j <= self.jm + 1 && k <= self.km + 1);
        (k * (self.jm + 2) + j) * (self.im + 2) + i
    }

    /// Number of elements in one fixed-`k` plane, halo included.
    #[inline]
    pub fn plane_len(&self) -> usize {
        (self.im + 2) * (self.jm + 2)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Iterates interior coordinates in storage order (`k`, then `j`, then `i`).
    pub fn interior(&self) -> impl Iterator<Item = (usize, usize, usize)> {
        let (im, jm, km) = self.dims();
        (1..=km).flat_map(move |k| (1..=jm).flat_map(move |j| (1..=im).map(move |i| (i, j, k))))
    }
}

impl<T> Index<(usize, usize, usize)> for Field3D<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &T {
        &self.data[self.idx(i, j, k)]
    }
}

impl<T> IndexMut<(usize, usize, usize)> for Field3D<T> {
    #[inline]
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut T {
        let idx = self.idx(i, j, k);
        &mut self.data[idx]
    }
}

impl Field3D<f32> {
    /// Largest absolute value over the interior.
    pub fn interior_max_abs(&self) -> f32 {
        self.interior().map(|p| self[p].abs()).fold(0.0, f32::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<const N: usize> Field3D<[f32; N]>
where
    [f32; N]: Default,
{
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// Extracts component `c` as a scalar field.
    pub fn component(&self, c: usize) -> Field3D<f32> {
        self.map(|v| v[c])
    }
}
