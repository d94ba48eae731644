use super::SorError;
use crate::field::Field3D;

/// Interior extents plus per-axis spacings.
///
/// `dx1` has one extra leading entry so that `dx1(i)` and `dx1(i + 1)` are
/// available for every face `i` in `-1..=im + 1`; `dy1` and `dzn` cover the
/// halo-inclusive ranges `0..=jm + 1` and `0..=km + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub im: usize,
    pub jm: usize,
    pub km: usize,
    dx1: Vec<f32>,
    dy1: Vec<f32>,
    dzn: Vec<f32>,
}

impl Grid {
    pub fn new(im: usize, jm: usize, km: usize, dx1: Vec<f32>, dy1: Vec<f32>, dzn: Vec<f32>) -> Result<Self, SorError> {
        if im == 0 || jm == 0 || km == 0 {
            return Err(SorError::Shape(format!("grid {im}x{jm}x{km} has an empty axis")));
        }
        for (name, arr, want) in [("dx1", &dx1, im + 3), ("dy1", &dy1, jm + 2), ("dzn", &dzn, km + 2)] {
            if arr.len() != want {
                return Err(SorError::Shape(format!("{name} has {} entries, expected {want}", arr.len())));
            }
            if let Some(bad) = arr.iter().find(|&&h| !(h > 0.0 && h.is_finite())) {
                return Err(SorError::InvalidArgument(format!("{name} contains non-positive spacing {bad}")));
            }
        }
        Ok(Self { im, jm, km, dx1, dy1, dzn })
    }

    pub fn uniform(im: usize, jm: usize, km: usize, h: f32) -> Result<Self, SorError> {
        Self::new(im, jm, km, vec![h; im + 3], vec![h; jm + 2], vec![h; km + 2])
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.im, self.jm, self.km)
    }

    /// x-spacing at face index `i`; `i = 0` addresses the second stored entry.
    #[inline]
    pub fn dx1(&self, i: usize) -> f32 {
        self.dx1[i + 1]
    }

    #[inline]
    pub fn dy1(&self, j: usize) -> f32 {
        self.dy1[j]
    }

    #[inline]
    pub fn dzn(&self, k: usize) -> f32 {
        self.dzn[k]
    }

    /// The common spacing if every entry on every axis is identical.
    pub fn uniform_spacing(&self) -> Option<f32> {
        let h = self.dx1[0];
        let all = self.dx1.iter().chain(&self.dy1).chain(&self.dzn);
        all.into_iter().all(|&x| x == h).then_some(h)
    }

    pub fn field(&self) -> Field3D<f32> {
        Field3D::new(self.im, self.jm, self.km)
    }
}

/// Stencil coefficients of the pressure update.
///
/// `cn1` spans the interior (stored with a halo for uniform indexing); the
/// axis arrays are indexed by the 1-based interior index. With
/// `periodic_y` the solver refreshes the y halo rows from the opposite
/// interior rows after every pass; otherwise the halo is held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SorCoeffs {
    pub cn1: Field3D<f32>,
    cn2l: Vec<f32>,
    cn2s: Vec<f32>,
    cn3l: Vec<f32>,
    cn3s: Vec<f32>,
    cn4l: Vec<f32>,
    cn4s: Vec<f32>,
    periodic_y: bool,
}

/// Per-axis neighbour weights, `(l, s)` pairs of arrays for x, y and z.
pub struct AxisCoeffs {
    pub cn2l: Vec<f32>,
    pub cn2s: Vec<f32>,
    pub cn3l: Vec<f32>,
    pub cn3s: Vec<f32>,
    pub cn4l: Vec<f32>,
    pub cn4s: Vec<f32>,
}

impl SorCoeffs {
    pub fn from_parts(cn1: Field3D<f32>, axes: AxisCoeffs, periodic_y: bool) -> Result<Self, SorError> {
        let (im, jm, km) = cn1.dims();
        let lens = [
            ("cn2l", axes.cn2l.len(), im),
            ("cn2s", axes.cn2s.len(), im),
            ("cn3l", axes.cn3l.len(), jm),
            ("cn3s", axes.cn3s.len(), jm),
            ("cn4l", axes.cn4l.len(), km),
            ("cn4s", axes.cn4s.len(), km),
        ];
        if let Some((name, got, want)) = lens.into_iter().find(|(_, got, want)| got != want) {
            return Err(SorError::Shape(format!("{name} has {got} entries, expected {want}")));
        }
        if cn1.interior().any(|c| !(cn1[c] > 0.0 && cn1[c].is_finite())) {
            return Err(SorError::InvalidArgument("cn1 must be positive and finite".into()));
        }
        Ok(Self {
            cn1,
            cn2l: axes.cn2l,
            cn2s: axes.cn2s,
            cn3l: axes.cn3l,
            cn3s: axes.cn3s,
            cn4l: axes.cn4l,
            cn4s: axes.cn4s,
            periodic_y,
        })
    }

    pub fn periodic_y(&self) -> bool {
        self.periodic_y
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.cn1.dims()
    }

    #[inline]
    pub fn cn2l(&self, i: usize) -> f32 {
        self.cn2l[i - 1]
    }
    #[inline]
    pub fn cn2s(&self, i: usize) -> f32 {
        self.cn2s[i - 1]
    }
    #[inline]
    pub fn cn3l(&self, j: usize) -> f32 {
        self.cn3l[j - 1]
    }
    #[inline]
    pub fn cn3s(&self, j: usize) -> f32 {
        self.cn3s[j - 1]
    }
    #[inline]
    pub fn cn4l(&self, k: usize) -> f32 {
        self.cn4l[k - 1]
    }
    #[inline]
    pub fn cn4s(&self, k: usize) -> f32 {
        self.cn4s[k - 1]
    }
}

/// Coefficients of the 7-point Laplacian average on a uniform grid:
/// every neighbour weight is `1/h²` and `cn1 = h²/6`.
pub fn build_uniform_coeffs(grid: &Grid) -> Result<SorCoeffs, SorError> {
    let h = grid
        .uniform_spacing()
        .ok_or_else(|| SorError::Unsupported("coefficient builder needs uniform spacing".into()))?;
    let inv = 1.0 / (h * h);
    let (im, jm, km) = grid.dims();
    Ok(SorCoeffs {
        cn1: Field3D::filled(im, jm, km, h * h / 6.0),
        cn2l: vec![inv; im],
        cn2s: vec![inv; im],
        cn3l: vec![inv; jm],
        cn3s: vec![inv; jm],
        cn4l: vec![inv; km],
        cn4s: vec![inv; km],
        periodic_y: false,
    })
}
