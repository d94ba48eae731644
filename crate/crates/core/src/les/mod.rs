//! Miniature LES on a staggered grid.
//!
//! Layout: `p` and `mask` live at cell centres `(i, j, k)`; `u(i, j, k)` sits
//! on the x-face between cells `i` and `i + 1`, `v` and `w` likewise on the y-
//! and z-faces. So `u(0, ..)` is the inflow face, `w(.., 0)` the ground and
//! `w(.., km)` the lid, which stays at zero. Pressure is kinematic (unit
//! density).
//!
//! One [`step`] runs velnw, bondv1, velfg, feedbf, les_viscosity, adam and
//! press in that order. The momentum update at the start of a step applies
//! the pressure and force from the end of the previous one.

mod runner;
mod stages;
mod stencil;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::coupling::WindProfile;
use crate::field::Field3D;
use crate::sor::{Grid, Scheme, SorCoeffs, SorError, DEFAULT_N_ITER};

pub use runner::{les_main, IntervalRecord, LesOutcome, LesRunConfig, WIND_PROFILE_ID};
pub use stages::{
    adam, bondv1, divergence, eddy_viscosity, feedbf, les_viscosity, press, provisional_divergence,
    strain_rate_magnitude, velnw,
};
pub use stencil::{velfg_merged, velfg_twopass, StencilPair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LesError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Config(String),
    #[error("non-finite values after stage `{stage}`")]
    Blowup { stage: &'static str },
    #[error(transparent)]
    Solver(#[from] SorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureSettings {
    pub scheme: Scheme,
    pub omega: f32,
    pub n_iter: usize,
    pub workers: usize,
}

impl Default for PressureSettings {
    fn default() -> Self {
        Self { scheme: Scheme::RedBlack, omega: Scheme::RedBlack.default_omega(), n_iter: DEFAULT_N_ITER, workers: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LesParams {
    /// Time step in seconds.
    pub dt: f32,
    /// Molecular viscosity, m²/s.
    pub vn: f32,
    /// Smagorinsky constant.
    pub cs: f32,
    pub pressure: PressureSettings,
}

impl Default for LesParams {
    fn default() -> Self {
        Self { dt: 0.5, vn: 0.05, cs: 0.1, pressure: PressureSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Field3D<f32>,
    pub v: Field3D<f32>,
    pub w: Field3D<f32>,
    pub fgh: Field3D<[f32; 3]>,
    pub fgh_old: Field3D<[f32; 3]>,
    pub p: Field3D<f32>,
    pub mask: Field3D<f32>,
    pub grid: Grid,
    pub params: LesParams,
    coeffs: SorCoeffs,
}

impl FlowState {
    /// Quiescent state: every field zero, no solid cells.
    pub fn new(grid: Grid, params: LesParams) -> Result<Self, LesError> {
        if !(params.dt > 0.0 && params.dt.is_finite()) {
            return Err(LesError::Config(format!("dt must be positive, got {}", params.dt)));
        }
        if !(params.vn >= 0.0 && params.cs >= 0.0) {
            return Err(LesError::Config("vn and cs must be non-negative".into()));
        }
        if params.pressure.n_iter == 0 || params.pressure.workers == 0 {
            return Err(LesError::Config("pressure n_iter and workers must be at least 1".into()));
        }
        let coeffs = stages::pressure_coeffs(&grid)?;
        let (im, jm, km) = grid.dims();
        let zero = grid.field();
        Ok(Self {
            u: zero.clone(),
            v: zero.clone(),
            w: zero.clone(),
            fgh: Field3D::new(im, jm, km),
            fgh_old: Field3D::new(im, jm, km),
            p: zero.clone(),
            mask: zero,
            grid,
            params,
            coeffs,
        })
    }

    /// Marks the cells of an index box (inclusive bounds) as solid.
    pub fn with_block(mut self, lo: (usize, usize, usize), hi: (usize, usize, usize)) -> Result<Self, LesError> {
        let (im, jm, km) = self.grid.dims();
        let ok = lo.0 >= 1 && lo.1 >= 1 && lo.2 >= 1 && hi.0 <= im && hi.1 <= jm && hi.2 <= km;
        if !ok || lo.0 > hi.0 || lo.1 > hi.1 || lo.2 > hi.2 {
            return Err(LesError::Shape(format!("block {lo:?}..={hi:?} is outside the interior")));
        }
        for k in lo.2..=hi.2 {
            for j in lo.1..=hi.1 {
                for i in lo.0..=hi.0 {
                    self.mask[(i, j, k)] = 1.0;
                }
            }
        }
        Ok(self)
    }

    pub fn velocity(&self, c: usize) -> &Field3D<f32> {
        match c {
            0 => &self.u,
            1 => &self.v,
            _ => &self.w,
        }
    }

    pub fn velocity_mut(&mut self, c: usize) -> &mut Field3D<f32> {
        match c {
            0 => &mut self.u,
            1 => &mut self.v,
            _ => &mut self.w,
        }
    }

    pub fn velocity_triplet(&self) -> [&Field3D<f32>; 3] {
        [&self.u, &self.v, &self.w]
    }

    pub fn pressure_coeffs(&self) -> &SorCoeffs {
        &self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.u.all_finite()
            && self.v.all_finite()
            && self.w.all_finite()
            && self.fgh.all_finite()
            && self.fgh_old.all_finite()
            && self.p.all_finite()
    }

    /// Adds uniform noise in `[-amplitude, amplitude]` to every velocity
    /// face the momentum update advances, drawn from a seeded generator.
    pub fn perturb(&mut self, seed: u64, amplitude: f32) {
        if amplitude == 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (im, jm, km) = self.grid.dims();
        for c in 0..3 {
            let f = self.velocity_mut(c);
            for k in 1..=km {
                for j in 1..=jm {
                    for i in 1..=im {
                        if c == 2 && k == km {
                            continue;
                        }
                        f[(i, j, k)] += rng.gen_range(-amplitude..=amplitude);
                    }
                }
            }
            if c == 1 {
                for k in 1..=km {
                    for i in 1..=im {
                        f[(i, 0, k)] = f[(i, jm, k)];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub residuals: Vec<f64>,
}

fn ensure(ok: bool, stage: &'static str) -> Result<(), LesError> {
    if ok {
        Ok(())
    } else {
        Err(LesError::Blowup { stage })
    }
}

fn velocity_finite(s: &FlowState) -> bool {
    s.u.all_finite() && s.v.all_finite() && s.w.all_finite()
}

/// Advances the state by one time step with `inflow` on the west face.
pub fn step(s: &mut FlowState, inflow: &WindProfile) -> Result<StepReport, LesError> {
    velnw(s);
    ensure(velocity_finite(s), "velnw")?;
    bondv1(s, inflow)?;
    ensure(velocity_finite(s), "bondv1")?;
    velfg_merged(s);
    ensure(s.fgh.all_finite(), "velfg")?;
    feedbf(s);
    ensure(s.fgh.all_finite(), "feedbf")?;
    les_viscosity(s);
    ensure(s.fgh.all_finite(), "les")?;
    adam(s);
    ensure(s.fgh.all_finite(), "adam")?;
    let pressure = s.params.pressure;
    let residuals = press(s, pressure.n_iter, pressure.scheme)?;
    ensure(s.p.all_finite(), "press")?;
    Ok(StepReport { residuals })
}
