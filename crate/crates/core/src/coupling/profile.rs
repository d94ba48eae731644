//! Vertical wind profiles exchanged between the driver and the LES, and the
//! two-profile history the consumer interpolates from.

use serde::{Deserialize, Serialize};

use super::CouplingError;

/// Per-level `(u, v, w)` in m/s, stamped with the microstep it is valid at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindProfile {
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub w: Vec<f32>,
    pub t: u64,
}

impl WindProfile {
    pub fn new(u: Vec<f32>, v: Vec<f32>, w: Vec<f32>, t: u64) -> Result<Self, CouplingError> {
        if u.is_empty() {
            return Err(CouplingError::Shape("wind profile needs at least one level".into()));
        }
        if v.len() != u.len() || w.len() != u.len() {
            return Err(CouplingError::Shape(format!(
                "component lengths differ: u={} v={} w={}",
                u.len(),
                v.len(),
                w.len()
            )));
        }
        Ok(Self { u, v, w, t })
    }

    /// All three components equal to zero on `kp` levels.
    pub fn calm(kp: usize, t: u64) -> Self {
        Self { u: vec![0.0; kp], v: vec![0.0; kp], w: vec![0.0; kp], t }
    }

    #[inline]
    pub fn levels(&self) -> usize {
        self.u.len()
    }
}

/// The last two profiles received, oldest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindProfileSeries {
    prev: Option<WindProfile>,
    next: Option<WindProfile>,
    count_received: u64,
}

impl WindProfileSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shifts the history: `prev ← next`, `next ← profile`.
    pub fn push(&mut self, profile: WindProfile) -> Result<(), CouplingError> {
        if let Some(next) = &self.next {
            if profile.t <= next.t {
                return Err(CouplingError::Protocol(format!(
                    "profile at t={} does not follow the latest one at t={}",
                    profile.t, next.t
                )));
            }
            if profile.levels() != next.levels() {
                return Err(CouplingError::Shape(format!(
                    "profile has {} levels, history has {}",
                    profile.levels(),
                    next.levels()
                )));
            }
        }
        self.prev = self.next.take();
        self.next = Some(profile);
        self.count_received += 1;
        Ok(())
    }

    pub fn prev(&self) -> Option<&WindProfile> {
        self.prev.as_ref()
    }

    /// The most recently received profile.
    pub fn latest(&self) -> Option<&WindProfile> {
        self.next.as_ref()
    }

    pub fn count_received(&self) -> u64 {
        self.count_received
    }

    pub fn can_interpolate(&self) -> bool {
        self.count_received >= 2
    }

    /// Linear-in-time interpolation between the two stored profiles.
    ///
    /// The endpoints are returned bitwise. Interior instants are evaluated in
    /// double precision and rounded once per element.
    pub fn interpolate(&self, t: u64) -> Result<WindProfile, CouplingError> {
        let (prev, next) = match (&self.prev, &self.next) {
            (Some(p), Some(n)) if self.can_interpolate() => (p, n),
            _ => return Err(CouplingError::InterpolationGuard { received: self.count_received }),
        };
        if t < prev.t || t > next.t {
            return Err(CouplingError::OutOfRange { t, start: prev.t, end: next.t });
        }
        if t == prev.t {
            return Ok(prev.clone());
        }
        if t == next.t {
            return Ok(next.clone());
        }
        let alpha = (t - prev.t) as f64 / (next.t - prev.t) as f64;
        let lerp = |a: &[f32], b: &[f32]| -> Vec<f32> {
            a.iter()
                .zip(b)
                .map(|(&x0, &x1)| (x0 as f64 + alpha * (x1 as f64 - x0 as f64)) as f32)
                .collect()
        };
        Ok(WindProfile {
            u: lerp(&prev.u, &next.u),
            v: lerp(&prev.v, &next.v),
            w: lerp(&prev.w, &next.w),
            t,
        })
    }
}

/// Free-function form of [`WindProfileSeries::interpolate`].
pub fn interpolate_profile(series: &WindProfileSeries, t: u64) -> Result<WindProfile, CouplingError> {
    series.interpolate(t)
}
