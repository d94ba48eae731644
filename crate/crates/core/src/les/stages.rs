use super::stencil::{coord, diu_pair, dfu, minus, plus, spacing, P};
use super::{FlowState, LesError};
use crate::coupling::WindProfile;
use crate::field::Field3D;
use crate::sor::{solve_pressure, AxisCoeffs, Grid, Scheme, SorCoeffs, SorError};

/// Distance between the centres of cells `n` and `n + 1` along `d`.
#[inline]
fn centre_gap(g: &Grid, d: usize, n: usize) -> f32 {
    (spacing(g, d, n) + spacing(g, d, n + 1)) / 2.0
}

/// Pressure operator matching `velnw` and `divergence`: no flux through the
/// inflow, ground and lid faces, `p = 0` beyond the outflow, periodic in y.
pub(crate) fn pressure_coeffs(g: &Grid) -> Result<SorCoeffs, SorError> {
    let (im, jm, km) = g.dims();
    let axis = |d: usize, m: usize, closed_low: bool, closed_high: bool| {
        let l: Vec<f32> = (1..=m)
            .map(|n| if closed_high && n == m { 0.0 } else { 1.0 / (spacing(g, d, n) * centre_gap(g, d, n)) })
            .collect();
        let s: Vec<f32> = (1..=m)
            .map(|n| if closed_low && n == 1 { 0.0 } else { 1.0 / (spacing(g, d, n) * centre_gap(g, d, n - 1)) })
            .collect();
        (l, s)
    };
    let (cn2l, cn2s) = axis(0, im, true, false);
    let (cn3l, cn3s) = axis(1, jm, false, false);
    let (cn4l, cn4s) = axis(2, km, true, true);
    let cn1 = Field3D::from_fn(im, jm, km, |i, j, k| {
        let (i, j, k) = (i.clamp(1, im), j.clamp(1, jm), k.clamp(1, km));
        let sum = cn2l[i - 1] + cn2s[i - 1] + cn3l[j - 1] + cn3s[j - 1] + cn4l[k - 1] + cn4s[k - 1];
        1.0 / sum
    });
    SorCoeffs::from_parts(cn1, AxisCoeffs { cn2l, cn2s, cn3l, cn3s, cn4l, cn4s }, true)
}

/// Faces of component `c` advanced by the momentum update. The inflow,
/// ground and lid faces are boundary data; v(j = 0) mirrors v(j = jm).
#[inline]
fn updated_face(c: usize, p: P, km: usize) -> bool {
    c != 2 || coord(p, 2) < km
}

fn copy_periodic_v_face(v: &mut Field3D<f32>) {
    let (im, jm, km) = v.dims();
    for k in 1..=km {
        for i in 1..=im {
            v[(i, 0, k)] = v[(i, jm, k)];
        }
    }
}

/// u += dt·(fgh.x − ∂p/∂x) and likewise for v and w.
pub fn velnw(s: &mut FlowState) {
    let dt = s.params.dt;
    let (im, jm, km) = s.grid.dims();
    for k in 1..=km {
        for j in 1..=jm {
            for i in 1..=im {
                let p = (i, j, k);
                for c in 0..3 {
                    if !updated_face(c, p, km) {
                        continue;
                    }
                    let grad = (s.p[plus(p, c)] - s.p[p]) / centre_gap(&s.grid, c, coord(p, c));
                    let f = s.fgh[p][c];
                    let vel = s.velocity_mut(c);
                    vel[p] += dt * (f - grad);
                }
            }
        }
    }
    copy_periodic_v_face(&mut s.v);
}

/// Halo values: inflow profile on the west, zero-gradient outflow on the
/// east, periodic in y, free slip for u and v and no penetration for w at
/// the ground and lid.
pub fn bondv1(s: &mut FlowState, inflow: &WindProfile) -> Result<(), LesError> {
    let (im, jm, km) = s.grid.dims();
    if inflow.levels() != km {
        return Err(LesError::Shape(format!("inflow has {} levels, grid has {km}", inflow.levels())));
    }
    let levels = [&inflow.u, &inflow.v, &inflow.w];
    for (c, level) in levels.into_iter().enumerate() {
        let f = s.velocity_mut(c);
        for k in 1..=km {
            for j in 0..=jm + 1 {
                f[(0, j, k)] = level[k - 1];
                f[(im + 1, j, k)] = f[(im, j, k)];
            }
        }
        for k in 0..=km + 1 {
            for i in 0..=im + 1 {
                f[(i, 0, k)] = f[(i, jm, k)];
                f[(i, jm + 1, k)] = f[(i, 1, k)];
            }
        }
        for j in 0..=jm + 1 {
            for i in 0..=im + 1 {
                if c == 2 {
                    f[(i, j, 0)] = 0.0;
                    f[(i, j, km + 1)] = 0.0;
                } else {
                    f[(i, j, 0)] = f[(i, j, 1)];
                    f[(i, j, km + 1)] = f[(i, j, km)];
                }
            }
        }
    }
    Ok(())
}

/// Mask seen by the face of component `c` at `p`: the larger of the two
/// cells sharing that face.
#[inline]
pub fn face_mask(mask: &Field3D<f32>, c: usize, p: P) -> f32 {
    mask[p].max(mask[plus(p, c)])
}

/// fgh −= (mask/dt)·(u, v, w), with the mask taken on each velocity face.
pub fn feedbf(s: &mut FlowState) {
    let dt = s.params.dt;
    for p in s.grid.field().interior() {
        for c in 0..3 {
            let m = face_mask(&s.mask, c, p);
            if m == 0.0 {
                continue;
            }
            let vel = s.velocity(c)[p];
            s.fgh[p][c] -= (m / dt) * vel;
        }
    }
}

fn centred_velocity(s: &FlowState, a: usize, q: P) -> f32 {
    let f = s.velocity(a);
    (f[q] + f[minus(q, a)]) * 0.5
}

/// |S| = sqrt(Σ S_ab²) at cell centre `p` from central differences.
pub fn strain_rate_magnitude(s: &FlowState, p: P) -> f32 {
    let g = &s.grid;
    let mut sum = 0.0f32;
    for a in 0..3 {
        let f = s.velocity(a);
        let saa = (f[p] - f[minus(p, a)]) / spacing(g, a, coord(p, a));
        sum += saa * saa;
    }
    let d = |a: usize, b: usize| {
        let n = coord(p, b);
        let gap = centre_gap(g, b, n - 1) + centre_gap(g, b, n);
        (centred_velocity(s, a, plus(p, b)) - centred_velocity(s, a, minus(p, b))) / gap
    };
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let sab = 0.5 * (d(a, b) + d(b, a));
        sum += 2.0 * sab * sab;
    }
    sum.sqrt()
}

/// Smagorinsky eddy viscosity (cs·Δ)²·|S| at cell centres; zero in the halo.
pub fn eddy_viscosity(s: &FlowState) -> Field3D<f32> {
    let g = &s.grid;
    let cs = s.params.cs;
    let mut nu = g.field();
    for p in g.field().interior() {
        let delta = (g.dx1(p.0) * g.dy1(p.1) * g.dzn(p.2)).cbrt();
        nu[p] = (cs * delta) * (cs * delta) * strain_rate_magnitude(s, p);
    }
    nu
}

/// Adds ν_t·dfu to each force component, with ν_t averaged onto the face.
pub fn les_viscosity(s: &mut FlowState) {
    if s.params.cs == 0.0 {
        return;
    }
    let nu = eddy_viscosity(s);
    let (im, jm, km) = s.grid.dims();
    let clamp = |q: P| (q.0.min(im), q.1.min(jm), q.2.min(km));
    for p in s.grid.field().interior() {
        let mut add = [0.0f32; 3];
        for (c, out) in add.iter_mut().enumerate() {
            let nu_face = 0.5 * (nu[p] + nu[clamp(plus(p, c))]);
            if nu_face == 0.0 {
                continue;
            }
            let vel = s.velocity_triplet();
            let (here, next) = diu_pair(&vel, &s.grid, c, p);
            *out = nu_face * dfu(&s.grid, c, p, here, next);
        }
        for c in 0..3 {
            s.fgh[p][c] += add[c];
        }
    }
}

/// Second-order Adams-Bashforth, fgh ← 1.5·fgh − 0.5·fgh_old, evaluated as
/// fgh + 0.5·(fgh − fgh_old) so a constant history is returned unchanged.
/// fgh_old ← the force before the update.
pub fn adam(s: &mut FlowState) {
    for p in s.grid.field().interior() {
        let now = s.fgh[p];
        let old = s.fgh_old[p];
        s.fgh[p] = [0, 1, 2].map(|c| now[c] + 0.5 * (now[c] - old[c]));
        s.fgh_old[p] = now;
    }
}

fn divergence_of(g: &Grid, vel: [&Field3D<f32>; 3]) -> Field3D<f32> {
    let mut div = g.field();
    for p in g.field().interior() {
        let mut sum = 0.0f32;
        for (d, f) in vel.iter().enumerate() {
            sum += (f[p] - f[minus(p, d)]) / spacing(g, d, coord(p, d));
        }
        div[p] = sum;
    }
    div
}

/// Discrete divergence of the current velocity at cell centres.
pub fn divergence(s: &FlowState) -> Field3D<f32> {
    divergence_of(&s.grid, s.velocity_triplet())
}

/// Divergence of u + dt·fgh, the velocity `velnw` would produce with zero
/// pressure.
pub fn provisional_divergence(s: &FlowState) -> Field3D<f32> {
    let dt = s.params.dt;
    let km = s.grid.km;
    let mut star = [s.u.clone(), s.v.clone(), s.w.clone()];
    for p in s.grid.field().interior() {
        for (c, f) in star.iter_mut().enumerate() {
            if updated_face(c, p, km) {
                f[p] += dt * s.fgh[p][c];
            }
        }
    }
    copy_periodic_v_face(&mut star[1]);
    divergence_of(&s.grid, [&star[0], &star[1], &star[2]])
}

/// Solves ∇²p = div(u + dt·fgh)/dt; returns the SOR residual history.
pub fn press(s: &mut FlowState, n_iter: usize, scheme: Scheme) -> Result<Vec<f64>, LesError> {
    let dt = s.params.dt;
    let rhs = provisional_divergence(s).map(|d| d / dt);
    let workers = if scheme == Scheme::Twinned { s.params.pressure.workers } else { 1 };
    let (p, residuals) =
        solve_pressure(&s.p, &rhs, &s.coeffs, s.params.pressure.omega, n_iter, scheme, workers)?;
    s.p = p;
    Ok(residuals)
}
