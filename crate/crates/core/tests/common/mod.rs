#![allow(dead_code)]

use gmcf_mini::field::Field3D;
use gmcf_mini::sor::{build_uniform_coeffs, Grid, SorCoeffs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Lower band of a symmetric positive definite banded matrix, factorised in
/// place. Row `r` stores entries `(r, r - d)` for `d` in `0..=bw`.
struct Banded {
    n: usize,
    bw: usize,
    a: Vec<f64>,
}

impl Banded {
    fn new(n: usize, bw: usize) -> Self {
        Self { n, bw, a: vec![0.0; n * (bw + 1)] }
    }

    fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(c <= r && r - c <= self.bw);
        &mut self.a[r * (self.bw + 1) + (r - c)]
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        if c > r || r - c > self.bw {
            0.0
        } else {
            self.a[r * (self.bw + 1) + (r - c)]
        }
    }

    fn cholesky(&mut self) {
        for j in 0..self.n {
            let lo = j.saturating_sub(self.bw);
            let mut s = self.get(j, j);
            for k in lo..j {
                s -= self.get(j, k) * self.get(j, k);
            }
            assert!(s > 0.0, "matrix is not positive definite");
            let d = s.sqrt();
            *self.at(j, j) = d;
            for i in j + 1..(j + self.bw + 1).min(self.n) {
                let lo = i.saturating_sub(self.bw);
                let mut s = self.get(i, j);
                for k in lo..j {
                    s -= self.get(i, k) * self.get(j, k);
                }
                *self.at(i, j) = s / d;
            }
        }
    }

    fn solve(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for k in lo..i {
                s -= self.get(i, k) * b[k];
            }
            b[i] = s / self.get(i, i);
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw + 1).min(self.n);
            let mut s = b[i];
            for k in i + 1..hi {
                s -= self.get(k, i) * b[k];
            }
            b[i] = s / self.get(i, i);
        }
    }
}

/// Direct f64 solution of the uniform 7-point system
/// `(Σ p_nb − 6 p) / h² = rhs`, with the halo of `p0` as Dirichlet data.
pub fn direct_solve(p0: &Field3D<f32>, rhs: &Field3D<f32>, h: f64) -> Field3D<f64> {
    let (im, jm, km) = p0.dims();
    let n = im * jm * km;
    let id = |i: usize, j: usize, k: usize| ((k - 1) * jm + (j - 1)) * im + (i - 1);
    let bw = im * jm;
    let mut m = Banded::new(n, bw);
    let mut b = vec![0.0; n];
    let inv = 1.0 / (h * h);
    for k in 1..=km {
        for j in 1..=jm {
            for i in 1..=im {
                let r = id(i, j, k);
                *m.at(r, r) = 6.0 * inv;
                b[r] = -f64::from(rhs[(i, j, k)]);
                let nbs = [(i - 1, j, k), (i + 1, j, k), (i, j - 1, k), (i, j + 1, k), (i, j, k - 1), (i, j, k + 1)];
                for (a, bb, c) in nbs {
                    let interior = (1..=im).contains(&a) && (1..=jm).contains(&bb) && (1..=km).contains(&c);
                    if interior {
                        let q = id(a, bb, c);
                        if q < r {
                            *m.at(r, q) = -inv;
                        }
                    } else {
                        b[r] += f64::from(p0[(a, bb, c)]) * inv;
                    }
                }
            }
        }
    }
    m.cholesky();
    m.solve(&mut b);
    let mut out = Field3D::<f64>::new(im, jm, km);
    for k in 0..=km + 1 {
        for j in 0..=jm + 1 {
            for i in 0..=im + 1 {
                out[(i, j, k)] = f64::from(p0[(i, j, k)]);
            }
        }
    }
    for (i, j, k) in p0.interior().collect::<Vec<_>>() {
        out[(i, j, k)] = b[id(i, j, k)];
    }
    out
}

pub fn max_err(p: &Field3D<f32>, oracle: &Field3D<f64>) -> f64 {
    p.interior().map(|(i, j, k)| (f64::from(p[(i, j, k)]) - oracle[(i, j, k)]).abs()).fold(0.0, f64::max)
}

pub struct Problem {
    pub grid: Grid,
    pub coeffs: SorCoeffs,
    pub p0: Field3D<f32>,
    pub rhs: Field3D<f32>,
    pub h: f64,
}

/// Zero-Dirichlet problem on an n³ unit-spacing grid with rhs uniform in [-1, 1].
pub fn random_problem(n: usize, seed: u64) -> Problem {
    random_problem_dims(n, n, n, seed)
}

pub fn random_problem_dims(im: usize, jm: usize, km: usize, seed: u64) -> Problem {
    let grid = Grid::uniform(im, jm, km, 1.0).unwrap();
    let coeffs = build_uniform_coeffs(&grid).unwrap();
    let mut r = rng(seed);
    let mut rhs = grid.field();
    for (i, j, k) in rhs.interior().collect::<Vec<_>>() {
        rhs[(i, j, k)] = r.gen_range(-1.0f32..=1.0);
    }
    Problem { p0: grid.field(), grid, coeffs, rhs, h: 1.0 }
}

/// p* = sin(πx)sin(πy)sin(πz) on the unit cube with h = 1/(n+1); rhs is the
/// continuous Laplacian −3π²p*.
pub fn manufactured_problem(n: usize) -> (Problem, Field3D<f64>) {
    let h = 1.0 / (n as f64 + 1.0);
    let grid = Grid::uniform(n, n, n, h as f32).unwrap();
    let coeffs = build_uniform_coeffs(&grid).unwrap();
    let pi = std::f64::consts::PI;
    let exact = Field3D::<f64>::from_fn(n, n, n, |i, j, k| {
        (pi * i as f64 * h).sin() * (pi * j as f64 * h).sin() * (pi * k as f64 * h).sin()
    });
    let rhs = exact.map(|v| (-3.0 * pi * pi * v) as f32);
    (Problem { p0: grid.field(), grid, coeffs, rhs, h }, exact)
}

/// Random integer field whose rhs makes it an exact discrete solution under
/// unit spacing: every f32 operation in the update is exact.
pub fn exact_integer_problem(n: usize, seed: u64) -> Problem {
    let grid = Grid::uniform(n, n, n, 1.0).unwrap();
    let coeffs = build_uniform_coeffs(&grid).unwrap();
    let mut r = rng(seed);
    let p = Field3D::<f32>::from_fn(n, n, n, |_, _, _| r.gen_range(-50i32..=50) as f32);
    let mut rhs = grid.field();
    for (i, j, k) in p.interior().collect::<Vec<_>>() {
        let s = p[(i + 1, j, k)] + p[(i - 1, j, k)] + p[(i, j + 1, k)] + p[(i, j - 1, k)] + p[(i, j, k + 1)]
            + p[(i, j, k - 1)];
        rhs[(i, j, k)] = s - 6.0 * p[(i, j, k)];
    }
    Problem { p0: p, grid, coeffs, rhs, h: 1.0 }
}

pub fn test_driver(kp: usize, dz: f64) -> gmcf_mini::driver::DriverConfig {
    let heights = gmcf_mini::driver::DriverConfig::cell_centres(kp, dz);
    gmcf_mini::driver::DriverConfig::new(0.1, 0.1, heights, 0.2, 600.0).unwrap()
}

/// Driver every 60 s, LES every 0.5 s on the 16×16×8 test grid.
pub fn coupled_setup(intervals: u64, mode: gmcf_mini::runtime::ExecutionMode) -> gmcf_mini::scenario::CoupledSetup {
    let grid = Grid::uniform(16, 16, 8, 4.0).unwrap();
    let les = gmcf_mini::les::LesParams::default();
    let mut setup = gmcf_mini::scenario::CoupledSetup::standard(test_driver(8, 4.0), grid, les, 60.0, intervals);
    setup.mode = mode;
    setup
}
