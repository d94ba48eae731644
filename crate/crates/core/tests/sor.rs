mod common;

use common::*;
use gmcf_mini::sor::*;
use proptest::prelude::*;

fn converge(pb: &Problem, scheme: Scheme, omega: f32, max_iter: usize, tol: f64) -> (usize, f64) {
    let oracle = direct_solve(&pb.p0, &pb.rhs, pb.h);
    let mut p = pb.p0.clone();
    let mut err = f64::INFINITY;
    let chunk = 10;
    let mut done = 0;
    while done < max_iter {
        let (next, _) = solve_pressure(&p, &pb.rhs, &pb.coeffs, omega, chunk, scheme, 1).unwrap();
        p = next;
        done += chunk;
        err = max_err(&p, &oracle);
        if err < tol {
            break;
        }
    }
    (done, err)
}

#[test]
fn redblack_reaches_the_direct_solution() {
    for n in [8, 16] {
        for omega in [1.0, 1.7] {
            let pb = random_problem(n, 11);
            let (iters, err) = converge(&pb, Scheme::RedBlack, omega, 500, 1e-5);
            assert!(err < 1e-4, "n={n} omega={omega}: err {err} after {iters}");
        }
    }
}

#[test]
fn twinned_reaches_the_direct_solution() {
    for n in [8, 16] {
        let pb = random_problem(n, 12);
        let (iters, err) = converge(&pb, Scheme::Twinned, 1.0, 2000, 1e-5);
        assert!(err < 1e-4, "n={n}: err {err} after {iters}");
    }
}

#[test]
fn twinned_agrees_with_converged_redblack() {
    let pb = random_problem(8, 3);
    let (rb, _) = solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, 1.7, 300, Scheme::RedBlack, 1).unwrap();
    let (tw, _) = solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, 1.0, 200, Scheme::Twinned, 1).unwrap();
    let diff = rb.interior().map(|c| (rb[c] - tw[c]).abs()).fold(0.0f32, f32::max);
    assert!(diff < 1e-4, "max diff {diff}");
}

#[test]
fn residuals_decrease_with_unit_omega() {
    let (pb, _) = manufactured_problem(8);
    for scheme in [Scheme::RedBlack, Scheme::Twinned] {
        let (_, res) = solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, 1.0, 50, scheme, 1).unwrap();
        assert_eq!(res.len(), 50);
        for w in res[1..].windows(2) {
            assert!(w[1] < w[0], "{scheme}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn manufactured_solution_is_recovered_to_second_order() {
    let mut errs = Vec::new();
    for n in [7, 15] {
        let (pb, exact) = manufactured_problem(n);
        let (p, _) = solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, 1.7, 400, Scheme::RedBlack, 1).unwrap();
        let err = max_err(&p, &exact);
        errs.push(err);
    }
    // halving h should cut the discretisation error by about four
    let ratio = errs[0] / errs[1];
    assert!(errs[1] < 5e-3, "errors {errs:?}");
    assert!((3.0..5.5).contains(&ratio), "ratio {ratio}, errors {errs:?}");
}

#[test]
fn exact_discrete_solution_gives_zero_residual() {
    let pb = exact_integer_problem(8, 5);
    for scheme in [Scheme::RedBlack, Scheme::Twinned] {
        let (p, res) = solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, scheme.default_omega(), 1, scheme, 1).unwrap();
        assert!(res[0] < 1e-12, "{scheme}: {}", res[0]);
        assert_eq!(p, pb.p0);
    }
}

#[test]
fn twinned_is_bitwise_independent_of_workers() {
    let pb = random_problem(16, 7);
    let (p1, r1) = solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, 1.0, 50, Scheme::Twinned, 1).unwrap();
    for workers in [2, 3, 4, 16, 32] {
        let (p, r) = solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, 1.0, 50, Scheme::Twinned, workers).unwrap();
        assert_eq!(p.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   p1.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), "workers={workers}");
        assert_eq!(r, r1, "workers={workers}");
    }
}

#[test]
fn full_solve_matches_repeated_sweeps() {
    let pb = random_problem_dims(5, 4, 6, 9);
    let mut tp = pack_twinned(&pb.p0);
    let mut expected = Vec::new();
    for _ in 0..4 {
        let a = twinned_sweep(&mut tp, &pb.rhs, &pb.coeffs, 1.0, 0).unwrap();
        let b = twinned_sweep(&mut tp, &pb.rhs, &pb.coeffs, 1.0, 1).unwrap();
        expected.push((a, b));
    }
    let (p, res) = solve_pressure(&pb.p0, &pb.rhs, &pb.coeffs, 1.0, 4, Scheme::Twinned, 3).unwrap();
    assert_eq!(p, tp.component(0));
    for (r, (a, b)) in res.iter().zip(expected) {
        assert!((r - (a + b)).abs() <= 1e-12 * r.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn twinned_source_component_is_untouched(seed in any::<u64>(), nrd in 0usize..2, n in 1usize..6) {
        let pb = random_problem(n, seed);
        let mut r = rng(seed ^ 0x5eed);
        use rand::Rng;
        let mut tp = pack_twinned(&pb.p0);
        for v in tp.as_mut_slice() {
            *v = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        }
        let before: Vec<u32> = tp.as_slice().iter().map(|v| v[nrd].to_bits()).collect();
        twinned_sweep(&mut tp, &pb.rhs, &pb.coeffs, 1.0, nrd).unwrap();
        let after: Vec<u32> = tp.as_slice().iter().map(|v| v[nrd].to_bits()).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn exact_solutions_are_fixed_points_of_both_schemes(seed in any::<u64>(), n in 1usize..7) {
        let pb = exact_integer_problem(n, seed);
        let mut p = pb.p0.clone();
        prop_assert_eq!(redblack_iteration(&mut p, &pb.rhs, &pb.coeffs, 1.7).unwrap(), 0.0);
        prop_assert_eq!(&p, &pb.p0);
        let mut tp = pack_twinned(&pb.p0);
        prop_assert_eq!(twinned_sweep(&mut tp, &pb.rhs, &pb.coeffs, 1.0, 0).unwrap(), 0.0);
        prop_assert_eq!(tp.component(1), pb.p0);
    }

    #[test]
    fn boundary_decomposition_covers_each_point_once(
        ip in 1usize..=8, jp in 1usize..=8, kp in 1usize..=8, nthreads in 1usize..=64, nunits in 1usize..=16,
    ) {
        let report = audit_boundary(ip, jp, kp, nthreads, nunits).unwrap();
        prop_assert_eq!(report.covered, boundary_range(ip, jp, kp));
        prop_assert_eq!(report.padded_range % (nthreads * nunits), 0);
        prop_assert!(report.padding < nthreads * nunits);
    }

    #[test]
    fn padded_range_is_the_next_multiple(range in 0usize..1_000_000, nthreads in 1usize..=256, nunits in 1usize..=64) {
        let m = nthreads * nunits;
        let p = padded_range(range, nthreads, nunits);
        prop_assert_eq!(p % m, 0);
        prop_assert!(p >= range && p - range < m);
    }
}
