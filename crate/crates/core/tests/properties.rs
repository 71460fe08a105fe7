//! Randomized invariants over the kernel, solver, and estimation layers.

mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use stlmm::kernels::{spatial_correlation, CorrelationModel, KernelKind};
use stlmm::{neg2_reml, solve_observed, Error, ModelTheta, Site, ThetaPS};

fn kernel_kind() -> impl Strategy<Value = KernelKind> {
    prop_oneof![
        Just(KernelKind::Exponential),
        Just(KernelKind::Spherical),
        Just(KernelKind::Gaussian),
    ]
}

/// Sites on a jittered grid, so no two points come closer than about a
/// fifth of the kernel range. The smooth kernels lose positive definiteness
/// to rounding when points nearly coincide, which is a property of the
/// models, not of the code under test.
fn spread_sites(n: usize, range: f64, seed: u64) -> Vec<Site> {
    let mut rng = rand::rngs::mock::StepRng::new(seed, 0xa5a5a5a5a5a5a5a5);
    let side = (n as f64).sqrt().ceil() as usize;
    let spacing = 0.4 * range;
    (0..n)
        .map(|i| {
            let mut jitter = || (rng.next_u64() % 1000) as f64 / 1000.0 * 0.3 * spacing;
            Site::new(
                (i % side) as f64 * spacing + jitter(),
                (i / side) as f64 * spacing + jitter(),
            )
        })
        .collect()
}

use rand::RngCore;

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn correlation_matrices_stay_positive_definite(
        kind in kernel_kind(),
        n in 2usize..16,
        range in 0.5f64..10.0,
        seed in 0u64..1000,
    ) {
        let model = CorrelationModel::new(kind, range).unwrap();
        let sites = spread_sites(n, range, seed);
        let r = spatial_correlation(&model, &sites).unwrap();
        let min_eig = r
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &e| m.min(e));
        prop_assert!(
            min_eig > -1e-10,
            "minimum eigenvalue {min_eig} for {kind:?} range {range}"
        );
        for i in 0..n {
            prop_assert_eq!(r[(i, i)], 1.0);
            for j in 0..n {
                prop_assert!((r[(i, j)] - r[(j, i)]).abs() == 0.0);
            }
        }
    }

    #[test]
    fn correlations_are_bounded_and_start_at_one(
        kind in kernel_kind(),
        range in 0.1f64..100.0,
        h in 0.0f64..500.0,
    ) {
        let model = CorrelationModel::new(kind, range).unwrap();
        let c = model.correlate(h).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert_eq!(model.correlate(0.0).unwrap(), 1.0);
    }

    #[test]
    fn correlations_never_increase_with_distance(
        kind in kernel_kind(),
        range in 0.1f64..100.0,
        h1 in 0.0f64..500.0,
        h2 in 0.0f64..500.0,
    ) {
        let model = CorrelationModel::new(kind, range).unwrap();
        let (near, far) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
        prop_assert!(
            model.correlate(near).unwrap() >= model.correlate(far).unwrap(),
            "{kind:?} increases between {near} and {far}"
        );
    }

    #[test]
    fn covariance_respects_site_relabeling(
        v in proptest::array::uniform6(0.1f64..20.0),
        seed in 0u64..500,
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        let spatial = CorrelationModel::exponential(2.0).unwrap();
        let temporal = CorrelationModel::exponential(4.0).unwrap();
        let theta =
            ThetaPS::new(v[0], v[1], v[2], v[3], v[4], v[5], spatial, temporal).unwrap();
        let model = ModelTheta::ProductSum(theta);

        let base = random_design(6, 4, 0.0, seed);
        let s = base.s();
        let mut perm: Vec<usize> = (0..s).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(77));
        perm.shuffle(&mut rng);

        // new_sites[perm[i]] = old_sites[i]: site i moves to slot perm[i].
        let mut new_sites = vec![Site::new(0.0, 0.0); s];
        for (i, &p) in perm.iter().enumerate() {
            new_sites[p] = base.sites()[i];
        }
        let relabeled =
            stlmm::StDesign::full_grid(new_sites, base.times().to_vec()).unwrap();

        let sigma = stlmm::covariance::dense_cov(&model, &base).unwrap();
        let sigma_p = stlmm::covariance::dense_cov(&model, &relabeled).unwrap();
        let cell = |site: usize, time: usize| time * s + site;
        for a in 0..base.n_cells() {
            for b in 0..base.n_cells() {
                let a_p = cell(perm[base.site_of(a)], base.time_of(a));
                let b_p = cell(perm[base.site_of(b)], base.time_of(b));
                prop_assert!(
                    (sigma[(a, b)] - sigma_p[(a_p, b_p)]).abs() <= 1e-12,
                    "entry ({a}, {b}) moved under site relabeling"
                );
            }
        }
    }

    #[test]
    fn structured_and_dense_solves_agree_on_random_parameters(
        v in proptest::array::uniform6(0.01f64..40.0),
        kappa in 0.5f64..6.0,
        phi in 1.0f64..12.0,
        seed in 0u64..500,
    ) {
        let spatial = CorrelationModel::exponential(kappa).unwrap();
        let temporal = CorrelationModel::exponential(phi).unwrap();
        let theta =
            ThetaPS::new(v[0], v[1], v[2], v[3], v[4], v[5], spatial, temporal).unwrap();
        let design = random_design(7, 6, 0.15, seed);
        let rhs = random_matrix(design.n_observed(), 2, seed.wrapping_add(7000));

        let fast = solve_observed(&ModelTheta::ProductSum(theta), &design, &rhs).unwrap();
        let sigma = oracle_ps_observed(&theta, &design);
        let dense = stlmm::fastsolve::dense_solve(&sigma, &rhs).unwrap();

        prop_assert!(
            rel_diff(&fast.solution, &dense.solution) <= 1e-8,
            "solution drift {:e}",
            rel_diff(&fast.solution, &dense.solution)
        );
        let logdet = oracle_logdet(&sigma);
        prop_assert!(
            (fast.logdet - logdet).abs() <= 1e-8 * logdet.abs().max(1.0),
            "logdet {} vs {}",
            fast.logdet,
            logdet
        );
    }

    #[test]
    fn restricted_likelihood_ignores_fixed_effect_shifts(
        shift in proptest::array::uniform3(-50.0f64..50.0),
        seed in 0u64..300,
    ) {
        let design = random_design(6, 5, 0.1, seed);
        let n = design.n_observed();
        let mut x = random_matrix(n, 3, seed.wrapping_add(41));
        for i in 0..n {
            x[(i, 0)] = 1.0;
        }
        let y = random_vector(n, seed.wrapping_add(42));
        let theta = stlmm::harness::variance_config("vc3").unwrap().theta;
        let model = ModelTheta::ProductSum(theta);

        let c = DVector::from_column_slice(&shift);
        let shifted = &y + &x * &c;
        let a = neg2_reml(&model, &design, &x, &y).unwrap();
        let b = neg2_reml(&model, &design, &x, &shifted).unwrap();
        prop_assert!(
            (a - b).abs() <= 1e-8 * a.abs().max(1.0),
            "objective moved from {a} to {b} under a fixed-effect shift"
        );
    }

    #[test]
    fn theoretical_semivariogram_is_bounded_by_the_sill(
        v in proptest::array::uniform6(0.0f64..20.0),
        h_s in 0.0f64..50.0,
        h_t in 0.0f64..50.0,
    ) {
        prop_assume!(v.iter().sum::<f64>() > 1e-6);
        let spatial = CorrelationModel::spherical(2.0).unwrap();
        let temporal = CorrelationModel::exponential(5.0).unwrap();
        let theta = match ThetaPS::new(v[0], v[1], v[2], v[3], v[4], v[5], spatial, temporal) {
            Ok(t) => t,
            Err(Error::InvalidArgument(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        let model = ModelTheta::ProductSum(theta);
        let g = model.theoretical_sv(h_s, h_t).unwrap();
        let total = theta.total_variance();
        prop_assert!(g >= 0.0);
        prop_assert!(g <= total * (1.0 + 1e-12));
        prop_assert_eq!(model.theoretical_sv(0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn profiled_scale_tracks_response_rescaling(
        c in 0.1f64..30.0,
        seed in 0u64..300,
    ) {
        let design = random_design(6, 5, 0.1, seed);
        let n = design.n_observed();
        let mut x = random_matrix(n, 2, seed.wrapping_add(11));
        for i in 0..n {
            x[(i, 0)] = 1.0;
        }
        let y = random_vector(n, seed.wrapping_add(12));
        let unit = ThetaPS::new(
            0.2, 0.1, 0.15, 0.05, 0.3, 0.2,
            CorrelationModel::exponential(2.0).unwrap(),
            CorrelationModel::exponential(4.0).unwrap(),
        )
        .unwrap();
        let model = ModelTheta::ProductSum(unit);

        let (scale, profiled) = stlmm::profile_variance(&model, &design, &x, &y).unwrap();
        let (scale_c, profiled_c) =
            stlmm::profile_variance(&model, &design, &x, &(&y * c)).unwrap();
        let dof = (n - x.ncols()) as f64;
        prop_assert!(
            (scale_c - c * c * scale).abs() <= 1e-8 * scale_c.abs(),
            "scale {scale_c} vs {}",
            c * c * scale
        );
        prop_assert!(
            (profiled_c - (profiled + dof * (c * c).ln())).abs()
                <= 1e-8 * profiled_c.abs().max(1.0),
            "profiled objective off under rescaling"
        );
    }

    #[test]
    fn empirical_semivariogram_ignores_shift_and_sign(
        shift in -40.0f64..40.0,
        seed in 0u64..300,
    ) {
        let design = random_design(7, 6, 0.2, seed);
        let r = random_vector(design.n_observed(), seed.wrapping_add(5));
        let bins = stlmm::BinsSpec::default();

        let base = stlmm::empirical_sv(&design, &r, &bins).unwrap();
        let shifted = stlmm::empirical_sv(&design, &r.add_scalar(shift), &bins).unwrap();
        let flipped = stlmm::empirical_sv(&design, &(-&r), &bins).unwrap();
        for (si, ti, count, gamma) in base.nonempty() {
            prop_assert_eq!(shifted.count(si, ti), count);
            prop_assert!((shifted.gamma(si, ti) - gamma).abs() <= 1e-9 * gamma.max(1.0));
            prop_assert!((flipped.gamma(si, ti) - gamma).abs() <= 1e-9 * gamma.max(1.0));
        }
    }

    #[test]
    fn simplex_history_is_monotone_on_random_quadratics(
        center in proptest::array::uniform3(-5.0f64..5.0),
        scale in proptest::array::uniform3(0.1f64..10.0),
        start in proptest::array::uniform3(-8.0f64..8.0),
    ) {
        let nm = stlmm::simplex::NelderMead::default();
        let result = nm.minimize(
            |x: &[f64]| {
                (0..3)
                    .map(|i| scale[i] * (x[i] - center[i]).powi(2))
                    .sum::<f64>()
            },
            &start,
        );
        for w in result.best_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-15);
        }
        for (i, (xi, ci)) in result.x.iter().zip(center).enumerate() {
            prop_assert!(
                (xi - ci).abs() <= 1e-2,
                "coordinate {i}: {xi} vs {ci}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    /// With no nugget anywhere, prediction at a cell that nearly duplicates
    /// an observed one reproduces that observation, with vanishing variance.
    #[test]
    fn blup_reproduces_a_nearly_duplicated_observation(seed in 0u64..200) {
        use nalgebra::DMatrix;
        use stlmm::estimate::FitTiming;
        use stlmm::{blup, FitResult, ThetaSep};

        let spatial = CorrelationModel::exponential(2.0).unwrap();
        let temporal = CorrelationModel::exponential(4.0).unwrap();
        let smooth = ThetaSep::new(4.0, 0.0, 0.0, spatial, temporal).unwrap();
        let model = ModelTheta::Separable(smooth);

        let mut sites = spread_sites(8, 2.0, seed);
        let twin = Site::new(sites[0].x + 1e-7, sites[0].y);
        sites.push(twin);
        let times: Vec<f64> = (1..=4).map(|j| j as f64).collect();
        let s = sites.len();
        let n = s * times.len();
        // The twin site is never observed, so the observed block stays well
        // conditioned while the target cell duplicates an observed one.
        let mut observed = vec![true; n];
        for j in 0..times.len() {
            observed[j * s + (s - 1)] = false;
        }
        let target = s + (s - 1);
        let design = stlmm::StDesign::new(sites, times, observed).unwrap();

        let n_o = design.n_observed();
        let y = random_vector(n_o, seed.wrapping_add(3));
        let x = DMatrix::from_element(n_o, 1, 1.0);
        let mut xy = DMatrix::zeros(n_o, 2);
        xy.column_mut(0).copy_from(&x.column(0));
        xy.column_mut(1).copy_from(&y);
        let solve = solve_observed(&model, &design, &xy).unwrap();
        let xtsix = x.column(0).dot(&solve.solution.column(0));
        let xtsiy = x.column(0).dot(&solve.solution.column(1));
        let fit = FitResult {
            model,
            beta: DVector::from_element(1, xtsiy / xtsix),
            cov_beta: DMatrix::from_element(1, 1, 1.0 / xtsix),
            objective: 0.0,
            converged: true,
            iterations: 0,
            evaluations: 0,
            n_obs: n_o,
            timing: FitTiming::default(),
        };

        let x_target = DMatrix::from_element(1, 1, 1.0);
        let got = blup(&fit, &design, &x, &y, &x_target, &[target]).unwrap();

        let near_cell = s;
        let near_row = design
            .observed_cells()
            .iter()
            .position(|&c| c == near_cell)
            .unwrap();
        prop_assert!(
            (got.predictions[0] - y[near_row]).abs() <= 1e-3,
            "prediction {} vs duplicated observation {}",
            got.predictions[0],
            y[near_row]
        );
        prop_assert!(got.variances[0] >= -1e-10);
        prop_assert!(
            got.variances[0] <= 1e-3,
            "variance {} should collapse at a duplicated cell",
            got.variances[0]
        );
    }
}

#[test]
fn gls_coefficients_shift_exactly_with_the_response() {
    // The coefficient view of the invariance above: adding X c to y moves
    // the estimate by exactly c and leaves the covariance untouched.
    let design = random_design(6, 5, 0.0, 99);
    let n = design.n_observed();
    let mut x = random_matrix(n, 3, 100);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    let y = random_vector(n, 101);
    let c = DVector::from_column_slice(&[2.5, -1.0, 4.0]);
    let shifted = &y + &x * &c;

    let fit_a = stlmm::fit_ols(&design, &x, &y).unwrap();
    let fit_b = stlmm::fit_ols(&design, &x, &shifted).unwrap();
    let moved: DVector<f64> = &fit_b.beta - &fit_a.beta;
    assert!((&moved - &c).amax() <= 1e-10);
}
