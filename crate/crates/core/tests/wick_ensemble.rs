mod support;

use fracwick::ensemble::{build_covariance, sample, GaussianFrame};
use fracwick::phi::*;
use fracwick::wick::*;
use proptest::prelude::*;
use support::*;

fn unit_indicators() -> (std::sync::Arc<PhiSpace<f64>>, StepFunction<f64>, StepFunction<f64>) {
    let sp = space(2.0, 2, 0.75);
    let g = sp.grid().clone();
    (sp.clone(), StepFunction::indicator(g.clone(), 0, 1), StepFunction::indicator(g, 1, 2))
}

#[test]
fn adjacent_indicator_block() {
    let (sp, a, b) = unit_indicators();
    let model = build_covariance(&sp, &GaussianFrame::new(vec![vec![a, b]])).unwrap();
    let off = rect_inner_quadrature(0.0, 1.0, 1.0, 2.0, 0.75);
    assert!((model.entry(0, 0) - 1.0).abs() < 1e-12);
    assert!((model.entry(1, 1) - 1.0).abs() < 1e-12);
    assert!((model.entry(0, 1) - off).abs() < 1e-9);
    assert!((model.entry(1, 0) - off).abs() < 1e-9);
}

#[test]
fn sample_correlation_of_adjacent_indicators() {
    let (sp, a, b) = unit_indicators();
    let model = build_covariance(&sp, &GaussianFrame::new(vec![vec![a, b]])).unwrap();
    let n = 100_000;
    let batch = sample(&model, n, 31);
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for d in batch.iter() {
        sx += d[0];
        sy += d[1];
        sxx += d[0] * d[0];
        syy += d[1] * d[1];
        sxy += d[0] * d[1];
    }
    let nf = n as f64;
    let cov = sxy / nf - sx * sy / nf / nf;
    let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
    assert!((corr - rect_inner_quadrature(0.0, 1.0, 1.0, 2.0, 0.75)).abs() < 0.02, "{corr}");
}

#[test]
fn batches_do_not_depend_on_thread_count() {
    let sp = space(1.0, 16, 0.7);
    let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 3).unwrap();
    let model = build_covariance(&sp, &GaussianFrame::new(vec![basis.vectors().to_vec()])).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| sample(&model, 500, 8));
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| sample(&model, 500, 8));
    assert!(one.iter().zip(four.iter()).all(|(a, b)| a == b));
}

#[test]
fn unit_sigma_single_indicator_coefficient() {
    let sp = space(1.0, 4, 0.75);
    let basis = gram_schmidt(&sp, &[StepFunction::constant(sp.grid().clone(), 1.0)], 1).unwrap();
    let c = sigma_coeffs(&basis, &StepFunction::constant(sp.grid().clone(), 1.0)).unwrap();
    let norm = rect_inner_quadrature(0.0, 1.0, 0.0, 1.0, 0.75).sqrt();
    assert!((c.coeff(0, 0, 4) - norm).abs() < 1e-9);
    assert!((projection_norm_sq(&c, 0, 4) - norm * norm).abs() < 1e-9);
}

#[test]
fn wick_exponential_lognormal_moments() {
    let sp = space(1.0, 32, 0.7);
    let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 3).unwrap();
    let sigma = StepFunction::new(sp.grid().clone(), (0..32).map(|j| 0.4 + 0.02 * j as f64).collect()).unwrap();
    let c = sigma_coeffs(&basis, &sigma).unwrap();
    let (r, t) = (4, 28);
    let shifts = c.coeffs(r, t);
    let v: f64 = (0..3).map(|k| sp.inner(&basis.vectors()[k], &sigma.restrict(r, t)).unwrap().powi(2)).sum();
    let model = build_covariance(&sp, &GaussianFrame::new(vec![basis.vectors().to_vec()])).unwrap();
    let n = 100_000;
    let vals: Vec<f64> = sample(&model, n, 3).iter().map(|z| wick_exponential(z, &shifts, v).value).collect();
    let moments = |f: &dyn Fn(f64) -> f64| {
        let xs: Vec<f64> = vals.iter().map(|&x| f(x)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (m, (var / n as f64).sqrt())
    };
    let (m1, se1) = moments(&|x| x);
    assert!((m1 - 1.0).abs() < 4.0 * se1, "{m1} ± {se1}");
    let (m2, se2) = moments(&|x| x * x);
    assert!((m2 - v.exp()).abs() < 4.0 * se2, "{m2} ± {se2} vs {}", v.exp());
}

#[test]
fn translation_of_adjacent_indicators() {
    let (sp, a, b) = unit_indicators();
    let off = rect_inner_quadrature(0.0, 1.0, 1.0, 2.0, 0.75);
    assert!((translation_shift(&sp, &a, &b).unwrap() + off).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coefficients_additive_and_bessel(
        vals in prop::collection::vec(-1.0..1.0f64, 16), h in 0.55..0.95f64,
        r in 0usize..8, mid in 8usize..12, t in 12usize..=16,
    ) {
        let sp = space(1.0, 16, h);
        let sigma = StepFunction::new(sp.grid().clone(), vals).unwrap();
        let basis = PhiBasis::from_family(&sp, SeedFamily::Legendre, 4).unwrap();
        let c = sigma_coeffs(&basis, &sigma).unwrap();
        for k in 0..4 {
            let whole = c.coeff(k, r, t);
            let parts = c.coeff(k, r, mid) + c.coeff(k, mid, t);
            prop_assert!((whole - parts).abs() < 1e-13);
            let direct = sp.inner(&basis.vectors()[k], &sigma.restrict(r, t)).unwrap();
            prop_assert!((whole - direct).abs() < 1e-12);
        }
        prop_assert!(projection_norm_sq(&c, r, t) <= c.exact_norm_sq(r, t) + 1e-12);
    }
}
