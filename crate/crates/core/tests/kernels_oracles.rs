mod common;

use common::{inverse_gaussian_cdf, kernel_checks};

#[test]
fn generators_match_reference_distributions() {
    let checks = kernel_checks(100_000, 2024);
    for c in &checks {
        println!("{:<28} {:.5} (limit {})", c.name, c.value, c.limit);
    }
    let bad: Vec<_> = checks.iter().filter(|c| !c.pass()).map(|c| &c.name).collect();
    assert!(bad.is_empty(), "failed: {bad:?}");
}

#[test]
fn inverse_gaussian_cdf_oracle_matches_quadrature() {
    let (mu, lam) = (0.5, 2.0);
    let tab = common::TabulatedCdf::positive(|x: f64| -1.5 * x.ln() - 0.5 * (8.0 * x + 2.0 / x), -40.0, 40.0, 40_000);
    for x in [0.1, 0.3, 0.5, 0.9, 2.0] {
        assert!((inverse_gaussian_cdf(x, mu, lam) - tab.cdf(x)).abs() < 1e-6, "x = {x}");
    }
}

#[test]
fn different_seeds_give_different_but_equally_good_draws() {
    let a = kernel_checks(20_000, 1);
    let b = kernel_checks(20_000, 2);
    assert!(a.iter().zip(&b).any(|(x, y)| x.value != y.value));
    assert!(b.iter().all(|c| c.value < 3.0 * c.limit.max(0.02)));
}
