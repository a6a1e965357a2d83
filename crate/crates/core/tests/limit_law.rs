use statcare::asymptotics::{monte_carlo_limit, LimitOptions};
use statcare::estimation::default_horizon;
use statcare::experiments::studies::reference_model;

fn diag_cov(sample_size: usize) -> Vec<f64> {
    let spec = reference_model();
    let opts = LimitOptions {
        sample_size,
        horizon_t: default_horizon(&spec).unwrap(),
        reps: 200,
        seed: 11,
        rate_exponent: 0.5,
    };
    let s = monte_carlo_limit(&spec, &opts).unwrap();
    (0..s.covariance.len()).map(|i| s.covariance[i][i]).collect()
}

#[test]
fn scaled_covariance_is_stable_under_doubling() {
    let a = diag_cov(4000);
    let b = diag_cov(8000);
    for (x, y) in a.iter().zip(&b) {
        let r = y / x;
        assert!((0.5..=2.0).contains(&r), "diagonal ratio {r}");
    }
}
