use drsafe::mdp::StateId;
use drsafe::oracle::random_distribution;
use drsafe::transport::{
    in_ambiguity_ball, wasserstein_cdf, wasserstein_lp, AmbiguitySpec, GroundMetric, MetricError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_line(n: usize, rng: &mut impl Rng) -> (GroundMetric, Vec<f64>) {
    let mut next = rng.random_range(-5..5i64);
    let labels: Vec<StateId> = (0..n)
        .map(|_| {
            let s = StateId(next);
            next += rng.random_range(1..=4);
            s
        })
        .collect();
    let coords = labels.iter().map(|s| s.0 as f64).collect();
    (GroundMetric::abs_diff(&labels).unwrap(), coords)
}

fn random_plane(n: usize, rng: &mut impl Rng) -> GroundMetric {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i * n + j] = (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1);
            }
        }
    }
    GroundMetric::matrix(n, d).unwrap()
}

#[test]
fn lp_matches_cdf_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let (metric, coords) = random_line(n, &mut rng);
        let p = random_distribution(n, 0.3, &mut rng);
        let q = random_distribution(n, 0.3, &mut rng);
        let (lp, coupling) = wasserstein_lp(&p, &q, &metric).unwrap();
        let cdf = wasserstein_cdf(&p, &q, &coords);
        worst = worst.max((lp - cdf).abs());
        assert!((coupling.cost(&metric) - lp).abs() < 1e-9);
        for (a, b) in coupling.row_marginal().iter().zip(&p) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in coupling.col_marginal().iter().zip(&q) {
            assert!((a - b).abs() < 1e-9);
        }
    }
    assert!(worst <= 1e-9, "largest gap {worst:e}");
}

#[test]
fn distance_axioms_on_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let n = rng.random_range(2..=8);
        let metric = if i % 2 == 0 {
            random_line(n, &mut rng).0
        } else {
            random_plane(n, &mut rng)
        };
        let [p, q, r] = [(); 3].map(|_| random_distribution(n, 0.3, &mut rng));
        let w = |a: &[f64], b: &[f64]| wasserstein_lp(a, b, &metric).unwrap().0;
        assert!(w(&p, &p).abs() <= 1e-9);
        assert!((w(&p, &q) - w(&q, &p)).abs() <= 1e-9);
        assert!(w(&p, &r) <= w(&p, &q) + w(&q, &r) + 1e-9);
        assert!(w(&p, &q) >= -1e-12);
    }
}

#[test]
fn unit_shift_examples() {
    let m = GroundMetric::abs_diff(&[StateId(1), StateId(2)]).unwrap();
    assert!((wasserstein_lp(&[0.0, 1.0], &[1.0, 0.0], &m).unwrap().0 - 1.0).abs() < 1e-12);
    let m = GroundMetric::abs_diff(&[StateId(0), StateId(1)]).unwrap();
    assert!((wasserstein_lp(&[0.25, 0.75], &[0.5, 0.5], &m).unwrap().0 - 0.25).abs() < 1e-12);
}

#[test]
fn ball_membership_is_closed() {
    let m = GroundMetric::abs_diff(&[StateId(0), StateId(1)]).unwrap();
    let spec = AmbiguitySpec::new(0.25, m).unwrap();
    assert!(in_ambiguity_ball(&[0.25, 0.75], &[0.5, 0.5], &spec).unwrap());
    assert!(!in_ambiguity_ball(&[0.2, 0.8], &[0.5, 0.5], &spec).unwrap());
}

#[test]
fn matrix_validation() {
    let bad_triangle = vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0];
    assert!(matches!(GroundMetric::matrix(3, bad_triangle), Err(MetricError::Triangle { .. })));
    let asym = vec![0.0, 1.0, 2.0, 0.0];
    assert!(matches!(GroundMetric::matrix(2, asym), Err(MetricError::Asymmetric { .. })));
    let diag = vec![1.0, 1.0, 1.0, 0.0];
    assert!(GroundMetric::matrix(2, diag).is_err());
    let zero = vec![0.0, 0.0, 0.0, 0.0];
    assert!(GroundMetric::matrix(2, zero).is_err());
    assert!(GroundMetric::abs_diff(&[StateId(2), StateId(1)]).is_err());
}
