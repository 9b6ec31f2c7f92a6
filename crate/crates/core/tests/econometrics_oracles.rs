use approx::assert_relative_eq;
use contestlab::econometrics::{demean_two_way, encode_groups, fit, ModelFrame, RegressionSpec, Term};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TERMS: [&str; 3] = ["x1", "x2", "x1:x2"];

fn random_frame(seed: u64, n: usize, ga: u32, gb: u32) -> ModelFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..ga)).collect();
    let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..gb)).collect();
    let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let x2: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 0.4 * x1[i] + 0.1 * x2[i] - 0.3 * x1[i] * x2[i] + 0.07 * f64::from(a[i] % 5) - 0.05 * f64::from(b[i]) + rng.random::<f64>())
        .collect();
    let mut f = ModelFrame::new(n);
    f.add_numeric("y", y).unwrap();
    f.add_numeric("x1", x1).unwrap();
    f.add_numeric("x2", x2).unwrap();
    f.add_categorical("a", a).unwrap();
    f.add_categorical("b", b).unwrap();
    f.add_categorical("row", (0..n as u32).collect()).unwrap();
    f
}

fn spec(cluster: &str) -> RegressionSpec {
    RegressionSpec::new("y", TERMS.iter().map(|t| Term::parse(t)).collect()).with_fixed_effects("a", "b").clustered_by(cluster)
}

fn term_column(frame: &ModelFrame, term: &str) -> Vec<f64> {
    term.split(':').fold(vec![1.0; frame.len()], |acc, c| {
        acc.iter().zip(frame.numeric(c).unwrap()).map(|(a, b)| a * b).collect()
    })
}

// full-rank design: terms, one dummy per level of the first factor, and
// one per level of the second except its first
fn dummy_design(frame: &ModelFrame, terms: &[&str]) -> DMatrix<f64> {
    let n = frame.len();
    let (a, ga) = encode_groups(frame.categorical("a").unwrap());
    let (b, gb) = encode_groups(frame.categorical("b").unwrap());
    let cols: Vec<Vec<f64>> = terms.iter().map(|t| term_column(frame, t)).collect();
    DMatrix::from_fn(n, terms.len() + ga + gb - 1, |i, j| {
        if j < terms.len() {
            cols[j][i]
        } else if j < terms.len() + ga {
            f64::from(u8::from(a[i] == j - terms.len()))
        } else {
            f64::from(u8::from(b[i] == j - terms.len() - ga + 1))
        }
    })
}

struct Oracle {
    beta: Vec<f64>,
    r2_within: f64,
    // sandwich with squared residuals, no small-sample factor
    hc0_se: Vec<f64>,
}

fn oracle(frame: &ModelFrame) -> Oracle {
    let y = DVector::from_column_slice(frame.numeric("y").unwrap());
    let x = dummy_design(frame, &TERMS);
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let beta = &xtx_inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let fe_only = x.columns(TERMS.len(), x.ncols() - TERMS.len()).into_owned();
    let fe_beta = (fe_only.transpose() * &fe_only).try_inverse().unwrap() * fe_only.transpose() * &y;
    let within = &y - &fe_only * fe_beta;
    let r2_within = 1.0 - resid.norm_squared() / within.norm_squared();

    let mut meat = DMatrix::zeros(x.ncols(), x.ncols());
    for i in 0..x.nrows() {
        let row = x.row(i).transpose();
        meat += &row * row.transpose() * resid[i].powi(2);
    }
    let cov = &xtx_inv * meat * &xtx_inv;
    Oracle {
        beta: beta.iter().take(TERMS.len()).copied().collect(),
        r2_within,
        hc0_se: (0..TERMS.len()).map(|j| cov[(j, j)].sqrt()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn demeaned_ols_equals_dummy_ols(seed in any::<u64>(), n in 60usize..500, ga in 2u32..25, gb in 2u32..15) {
        let frame = random_frame(seed, n, ga, gb);
        let f = fit(&frame, &spec("a")).unwrap();
        let o = oracle(&frame);
        for (term, expect) in TERMS.iter().zip(&o.beta) {
            let got = f.get(term).unwrap().coefficient;
            prop_assert!((got - expect).abs() <= 1e-6 * expect.abs().max(1e-3), "{term}: {got} vs {expect}");
        }
        prop_assert!((f.r_squared_within - o.r2_within).abs() < 1e-6);
        prop_assert_eq!(f.n_obs, n);
    }

    #[test]
    fn singleton_clusters_give_hc1(seed in any::<u64>(), n in 60usize..400, ga in 2u32..20, gb in 2u32..12) {
        let frame = random_frame(seed, n, ga, gb);
        let f = fit(&frame, &spec("row")).unwrap();
        prop_assert_eq!(f.clusters, n);
        let o = oracle(&frame);
        let k = TERMS.len() as f64;
        let factor = (n as f64) / (n as f64 - k);
        for (term, hc0) in TERMS.iter().zip(&o.hc0_se) {
            let se = f.get(term).unwrap().clustered_se;
            prop_assert!(((se * se / factor).sqrt() - hc0).abs() <= 1e-10_f64.max(1e-8 * hc0), "{term}: {se} vs {hc0}");
        }
    }

    #[test]
    fn demeaning_is_idempotent(seed in any::<u64>(), n in 20usize..400, ga in 1u32..20, gb in 1u32..20) {
        let frame = random_frame(seed, n, ga, gb);
        let (a, _) = encode_groups(frame.categorical("a").unwrap());
        let (b, _) = encode_groups(frame.categorical("b").unwrap());
        let cols = vec![frame.numeric("y").unwrap().to_vec(), frame.numeric("x1").unwrap().to_vec()];
        let once = demean_two_way(&cols, &a, &b, 1e-12, 10_000).unwrap();
        let twice = demean_two_way(&once.columns, &a, &b, 1e-12, 10_000).unwrap();
        for (c1, c2) in once.columns.iter().zip(&twice.columns) {
            for (u, v) in c1.iter().zip(c2) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
        // both sets of group means vanish
        for (groups, count) in [(&a, a.iter().max().unwrap() + 1), (&b, b.iter().max().unwrap() + 1)] {
            let mut sums = vec![0.0; count];
            for (g, v) in groups.iter().zip(&once.columns[0]) {
                sums[*g] += v;
            }
            prop_assert!(sums.iter().all(|s| s.abs() < 1e-8 * n as f64));
        }
    }
}

#[test]
fn time_invariant_regressor_is_absorbed_by_name() {
    let mut frame = random_frame(3, 300, 10, 8);
    let a = frame.categorical("a").unwrap().to_vec();
    frame.add_numeric("rater_trait", a.iter().map(|g| f64::from(*g) * 0.1).collect()).unwrap();
    let spec = RegressionSpec::new("y", vec![Term::main("x1"), Term::main("rater_trait")]).with_fixed_effects("a", "b").clustered_by("a");
    let f = fit(&frame, &spec).unwrap();
    assert_eq!(f.dropped, vec!["rater_trait".to_string()]);
    assert!(f.get("rater_trait").is_none());
    let o = fit(&frame, &RegressionSpec::new("y", vec![Term::main("x1")]).with_fixed_effects("a", "b").clustered_by("a")).unwrap();
    assert_relative_eq!(f.get("x1").unwrap().coefficient, o.get("x1").unwrap().coefficient, max_relative = 1e-12);
}
