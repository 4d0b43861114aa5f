//! Monte Carlo checks of the distributional claims. Each runs in seconds.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use repro_core::coef_cs::subset_region;
use repro_core::model_cs::{estimate_pmf, model_confidence_set, ConditionalPmf};
use repro_core::rng::sample_gaussian;
use repro_core::{search_candidates, CandidateSet, Dataset, ModelSupport, SearchConfig, Stream};

fn gaussian_matrix(n: usize, p: usize, stream: Stream) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, p, sample_gaussian(n * p, stream).as_slice())
}

fn response(x: &DMatrix<f64>, tau: &ModelSupport, beta: &[f64], sigma: f64, u: &DVector<f64>) -> DVector<f64> {
    let mut y = u * sigma;
    for (&j, &b) in tau.indices().iter().zip(beta) {
        y.axpy(b, &x.column(j), 1.0);
    }
    y
}

fn total_variation(a: &ConditionalPmf, b: &ConditionalPmf) -> f64 {
    let models: BTreeSet<&ModelSupport> = a.counts.keys().chain(b.counts.keys()).collect();
    0.5 * models.into_iter().map(|m| (a.probability(m) - b.probability(m)).abs()).sum::<f64>()
}

#[test]
fn model_pmf_does_not_depend_on_nuisance_values() {
    let (n, p, draws) = (40, 8, 2000);
    let tau0 = ModelSupport::new(vec![1, 5]);
    let x = gaussian_matrix(n, p, Stream::new(31));
    let u = sample_gaussian(n, Stream::new(32));
    let bound = 3.0 / (draws as f64).sqrt();
    let base = Dataset::new(response(&x, &tau0, &[2.0, 1.5], 1.0, &u), x.clone()).unwrap();
    let pmf0 = estimate_pmf(&base, &tau0, draws, Stream::new(33)).unwrap();
    for (beta, sigma) in [([4.0, -3.0], 2.0), ([-2.5, 2.0], 0.7), ([6.0, 5.0], 1.5)] {
        let other = Dataset::new(response(&x, &tau0, &beta, sigma, &u), x.clone()).unwrap();
        // Independent stream, so the distance is pure Monte Carlo noise.
        let pmf = estimate_pmf(&other, &tau0, draws, Stream::new(34)).unwrap();
        let tv = total_variation(&pmf0, &pmf);
        assert!(tv <= bound, "beta {beta:?} sigma {sigma}: TV {tv:.4} > {bound:.4}");
    }
}

#[test]
fn model_confidence_set_covers_truth() {
    let (n, p, reps) = (40, 8, 200);
    let tau0 = ModelSupport::new(vec![0, 3, 6]);
    let mut covered = 0;
    for rep in 0..reps {
        let s = Stream::new(4000).child(rep);
        let x = gaussian_matrix(n, p, s.child(0));
        let u = sample_gaussian(n, s.child(1));
        let data = Dataset::new(response(&x, &tau0, &[2.0, -1.5, 1.0], 1.0, &u), x).unwrap();
        // Each candidate is tested on its own, so adding the truth to the
        // searched models gives the coverage of an exhaustive candidate set.
        let mut models = search_candidates(&data, &SearchConfig::new(50, rep)).unwrap().models;
        if !models.contains(&tau0) {
            models.push(tau0.clone());
        }
        let cs = model_confidence_set(&data, &CandidateSet::from_models(models), 0.95, 200, rep).unwrap();
        covered += cs.contains(&tau0) as usize;
    }
    let rate = covered as f64 / reps as f64;
    assert!(rate >= 0.90, "coverage {rate:.3}");
}

#[test]
fn true_model_subset_region_has_nominal_coverage() {
    let (n, p, reps) = (80, 20, 1000);
    let tau0 = ModelSupport::new(vec![2, 7, 11, 15]);
    let beta0 = [1.0, -0.5, 0.8, 0.3];
    let lambda = ModelSupport::new(vec![7, 11, 12]);
    let truth = DVector::from_vec(vec![-0.5, 0.8, 0.0]);
    let x = gaussian_matrix(n, p, Stream::new(51));
    let mut covered = 0;
    for rep in 0..reps {
        let y = response(&x, &tau0, &beta0, 1.3, &sample_gaussian(n, Stream::new(52).child(rep)));
        let region = subset_region(&y, &x, &lambda, &tau0, 0.95).unwrap();
        covered += region.contains(&lambda, &truth) as usize;
    }
    // Binomial(1000, 0.95) sits above 0.93 with probability > 0.998.
    let rate = covered as f64 / reps as f64;
    assert!((0.93..=0.97).contains(&rate), "coverage {rate:.3}");
}
