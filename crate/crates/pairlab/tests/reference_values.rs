//! Cross-checks the full pipeline (linear map, normalization, similarity,
//! mining, loss, backward) against gradients computed for the same fixed
//! instance by an independent autodiff system (JAX, float64). The frozen
//! numbers below came from that run; agreement here rules out a shared
//! bug between the analytic gradients and the in-crate finite-difference
//! oracle.

// The reference values are transcribed at full printed precision.
#![allow(clippy::excessive_precision)]

use ndarray::{array, Array2};

use pairlab::embedding::{similarity_matrix, HyperParams, LabelVector};
use pairlab::gpw::PairLoss;
use pairlab::losses::{ms_mine, Method};
use pairlab::trainer::{backward, forward, ModelParams};

fn fixture() -> (Array2<f64>, ModelParams, LabelVector) {
    let x = array![
        [0.9, 0.1, 0.2],
        [0.7, 0.3, 0.1],
        [-0.2, 0.8, 0.4],
        [0.1, -0.6, 0.7]
    ];
    let w = ModelParams::from_matrix(array![[0.5, -0.3, 0.2], [0.1, 0.4, -0.6]]).unwrap();
    let y = LabelVector::new(vec![0, 0, 1, 1]);
    (x, w, y)
}

fn check(method: Method, expect_value: f64, expect_grad: &Array2<f64>) {
    let (x, w, y) = fixture();
    let hp = HyperParams::default();
    let pass = forward(&w, &x).unwrap();
    let s = similarity_matrix(&pass.embeddings);
    let out = method.eval(&s, &y, &hp).unwrap();
    assert!(
        (out.value - expect_value).abs() <= 1e-11 * expect_value.abs(),
        "{method}: value {} vs reference {expect_value}",
        out.value
    );
    let grad_w = backward(&out.grad, &pass, &x);
    for (i, (got, want)) in grad_w.iter().zip(expect_grad.iter()).enumerate() {
        assert!(
            (got - want).abs() <= 1e-11,
            "{method}: grad entry {i} is {got}, reference {want}"
        );
    }
}

#[test]
fn mining_on_the_fixture_selects_only_the_last_anchor() {
    let (x, w, y) = fixture();
    let pass = forward(&w, &x).unwrap();
    let s = similarity_matrix(&pass.embeddings);
    let sets = ms_mine(&s, &y, HyperParams::default().epsilon);
    for anchor in 0..3 {
        assert!(sets.positives(anchor).is_empty());
        assert!(sets.negatives(anchor).is_empty());
    }
    assert_eq!(sets.positives(3), &[2]);
    assert_eq!(sets.negatives(3), &[0, 1]);
}

#[test]
fn ms_weight_gradient_matches_the_external_reference() {
    check(
        Method::Ms,
        4.23651481905294225e-01,
        &array![
            [
                -9.30085584965984445e-03,
                -4.09009240426293913e-03,
                2.04422532813178154e-01
            ],
            [
                -1.18020223041352720e-01,
                4.48575352393309035e-01,
                3.41815375020454948e-01
            ]
        ],
    );
}

#[test]
fn binomial_weight_gradient_matches_the_external_reference() {
    check(
        Method::Binomial,
        2.08497008573491316e+00,
        &array![
            [
                -2.35620298422912405e-01,
                -1.04331256652319626e-01,
                7.90078634280880654e-01
            ],
            [
                -4.50101644773724885e-01,
                1.93873492443539730e+00,
                1.33664793322867048e+00
            ]
        ],
    );
}

#[test]
fn lifted_weight_gradient_matches_the_external_reference() {
    check(
        Method::Lifted,
        1.36300844424154333e+00,
        &array![
            [
                -1.08017610228281595e-02,
                -3.22499458738888911e-01,
                9.53195572485854736e-01
            ],
            [
                -1.13811163309081942e+00,
                1.13400273586033329e+00,
                1.03629667107079149e+00
            ]
        ],
    );
}
