//! Reverse-mode gradients against central finite differences.

use interpfn_core::data::Dataset;
use interpfn_core::expr::{enumerate_candidates, BaseFunctionLibrary, OutputLink, PairingMode};
use interpfn_core::mlp::{MlpSpec, MlpState, OutputActivation};
use interpfn_core::rng;
use rand::Rng;

fn families() -> Vec<(Vec<&'static str>, Vec<&'static str>, OutputLink, Vec<f64>)> {
    vec![
        (vec!["sim1.f1.1", "sim1.f1.2", "sim1.f1.3"], vec!["sim1.f2.1", "sim1.f2.2", "sim1.f2.3", "sim1.f2.4"], OutputLink::Identity, vec![1.0]),
        (vec!["sim1.f1.1", "sim1.f1.2", "sim1.f1.3"], vec!["sim2.f2.1", "sim2.f2.2", "sim2.f2.3", "sim2.f2.4"], OutputLink::Sigmoid, vec![-0.7]),
        (vec!["sim3.f1.1", "sim3.f1.2", "sim3.f1.3"], vec!["sim3.f2.1", "sim3.f2.2", "sim3.f2.3"], OutputLink::SoftmaxPair, vec![0.4, -1.1]),
    ]
}

#[test]
fn candidate_gradients_match_central_differences() {
    let lib = BaseFunctionLibrary::builtin();
    let mut r = rng::stream(21, &[]);
    let mut checked = 0;
    for (f1, f2, link, upstream) in families() {
        let f1 = lib.resolve(&f1).unwrap();
        let f2 = lib.resolve(&f2).unwrap();
        for model in enumerate_candidates(&f1, &f2, 2, &PairingMode::DistinctCombinations, &[0, 1, 2], None, link).unwrap() {
            for _ in 0..4 {
                let theta: Vec<f64> = (0..model.n_params()).map(|_| r.random_range(-1.5..1.5)).collect();
                let x: Vec<f64> = (0..3).map(|_| r.random_range(0.05..0.45)).collect();
                let at = |t: &[f64]| -> f64 {
                    let out = model.clone().with_theta(t.to_vec()).unwrap().evaluate(&x).unwrap();
                    out.iter().zip(&upstream).map(|(a, b)| a * b).sum()
                };
                let grad = model.clone().with_theta(theta.clone()).unwrap().gradient(&x, &upstream).unwrap();
                for i in 0..theta.len() {
                    let h = 1e-6 * theta[i].abs().max(1.0);
                    let (mut tp, mut tm) = (theta.clone(), theta.clone());
                    tp[i] += h;
                    tm[i] -= h;
                    let fd = (at(&tp) - at(&tm)) / (2.0 * h);
                    let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
                    assert!(rel <= 1e-5, "model {} param {i}: {} vs {fd}", model.model_id, grad[i]);
                }
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 4 * (18 + 18 + 9));
}

#[test]
fn network_gradients_match_central_differences() {
    let mut r = rng::stream(22, &[]);
    let cases: [(&[usize], OutputActivation); 4] = [
        (&[3, 6, 5, 1], OutputActivation::Sigmoid),
        (&[3, 4, 2], OutputActivation::Softmax),
        (&[2, 7, 7, 2], OutputActivation::Softmax),
        (&[4, 3, 1], OutputActivation::Sigmoid),
    ];
    for (widths, act) in cases {
        let classify = act == OutputActivation::Softmax;
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..12)
            .map(|_| {
                let x = (0..widths[0]).map(|_| r.random_range(-1.0..1.0)).collect();
                let y = match (classify, r.random_bool(0.5)) {
                    (true, true) => vec![0.0, 1.0],
                    (true, false) => vec![1.0, 0.0],
                    (false, _) => vec![r.random_range(0.0..1.0)],
                };
                (x, y)
            })
            .collect();
        let names = |p: &str, k: usize| (0..k).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let data = Dataset::from_rows(names("x", widths[0]), names("y", *widths.last().unwrap()), &rows).unwrap();
        let mut st = MlpState::init(&MlpSpec::new(widths, act), &mut r).unwrap();
        for v in st.params_mut() {
            *v += r.random_range(-0.2..0.2);
        }
        let (_, grad) = st.loss_and_grad(&data).unwrap();
        for i in 0..grad.len() {
            let orig = st.params()[i];
            let h = 1e-6;
            st.params_mut()[i] = orig + h;
            let lp = st.loss(&data).unwrap();
            st.params_mut()[i] = orig - h;
            let lm = st.loss(&data).unwrap();
            st.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-2);
            assert!(rel <= 1e-4, "{widths:?} param {i}: {} vs {fd}", grad[i]);
        }
    }
}
