mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hlconc::activations::ActivationKind;
use hlconc::autodiff::{jet_add, jet_mul, Jet2};
use hlconc::network::{count_params, ArchVector, HLConcParams, LayerActivations};

fn jet() -> impl Strategy<Value = Jet2> {
    prop::array::uniform5(-3.0..3.0f64).prop_map(|c| Jet2::new(c[0], c[1], c[2], c[3], c[4]))
}

fn close(a: Jet2, b: Jet2, tol: f64) -> bool {
    a.components().iter().zip(b.components()).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

proptest! {
    #[test]
    fn add_and_mul_commute(a in jet(), b in jet()) {
        prop_assert_eq!(jet_add(a, b), jet_add(b, a));
        prop_assert!(close(jet_mul(a, b), jet_mul(b, a), 1e-14));
    }

    #[test]
    fn mul_distributes_and_associates(a in jet(), b in jet(), c in jet()) {
        prop_assert!(close(jet_mul(a, jet_add(b, c)), jet_add(jet_mul(a, b), jet_mul(a, c)), 1e-12));
        prop_assert!(close(jet_mul(jet_mul(a, b), c), jet_mul(a, jet_mul(b, c)), 1e-12));
    }

    #[test]
    fn polynomial_derivatives(x in -2.0..2.0f64, t in -2.0..2.0f64) {
        // x^2 t: (x^2 t, 2xt, x^2, 2t, 2x)
        let (jx, jt) = (Jet2::seed_x(x), Jet2::seed_t(t));
        let p = jet_mul(jet_mul(jx, jx), jt);
        prop_assert!(close(p, Jet2::new(x * x * t, 2.0 * x * t, x * x, 2.0 * t, 2.0 * x), 1e-14));
    }

    #[test]
    fn sine_of_sum(x in -2.0..2.0f64, t in -2.0..2.0f64) {
        // sin(x + 2t): d_x = cos, d_t = 2 cos, d_xx = -sin, d_xt = -2 sin
        let s = jet_add(Jet2::seed_x(x), Jet2::seed_t(t).scale(2.0)).sin();
        let a = x + 2.0 * t;
        prop_assert!(close(s, Jet2::new(a.sin(), a.cos(), 2.0 * a.cos(), -a.sin(), -2.0 * a.sin()), 1e-14));
    }

    #[test]
    fn checkpoint_round_trip(
        widths in prop::collection::vec(1usize..12, 2..5),
        out in 1usize..=2,
        seed in any::<u64>(),
        act in 0usize..5,
    ) {
        let mut w = vec![2];
        w.extend(&widths);
        w.push(out);
        let arch = ArchVector::new(w.clone()).unwrap();
        prop_assert_eq!(arch.counts(), count_params(&w));
        let p = HLConcParams::glorot(arch, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(p.len(), count_params(&w).n_a);
        let mut kinds = vec![ActivationKind::Tanh; widths.len()];
        kinds[widths.len() - 1] = ActivationKind::ALL[act];
        let acts = LayerActivations(kinds);

        let mut buf = Vec::new();
        p.write_checkpoint(&acts, &mut buf).unwrap();
        let (q, acts2) = HLConcParams::read_checkpoint(&buf[..]).unwrap();
        prop_assert_eq!(&acts2, &acts);
        prop_assert_eq!(q.arch(), p.arch());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(q.values()), bits(p.values()));

        // the test-side reader agrees with the library reader
        let (w2, names, values) = common::read_checkpoint_text(std::str::from_utf8(&buf).unwrap());
        prop_assert_eq!(w2, w);
        prop_assert_eq!(names.len(), widths.len());
        prop_assert_eq!(bits(&values), bits(p.values()));
    }

    #[test]
    fn network_matches_reference_evaluator(seed in any::<u64>(), x in -1.0..1.0f64, t in -1.0..1.0f64) {
        let w = vec![2, 6, 5, 3, 2];
        let arch = ArchVector::new(w.clone()).unwrap();
        let p = HLConcParams::glorot(arch, &mut ChaCha8Rng::seed_from_u64(seed));
        let acts = LayerActivations(vec![ActivationKind::Tanh, ActivationKind::Tanh, ActivationKind::Sine]);
        let reference = common::RefNet::decode(&w, &["tanh", "tanh", "sine"], p.values());
        let got = p.forward_value(&acts, x, t);
        for (a, b) in got.iter().zip(reference.eval(x, t)) {
            prop_assert!((a - b).abs() <= 1e-13);
        }
    }
}
