use proptest::prelude::*;
use symnorm::{NormSpec, Norm32, Norm64};

const N: usize = 12;

fn specs() -> Vec<NormSpec> {
    vec![
        NormSpec::lp(1.0),
        NormSpec::lp(2.0),
        NormSpec::lp(3.5),
        NormSpec::lp(f64::INFINITY),
        NormSpec::Topk { k: 3 },
        NormSpec::TopkDual { k: 3 },
        NormSpec::Ksupport { k: 4 },
        NormSpec::BoxthetaDual { a: 0.05, b: 0.5, c: 2.0 },
        NormSpec::Qwrap { inner: Box::new(NormSpec::Topk { k: 2 }) },
        NormSpec::Maxcombo,
    ]
}

fn norm() -> impl Strategy<Value = NormSpec> {
    prop::sample::select(specs())
}

fn build(s: &NormSpec) -> Norm64 {
    s.build(N).unwrap()
}

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -1e3..1e3f64], N)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #[test]
    fn permutation_and_sign_invariant(s in norm(), x in vector(), flips in prop::collection::vec(any::<bool>(), N), rot in 0..N) {
        let l = build(&s);
        let mut y: Vec<f64> = x.iter().zip(&flips).map(|(v, f)| if *f { -v } else { *v }).collect();
        y.rotate_left(rot);
        prop_assert!(close(l.eval(&x), l.eval(&y), 1e-9));
    }

    #[test]
    fn triangle_inequality(s in norm(), x in vector(), y in vector()) {
        let l = build(&s);
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        prop_assert!(l.eval(&sum) <= (l.eval(&x) + l.eval(&y)) * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn absolutely_homogeneous(s in norm(), x in vector(), c in -50.0..50.0f64) {
        let l = build(&s);
        let y: Vec<f64> = x.iter().map(|v| c * v).collect();
        prop_assert!(close(l.eval(&y), c.abs() * l.eval(&x), 1e-9));
    }

    #[test]
    fn monotone_in_magnitudes(s in norm(), x in vector(), grow in prop::collection::vec(1.0..3.0f64, N)) {
        let l = build(&s);
        let y: Vec<f64> = x.iter().zip(&grow).map(|(v, g)| v * g).collect();
        prop_assert!(l.eval(&x) <= l.eval(&y) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn single_precision_tracks_double(s in norm(), x in vector()) {
        let l = build(&s);
        let l32: Norm32 = s.build::<f32>(N).unwrap();
        let x32: Vec<f32> = x.iter().map(|v| *v as f32).collect();
        prop_assert!(close(l32.eval(&x32) as f64, l.eval(&x), 1e-4));
    }
}

#[test]
fn unit_on_basis_vectors() {
    for s in specs() {
        let l = s.build::<f64>(N).unwrap();
        let mut e = vec![0.0; N];
        e[5] = 1.0;
        assert!(close(l.eval(&e), 1.0, 1e-9), "{s:?}");
        assert_eq!(l.eval(&vec![0.0; N]), 0.0);
    }
}
