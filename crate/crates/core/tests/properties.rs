use proptest::prelude::*;

use qolattice::focknum::{basis, max_abs, max_diff, LazyOp, RepMap, State};
use qolattice::oscalgebra::rewrite::{rewrite, step_bound, to_pbw, Strategy as Redex};
use qolattice::oscalgebra::Letter;
use qolattice::{classical, AlgElem, Algebra, DeformParam, Gen, LaurentPoly, SiteId};

fn laurent() -> impl Strategy<Value = LaurentPoly> {
    prop::collection::vec((-4i64..=4, -5i64..=5), 0..5).prop_map(LaurentPoly::from_terms)
}

/// Three sites: a boundary pair over `-q` and one `q^2` site.
fn lab() -> (Algebra, [SiteId; 3]) {
    let mut alg = Algebra::new();
    let a = alg.declare("a", DeformParam::NEG_Q).unwrap();
    let b = alg.declare("b", DeformParam::NEG_Q).unwrap();
    let c = alg.declare("c", DeformParam::Q2).unwrap();
    alg.set_k_pair(a, b);
    (alg, [a, b, c])
}

fn letters(max: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..3, 0usize..6), 0..max)
}

fn to_word(sites: &[SiteId; 3], raw: &[(usize, usize)], k_at: Option<usize>) -> Vec<Letter> {
    let mut w: Vec<Letter> = raw.iter().map(|&(s, g)| Letter::G(sites[s], Gen::ALL[g])).collect();
    if let Some(i) = k_at {
        w.insert(i.min(w.len()), Letter::K);
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laurent_ring_axioms(a in laurent(), b in laurent(), c in laurent()) {
        prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert!((&a - &a).is_zero());
        prop_assert_eq!(&a * &LaurentPoly::one(), a.clone());
    }

    #[test]
    fn laurent_eval_is_a_homomorphism(a in laurent(), b in laurent(), x in 0.3f64..1.7) {
        let (fa, fb) = (a.eval_real(x).unwrap(), b.eval_real(x).unwrap());
        let prod = (&a * &b).eval_real(x).unwrap();
        let sum = (&a + &b).eval_real(x).unwrap();
        let scale = 1.0 + fa.abs() * fb.abs();
        prop_assert!((prod - fa * fb).abs() < 1e-9 * scale);
        prop_assert!((sum - fa - fb).abs() < 1e-9 * (1.0 + fa.abs() + fb.abs()));
    }

    #[test]
    fn laurent_text_round_trip(a in laurent()) {
        let back: LaurentPoly = a.to_string().parse().unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn rewriting_is_confluent(raw in letters(6), k in prop::option::of(0usize..7)) {
        let (alg, s) = lab();
        let w = to_word(&s, &raw, k);
        let direct = alg.normalize_word(&w).unwrap();
        for strat in [Redex::Leftmost, Redex::Rightmost] {
            let r = rewrite(&alg, &w, strat, step_bound(w.len())).unwrap();
            prop_assert_eq!(&to_pbw(&alg, &r.normal), &direct);
        }
    }

    #[test]
    fn multiplication_is_associative(x in letters(4), y in letters(4), z in letters(4)) {
        let (alg, s) = lab();
        let [a, b, c] = [x, y, z].map(|r| alg.normalize_word(&to_word(&s, &r, None)).unwrap());
        let left = alg.mul(&alg.mul(&a, &b).unwrap(), &c).unwrap();
        let right = alg.mul(&a, &alg.mul(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn distinct_sites_commute(x in prop::collection::vec(0usize..6, 1..4), y in prop::collection::vec(0usize..6, 1..4)) {
        let (alg, s) = lab();
        let on = |site: SiteId, gs: &[usize]| {
            let w: Vec<Letter> = gs.iter().map(|&g| Letter::G(site, Gen::ALL[g])).collect();
            alg.normalize_word(&w).unwrap()
        };
        prop_assert!(alg.commutator(&on(s[0], &x), &on(s[2], &y)).unwrap().is_zero());
        prop_assert!(alg.commutator(&on(s[1], &x), &on(s[2], &y)).unwrap().is_zero());
    }

    #[test]
    fn text_round_trip(raw in letters(5), k in prop::option::of(0usize..6)) {
        let (alg, s) = lab();
        let x = alg.normalize_word(&to_word(&s, &raw, k)).unwrap();
        prop_assert_eq!(alg.parse(&alg.format(&x)).unwrap(), x);
    }

    /// Evaluating the normal form agrees with applying the letters one at a
    /// time, so the representation respects the rewrite rules.
    #[test]
    fn fock_action_respects_normal_form(
        raw in letters(6),
        k in prop::option::of(0usize..7),
        occ in prop::collection::vec(0u8..4, 3),
        q in prop_oneof![Just(0.6), Just(-0.45), Just(0.3)],
    ) {
        let (alg, s) = lab();
        let w = to_word(&s, &raw, k);
        let reps = RepMap::for_algebra(&alg, 4, q);
        let state: State = occ.into_iter().collect();
        let mut whole = LazyOp::new(&alg.normalize_word(&w).unwrap(), &reps).unwrap();
        let expect = whole.apply(&basis(&state));
        let mut v = basis(&state);
        for letter in w.iter().rev() {
            let x = match *letter {
                Letter::G(site, g) => AlgElem::gen(site, g),
                Letter::K => AlgElem::boundary(),
            };
            v = LazyOp::new(&x, &reps).unwrap().apply(&v);
        }
        prop_assert!(max_diff(&v, &expect) <= 1e-12 * (1.0 + max_abs(&expect)));
    }
}

#[test]
fn brackets_satisfy_jacobi_and_casimir() {
    let r = classical::check_brackets();
    assert!(r.pass, "{r:?}");
}
