use qolattice::eqverify::{self, IDENTITY_NAMES};
use qolattice::focknum::{fock_check, relation_defects};
use qolattice::report::Residual;
use qolattice::DeformParam;

#[test]
fn symbolic_identities_vanish_and_controls_do_not() {
    let groups = [
        eqverify::check_tetra_ml(),
        eqverify::check_tetra_nn(),
        eqverify::check_tetra_torus(),
        eqverify::check_ml_exchange(),
        eqverify::check_boundary_reflection(),
        eqverify::check_cform_equivalence(),
    ];
    for g in groups {
        for r in g {
            assert!(r.pass, "{}: {:?}", r.name, r.residual);
            if r.name.ends_with("_control") {
                assert!(matches!(r.residual, Residual::Nonzero { .. }), "{}", r.name);
            } else {
                assert_eq!(r.residual, Residual::ExactZero, "{}", r.name);
            }
        }
    }
}

#[test]
fn fock_mirrors_at_d4() {
    for name in IDENTITY_NAMES {
        let r = fock_check(name, 4, 0.6).expect("known identity");
        assert!(r.pass, "{name}: {:?}", r.residual);
        let v = r.residual.value().unwrap();
        if name.ends_with("_control") {
            assert!(v > 1e-3, "{name} control too small: {v}");
        } else {
            assert!(v < 1e-12, "{name}: {v}");
        }
    }
    assert!(fock_check("no_such_identity", 3, 0.6).is_none());
}

#[test]
fn relation_defect_is_confined_to_the_edge() {
    for p in [DeformParam::Q, DeformParam::NEG_Q, DeformParam::Q2] {
        for dim in [3, 5] {
            let (safe, edge) = relation_defects(p, dim, 0.6);
            assert!(safe < 1e-14, "{p} D={dim}: {safe}");
            assert!(edge > 1e-3, "{p} D={dim}: the edge failure must be visible");
        }
    }
}
