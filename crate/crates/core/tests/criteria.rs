mod support;

use support::criteria;

#[test]
fn algebraic_identities() {
    criteria::identities().unwrap();
}

#[test]
fn estimators_match_their_defining_sums() {
    criteria::oracle_equivalence().unwrap();
}

#[test]
fn working_models_match_reference_fits() {
    criteria::working_models().unwrap();
}
