mod common;

use common::gradcheck::all_checks;

#[test]
fn every_layer_passes_single_precision_check() {
    let checks = all_checks::<f32>(11, 1e-2);
    for c in &checks {
        assert!(c.rel_err < 1e-3, "{}/{}: relative error {:.3e}", c.layer, c.wrt, c.rel_err);
    }
}

#[test]
fn every_layer_passes_double_precision_check() {
    let checks = all_checks::<f64>(12, 1e-6);
    for c in &checks {
        assert!(c.rel_err < 1e-6, "{}/{}: relative error {:.3e}", c.layer, c.wrt, c.rel_err);
    }
}
