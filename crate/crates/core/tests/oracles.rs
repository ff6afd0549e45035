mod common;

use common::{gradient_summaries, kernel_oracle_errors};

#[test]
fn kernels_match_nested_loop_oracles() {
    let e = kernel_oracle_errors(100, 5);
    assert!(e.conv_f64 <= 1e-5 && e.dense_f64 <= 1e-5, "{e:?}");
    assert!(e.conv_f32 <= 1e-5 && e.dense_f32 <= 1e-5, "{e:?}");
}

#[test]
fn every_layer_type_passes_gradient_check() {
    for s in gradient_summaries(20, 9) {
        assert!(s.passes(1e-3, 20), "{s:?}");
    }
}
