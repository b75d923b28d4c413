use denoise_core::gradsuite::{check, check_denoiser, check_stack, OPERATORS, TOL};

#[test]
fn every_operator_matches_finite_differences() {
    for op in OPERATORS {
        for seed in 0..4 {
            let r = check(op, seed).unwrap();
            assert!(r.max_rel_error() < TOL, "{op} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn tiny_stack_matches_finite_differences() {
    for seed in 0..2 {
        let r = check_stack(seed).unwrap();
        assert!(r.max_rel_error() < TOL, "seed {seed}: {r:?}");
    }
}

#[test]
fn two_stage_network_matches_finite_differences() {
    let r = check_denoiser(3).unwrap();
    assert!(r.max_rel_error() < TOL, "{r:?}");
}

#[test]
fn unknown_operator_is_rejected() {
    assert!(check("softmax", 0).is_err());
}

#[test]
fn deformable_offsets_near_integer_coordinates_are_covered() {
    // seed 10 draws an offset within 1e-6 of an integer
    for seed in 0..20 {
        let r = check("deform_conv2d", seed).unwrap();
        assert!(r.max_rel_error() < TOL, "seed {seed}: {r:?}");
    }
}
