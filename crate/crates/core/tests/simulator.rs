#[path = "support/physics.rs"]
mod physics;

fn check(v: physics::Verdict) {
    assert!(v.passed, "{}: {}", v.name, v.detail);
}

#[test]
fn focal_plane_has_no_disparity() {
    check(physics::focal_plane());
}

#[test]
fn combined_view_is_exact_average() {
    check(physics::combined_average());
}

#[test]
fn psf_symmetry_and_normalisation() {
    check(physics::psf_mirror_and_sum());
}

#[test]
fn disparity_grows_with_defocus() {
    check(physics::disparity_monotone());
}

#[test]
fn disparity_sign_follows_focal_side() {
    check(physics::disparity_sign_flip());
}

#[test]
fn wider_aperture_gives_larger_disparity() {
    check(physics::aperture_ordering());
}

#[test]
fn edge_centroid_separation() {
    check(physics::edge_centroid_shift());
}

#[test]
fn combined_view_is_blurrier_than_one_view() {
    check(physics::combined_blur_wider());
}

#[test]
fn rendering_preserves_mean_intensity() {
    check(physics::energy_conservation());
}

#[test]
fn depth_inversion_round_trips() {
    let cam = dpdnet::sim::CameraConfig::default();
    for r in [-4.0, 0.0, 0.7, 6.3] {
        let d = physics::depth_for_radius(&cam, r);
        assert!((cam.coc_radius(d).unwrap() - r).abs() < 1e-9);
    }
}
