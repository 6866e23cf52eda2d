//! Property suites. Run alone with `cargo test --test properties`.

mod common;

#[test]
fn preconditioners_are_linear() {
    common::preconditioner_linearity(256).unwrap();
}

#[test]
fn reward_is_negative_log_time() {
    common::reward_identity(512).unwrap();
}

#[test]
fn encodings_are_injective() {
    common::encoding_injectivity(1024).unwrap();
}

#[test]
fn exploration_is_uniform() {
    common::exploration_uniformity(5).unwrap();
}

#[test]
fn space_sampler_is_uniform() {
    common::sampler_uniformity().unwrap();
}

#[test]
fn summarize_matches_hand_counts() {
    common::summarize_fixtures().unwrap();
}
