//! Space definitions shipped under `spaces/`.

use super::{parse_space, ConfigSpace};

pub const EXAMPLE_FIG2: &str = include_str!("../../../../spaces/example_fig2.json");
pub const SEQUENCE_A_ANALOG: &str = include_str!("../../../../spaces/sequence_a_analog.json");
pub const SYNTHETIC: &str = include_str!("../../../../spaces/synthetic.json");

/// Direct solver or GMRES with CPR / System-AMG; 46 configurations.
pub fn example_fig2() -> ConfigSpace {
    parse_space(EXAMPLE_FIG2).expect("shipped space is valid")
}

/// Flow-heat solver menu: CPR, System-AMG and naive block preconditioners.
pub fn sequence_a_analog() -> ConfigSpace {
    parse_space(SEQUENCE_A_ANALOG).expect("shipped space is valid")
}

/// Abstract space of about two thousand configurations for the synthetic oracle.
pub fn synthetic() -> ConfigSpace {
    parse_space(SYNTHETIC).expect("shipped space is valid")
}

/// Look a shipped space up by file stem.
pub fn by_name(name: &str) -> Option<ConfigSpace> {
    match name {
        "example_fig2" => Some(example_fig2()),
        "sequence_a_analog" => Some(sequence_a_analog()),
        "synthetic" => Some(synthetic()),
        _ => None,
    }
}
