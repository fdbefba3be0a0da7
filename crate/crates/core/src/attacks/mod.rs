//! Victim and attacker programs, and the drivers that run attack protocols on
//! the simulator.

mod outcome;
mod rsa;
mod specfetch;
mod spectre;

pub use outcome::{AttackKind, AttackOutcome, TimingSample};
pub use rsa::{
    build_rsa_ladder, key_branch_index, ladder_program, ladder_source, LadderParams, KEY_BASE,
    KEY_STRIDE, MAX_KEY_BITS, OUT_BASE, STANDARD_KEY, STANDARD_KEY_BITS, TIMES_BASE,
};
pub use specfetch::{
    predictor_independent_of_key, run_specfetch_attack, trained_predictor, SpecfetchParams,
};
pub use spectre::{
    build_ct_gadget, build_spectre, build_spectre_v1, run_spectre_attack, spectre_source, Gadget,
    SpectreParams, Transmit, PROBE_BASE, PROBE_LINES, PROBE_STRIDE, RESULTS_BASE, SECRET_ADDR,
    SIZE_ADDR,
};
