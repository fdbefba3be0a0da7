//! The benchmark fixture suite used for policy comparisons.
//!
//! Fixture sources live in `fixtures/` and are compiled in; the RSA ladder is
//! generated from its parameters.

use crate::analysis::{annotate, AnnotationPolicy, MarkedProgram};
use crate::attacks::{ladder_source, LadderParams};
use crate::isa::{parse_program, AsmError};

pub const FIXTURES: [(&str, &str); 9] = [
    ("branchy_loop", include_str!("../fixtures/branchy_loop.s")),
    ("nested_if", include_str!("../fixtures/nested_if.s")),
    ("relax", include_str!("../fixtures/relax.s")),
    ("ubt_loop", include_str!("../fixtures/ubt_loop.s")),
    ("branches15", include_str!("../fixtures/branches15.s")),
    ("jump_table", include_str!("../fixtures/jump_table.s")),
    ("list_walk", include_str!("../fixtures/list_walk.s")),
    ("bounded_copy", include_str!("../fixtures/bounded_copy.s")),
    ("straight_line", include_str!("../fixtures/straight_line.s")),
];

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub source: String,
}

impl Fixture {
    pub fn build(&self) -> Result<MarkedProgram, AsmError> {
        Ok(annotate(&parse_program(&self.source)?, &AnnotationPolicy::default()))
    }
}

/// Source of a named fixture, including `rsa`.
pub fn fixture(name: &str) -> Option<Fixture> {
    let source = if name == "rsa" {
        ladder_source(&LadderParams::standard())
    } else {
        FIXTURES.iter().find(|(n, _)| *n == name)?.1.to_string()
    };
    Some(Fixture {
        name: name.to_string(),
        source,
    })
}

/// Every fixture, RSA first.
pub fn benchmark_suite() -> Vec<Fixture> {
    std::iter::once("rsa")
        .chain(FIXTURES.iter().map(|(n, _)| *n))
        .map(|n| fixture(n).unwrap())
        .collect()
}
