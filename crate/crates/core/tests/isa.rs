//! Assembler and tag-word invariants.

mod common;

use common::random_program;
use proptest::prelude::*;
use speccontrol::analysis::{annotate, AnnotationPolicy};
use speccontrol::isa::{parse_program, print_program, TagWord, TAG_BITS};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn printed_annotated_programs_reparse_identically(seed in any::<u64>()) {
        let m = annotate(&random_program(seed), &AnnotationPolicy::default());
        let text = print_program(&m.program);
        let again = parse_program(&text).unwrap();
        prop_assert_eq!(&again.instructions, &m.program.instructions);
        prop_assert_eq!(&again.regions, &m.program.regions);
        prop_assert_eq!(print_program(&again), text);
    }

    #[test]
    fn decode_ignores_bits_above_the_word(word in any::<u16>()) {
        let t = TagWord::decode(word);
        prop_assert_eq!(t.encode(), word & ((1 << TAG_BITS) - 1));
        prop_assert_eq!(TagWord::decode(t.encode()), t);
    }
}
