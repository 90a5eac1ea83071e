//! Random loop nests for property tests.

use proptest::prelude::*;

use super::{parse_program, Program};

const VARS: [&str; 3] = ["i", "j", "k"];

/// A single-statement nest of depth `depth`. Input `a` reads the variables
/// whose bits are set in `masks[a]`; inner loops start at the enclosing
/// variable plus one when the matching bit of `shifted` is set.
pub(crate) fn nest(depth: usize, masks: &[u8], shifted: u8) -> String {
    let vars = &VARS[..depth];
    let mut masks: Vec<u8> = masks.iter().map(|m| m & ((1 << depth) - 1)).filter(|&m| m != 0).collect();
    if masks.is_empty() {
        masks.push(1);
    }
    let covered = masks.iter().fold(0, |a, m| a | m);
    masks[0] |= ((1 << depth) - 1) & !covered;
    let mut src = String::from("param N\n");
    for (d, v) in vars.iter().enumerate() {
        let lo = if d > 0 && shifted >> d & 1 == 1 {
            format!("{}+1", vars[d - 1])
        } else {
            "0".to_string()
        };
        src.push_str(&format!("{}loop {v} in {lo}..N {{\n", "  ".repeat(d)));
    }
    let access = |m: u8| {
        vars.iter()
            .enumerate()
            .filter(|(b, _)| m >> b & 1 == 1)
            .map(|(_, v)| *v)
            .collect::<Vec<_>>()
            .join(",")
    };
    let inputs: Vec<String> = masks
        .iter()
        .enumerate()
        .map(|(a, &m)| format!("{}[{}]", ["A", "B", "D"][a], access(m)))
        .collect();
    src.push_str(&format!(
        "{}S: C[{}] = f({})\n",
        "  ".repeat(depth),
        vars.join(","),
        inputs.join(", ")
    ));
    for d in (0..depth).rev() {
        src.push_str(&format!("{}}}\n", "  ".repeat(d)));
    }
    src
}

pub(crate) fn statement_strategy() -> impl Strategy<Value = Program> {
    (1usize..=3, prop::collection::vec(0u8..8, 1..=3), 0u8..8)
        .prop_map(|(d, masks, shifted)| parse_program(&nest(d, &masks, shifted)).expect("generated program parses"))
}
