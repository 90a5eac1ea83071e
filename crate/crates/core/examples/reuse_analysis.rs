//! Reuse between statements: a shared input and a generated operand.

use std::collections::HashMap;

use iolab::bound::{program_bound, ReuseRecord};
use iolab::daap::parse_program;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = HashMap::from([("N".to_string(), 100)]);
    let m = 16.0;
    for (name, src) in [
        ("shared operand", include_str!("../programs/double_mm.daap")),
        ("generated operand", include_str!("../programs/onthefly.daap")),
    ] {
        let report = program_bound(&parse_program(src)?, m, 1, &params)?;
        println!("{name}");
        for s in &report.per_statement {
            println!("  {}: Q >= {:.0}, access weights {:?}", s.id, s.q, s.weights);
        }
        for r in &report.reuse {
            match r {
                ReuseRecord::InputOverlap { array, statements, amount, .. } => {
                    println!("  {array} read by {} : {amount:.0} loads shared", statements.join(", "))
                }
                ReuseRecord::OutputOverlap { producer, consumer, array, .. } => {
                    println!("  {array} produced by {producer} and consumed by {consumer}")
                }
            }
        }
        println!(
            "  total Q >= {:.0} ({})",
            report.q_sequential,
            report.q_parallel_closed_form.as_deref().unwrap_or("-")
        );
    }
    Ok(())
}
