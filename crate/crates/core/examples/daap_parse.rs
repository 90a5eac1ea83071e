//! Parses a loop nest, prints its statements and checks disjoint access.

use std::collections::HashMap;

use iolab::daap::{iteration_count, parse_program, symbolic_count};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let src = std::env::args()
        .nth(1)
        .map(std::fs::read_to_string)
        .transpose()?
        .unwrap_or_else(|| include_str!("../programs/lu.daap").to_string());
    let program = parse_program(&src)?;
    print!("{program}");
    let params = HashMap::from([("N".to_string(), 16)]);
    for s in &program.statements {
        let dims: Vec<String> = s.inputs.iter().map(|a| format!("{a}: dim {}", a.access_dimension())).collect();
        println!("{}: {} iterations at N = 16, |V| = {}", s.id, iteration_count(s, &params)?, symbolic_count(s).poly);
        println!("  {}", dims.join(", "));
    }
    for e in &program.producer_consumer {
        println!("{e:?}");
    }
    if let Err(e) = parse_program(include_str!("../programs/lu_invalid.daap")) {
        println!("rejected: {e}");
    }
    Ok(())
}
