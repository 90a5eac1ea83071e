//! Exhaustive minimum-I/O pebbling next to the analytic lower bound.

use std::collections::HashMap;

use iolab::bound::program_bound;
use iolab::daap::parse_program;
use iolab::pebble::{gen_lu_cdag, min_io_search, toy_programs, validate_schedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lu = parse_program(include_str!("../programs/lu.daap"))?;
    let mut cases = vec![("lu n=3".to_string(), gen_lu_cdag(3)?, lu, 3)];
    for t in toy_programs() {
        cases.push((t.name.to_string(), t.cdag(), t.program(), t.n));
    }
    println!("{:<24} {:>2} {:>8} {:>6}", "graph", "M", "bound", "Q_opt");
    for (name, g, program, n) in cases {
        for m in [4, 6] {
            let bound = program_bound(&program, m as f64, 1, &HashMap::from([("N".to_string(), n)]))?.q_sequential;
            let best = min_io_search(&g, m, 20_000_000)?;
            assert_eq!(validate_schedule(&g, &best.schedule, m, 1)?, best.q);
            println!("{name:<24} {m:>2} {bound:>8.2} {:>6}", best.q);
        }
    }
    Ok(())
}
