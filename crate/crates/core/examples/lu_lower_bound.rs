//! Sequential and parallel I/O lower bounds for right-looking LU.
//!
//! `cargo run --example lu_lower_bound -- [N] [M] [P]`

use std::collections::HashMap;

use iolab::bound::program_bound;
use iolab::daap::parse_program;

const LU: &str = include_str!("../programs/lu.daap");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let n = args.first().copied().unwrap_or(1024.0);
    let m = args.get(1).copied().unwrap_or(4096.0);
    let p = args.get(2).copied().unwrap_or(1.0);

    let program = parse_program(LU)?;
    let params = HashMap::from([("N".to_string(), n as i64)]);
    let report = program_bound(&program, m, p as u64, &params)?;

    for s in &report.per_statement {
        println!(
            "{:>3}: |V| = {:<12} rho = {:<8.3} X0 = {:<10} Q >= {:.0}",
            s.id, s.volume, s.rho, s.x0, s.q
        );
        if let Some(psi) = &s.psi_closed_form {
            println!("     psi(X) = {psi}");
        }
    }
    println!("Q per rank  >= {:.0}", report.q_parallel);
    if let Some(f) = &report.q_parallel_closed_form {
        println!("closed form    {f}");
    }
    let leading = 2.0 * n.powi(3) / (3.0 * p * m.sqrt());
    println!("2N^3/(3P sqrt M) = {leading:.0}");
    Ok(())
}
