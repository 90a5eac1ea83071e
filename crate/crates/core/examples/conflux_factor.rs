//! Factors a seeded random matrix on a simulated 2.5D grid and compares the
//! measured per-step volume with the model.
//!
//! `cargo run --release --example conflux_factor -- [N] [P] [M]`

use iolab::conflux::{factorize, FactorConfig, Matrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let n = args.first().copied().unwrap_or(256);
    let p = args.get(1).copied().unwrap_or(8);
    let m = args.get(2).copied().unwrap_or(16384);

    let config = FactorConfig::auto(p, n, m)?;
    let r = factorize(&Matrix::random(n, 42), &config)?;
    let s = &r.summary;
    println!("grid {:?}, v = {}, residual {:.2e}", s.grid.dims(), s.grid.v, r.residual.unwrap_or(f64::NAN));
    println!(
        "max received {} words, leading model {:.0}, ratio {:.3}, imbalance {:.3}",
        s.max_received,
        s.leading_model,
        s.max_received as f64 / s.leading_model,
        s.imbalance
    );
    println!("{:>4} {:>10} {:>12}", "t", "measured", "model");
    for st in &s.steps {
        println!("{:>4} {:>10} {:>12.0}", st.t, st.max_received, st.model);
    }
    println!("by op {:?}", s.ledger.by_op);
    Ok(())
}
