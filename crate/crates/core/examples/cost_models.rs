//! Strong and weak scaling sweeps of the leading-term cost models.

use iolab::models::{pow2_range, sweep, sweep_csv, MemPolicy, Model, SizeRule};

fn main() {
    let ranks = pow2_range(64, 1024);
    println!("strong scaling, N = 16384");
    print!("{}", sweep_csv(&sweep(&Model::ALL, SizeRule::Fixed(16384.0), &ranks, MemPolicy::Fig5)));
    println!("\nweak scaling, N = 3200 cbrt(P)");
    print!("{}", sweep_csv(&sweep(&[Model::Conflux, Model::TwoD], SizeRule::Weak(3200.0), &ranks, MemPolicy::Fig5)));
}
