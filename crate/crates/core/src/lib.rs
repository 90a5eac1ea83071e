//! Parallel I/O analysis for dense linear-algebra kernels.
//!
//! * [`daap`]: loop-nest program representation and parser.
//! * [`bound`]: symbolic I/O lower bounds for those programs.
//! * [`pebble`]: the red-blue pebble game on explicit computation graphs.
//! * [`netsim`]: a bulk-synchronous simulated machine that counts words.
//! * [`conflux`]: 2.5D LU factorization with tournament pivoting on that machine.
//! * [`models`]: closed-form per-rank communication models and sweeps.
//! * [`cli`]: the `iolab` command-line front end.

pub mod daap;
pub mod bound;
pub mod pebble;
pub mod netsim;
pub mod conflux;
pub mod models;
pub mod cli;
