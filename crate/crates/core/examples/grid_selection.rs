//! Grid chosen for a range of memory sizes.

use iolab::conflux::select_grid;

fn main() {
    let (p, n) = (64, 4096);
    for m in [1 << 18, 1 << 19, 1 << 20, 1 << 21, 1 << 22] {
        match select_grid(p, n, m, None) {
            Ok(g) => println!("M = {m:>8}: grid {:?}, {} active, v = {}", g.dims(), g.active_ranks, g.v),
            Err(e) => println!("M = {m:>8}: {e}"),
        }
    }
}
