//! Checks X-partition constraints for the LU graph split by outer step.

use iolab::pebble::{check_xpartition, gen_lu_cdag, XPartition};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 4;
    let g = gen_lu_cdag(n)?;
    let mut by_step = vec![Vec::new(); n - 1];
    for v in g.compute_vertices() {
        let label = g.label(v).unwrap_or_default();
        let k: usize = label[label.find('[').unwrap() + 1..].split([',', ']']).next().unwrap().parse()?;
        by_step[k].push(v);
    }
    for x in [4, 8, 12] {
        let check = check_xpartition(&g, &XPartition { subcomputations: by_step.clone(), x })?;
        println!("X = {x:>2}: valid = {}, acyclic = {}", check.valid, check.acyclic);
        for (k, s) in check.sets.iter().enumerate() {
            println!("  step {k}: |Dom| <= {:>2}, |Min| = {:>2}", s.dom_min_upper, s.min_set);
        }
    }
    Ok(())
}
