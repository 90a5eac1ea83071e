//! A ring shift and a broadcast on the simulated machine, with the
//! resulting ledger.

use std::convert::Infallible;

use iolab::netsim::{run_spmd, Flow, MachineConfig, Op, Payload};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = 4;
    let group: Vec<usize> = (0..p).collect();
    let run = run_spmd(MachineConfig::new(p, 64), vec![0.0f64; p], |ctx, acc: &mut f64| {
        let r = ctx.rank();
        match ctx.superstep() {
            0 => {
                ctx.send((r + 1) % p, Op::Recv, Payload::values(vec![r as f64]));
                ctx.expect((r + p - 1) % p);
                Ok::<_, Infallible>(Flow::Continue)
            }
            1 => {
                *acc += ctx.take_inbox().iter().map(|m| m.payload.values[0]).sum::<f64>();
                if r == 0 {
                    ctx.bcast(&group, 0, Payload::values(vec![1.0; 16])).unwrap();
                } else {
                    ctx.expect(0);
                }
                Ok(Flow::Continue)
            }
            _ => {
                *acc += ctx.take_inbox().iter().map(|m| m.payload.values.len() as f64).sum::<f64>();
                Ok(Flow::Done)
            }
        }
    })?;
    print!("{}", run.ledger.to_csv());
    println!("{}", serde_json::to_string_pretty(&run.ledger.summary())?);
    println!("final states {:?}", run.states);
    Ok(())
}
