//! Equilibration-tracker diagnostic: prints the bin table while a single
//! parallel-tempering run equilibrates.

use tsc_core::engine::*;
use tsc_core::lattice::{build_lattice, LatticeSpec};
use tsc_core::model::{compile_interactions, sample_disorder};
use tsc_core::rng::{derive_seed, stream_rng};

fn main() {
    let l = 12;
    let lat = build_lattice(LatticeSpec::new(l).unwrap()).unwrap();
    let table = compile_interactions(&lat).unwrap();
    let disorder = sample_disorder(&lat, 0.048, derive_seed("d", 0, &[])).unwrap();
    let ladder = TemperatureLadder::geometric(1.18, 1.42, 12).unwrap();
    let sys = System::new(&table, &lat.registry, &disorder).unwrap();
    let seed = derive_seed("r", 1, &[]);
    let mut rngs: Vec<_> = (0..=12u64).map(|s| stream_rng(&seed, s)).collect();
    let (swap_rng, rung_rngs) = rngs.split_first_mut().unwrap();
    let mut ens = ReplicaEnsemble::hot_start(&sys, 12, rung_rngs);
    let mut tracker = EquilibrationTracker::new(2);
    let betas = ladder.betas.clone();
    for sweep in 1u64..=(1 << 15) {
        for rung in 0..12u32 {
            let rep_id = ens.perm[rung as usize] as usize;
            metropolis_sweep(
                &sys,
                &mut ens.replicas[rep_id],
                betas[rung as usize],
                &mut rung_rngs[rung as usize],
            );
        }
        pt_swap_pass(&mut ens, &betas, sweep % 2 == 1, swap_rng);
        let cold = ens.replica_at_rung(0);
        tracker.feed(&[cold.energy as f64, cold.m2_avg(sys.class_size)]);
        if sweep.is_power_of_two() && sweep >= (1 << 10) {
            println!("sweep {sweep}: status {:?}", tracker.status());
            for obs in 0..2 {
                print!("  obs{obs}:");
                for (b, (count, mean, se)) in tracker.bin_table(obs).iter().enumerate() {
                    if *count > 0 && b >= 8 {
                        print!("  b{b}: {mean:.4}+-{se:.4}");
                    }
                }
                println!();
            }
        }
    }
}
