//! Quick pure-system scan: sublattice order and xi_L/L curves around the
//! transition, plus the crossing estimate for a pair of sizes.
//!
//! Run with, e.g.:
//!   cargo run --release -p tsc-core --example pure_scan -- 9 12

use tsc_core::analysis::{find_crossing_from_ensembles, DisorderEnsemble};
use tsc_core::engine::{run_sample, RunParams, TemperatureLadder};
use tsc_core::lattice::{build_lattice, LatticeSpec};
use tsc_core::model::{compile_interactions, sample_disorder};
use tsc_core::observables::summarize;
use tsc_core::rng::derive_seed;

fn main() {
    let sizes: Vec<u32> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("size"))
        .collect();
    let sizes = if sizes.is_empty() { vec![9, 12] } else { sizes };
    let reps = 4u32;
    let params = RunParams {
        b: 12,
        measure_interval: 4,
        hard_cap_extra: 2,
    };
    let ladder = TemperatureLadder::geometric(1.40, 1.95, 12).unwrap();

    let mut ensembles = Vec::new();
    for &l in &sizes {
        let lat = build_lattice(LatticeSpec::new(l).unwrap()).unwrap();
        let table = compile_interactions(&lat).unwrap();
        let disorder = sample_disorder(&lat, 0.0, derive_seed("scan-dis", 0, &[l as u64])).unwrap();
        let mut chi0 = vec![Vec::new(); ladder.temps.len()];
        let mut chik = vec![Vec::new(); ladder.temps.len()];
        let start = std::time::Instant::now();
        for rep in 0..reps {
            let out = run_sample(
                &table,
                &lat.registry,
                &disorder,
                &ladder,
                params,
                derive_seed("scan-run", rep as u64, &[l as u64]),
            )
            .unwrap();
            let summaries = summarize(&out.series, &out.temps).unwrap();
            for (t, s) in summaries.iter().enumerate() {
                chi0[t].push((s.chi0[0] + s.chi0[1] + s.chi0[2]) / 3.0);
                chik[t].push((s.chik[0] + s.chik[1] + s.chik[2]) / 3.0);
            }
            if rep == 0 {
                println!("L = {l} (rep time {:?}, eq {} sweeps, equilibrated: {}, swap rates {:?})",
                    start.elapsed(), out.eq_sweeps, out.equilibrated,
                    out.swap_rates.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>());
                for s in &summaries {
                    println!(
                        "  T = {:.4}  E/n = {:+.4}  m2 = {:.4}",
                        s.t,
                        s.e_mean / (3.0 * table.n_qubits as f64),
                        (s.m2[0] + s.m2[1] + s.m2[2]) / 3.0
                    );
                }
            }
        }
        ensembles.push(DisorderEnsemble {
            p: 0.0,
            l,
            temps: ladder.temps.clone(),
            chi0,
            chik,
            excluded: 0,
        });
    }

    for ens in &ensembles {
        print!("L = {:2} xi/L:", ens.l);
        let all: Vec<usize> = (0..ens.n_samples()).collect();
        for t in 0..ens.temps.len() {
            let chi0: f64 = all.iter().map(|&s| ens.chi0[t][s]).sum::<f64>() / all.len() as f64;
            let chik: f64 = all.iter().map(|&s| ens.chik[t][s]).sum::<f64>() / all.len() as f64;
            let xi = tsc_core::observables::correlation_length(chi0, chik, ens.l as f64)
                .map(|x| x.value / ens.l as f64)
                .unwrap_or(f64::NAN);
            print!(" {:.3}", xi);
        }
        println!();
    }

    if ensembles.len() >= 2 {
        match find_crossing_from_ensembles(&ensembles, 200, derive_seed("scan-cross", 0, &[])) {
            Ok(est) => println!(
                "crossing: T_c = {:.4} +- {:.4} (status {:?}, fraction {:.2})",
                est.t_c, est.sigma_tc, est.status, est.crossing_fraction
            ),
            Err(e) => println!("crossing failed: {e}"),
        }
    }
}
