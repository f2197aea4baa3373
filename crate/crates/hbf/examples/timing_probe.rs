use hbf::driver::{alternate_mmse, Algorithm, SolverOptions};
use hbf::harness::ExperimentConfig;
use hbf::linalg::herm_eigen_desc;
use hbf::rng::{derive_rng, STREAM_INIT};
use rand::Rng;

fn main() {
    let config = ExperimentConfig { trials: 200, snr_db: vec![-20.0], seed: 1007, ..Default::default() };
    for algo in [Algorithm::Mo, Algorithm::Gevd, Algorithm::Omp] {
        for &snr in &[-20.0, -15.0] {
            let dims = config.dims_at(snr);
            let mut failures = 0;
            for trial in 0..200u64 {
                let ch = config.channel_for_trial(trial).unwrap();
                let seed = derive_rng(config.seed, STREAM_INIT, trial).gen::<u64>();
                let opts = SolverOptions { algorithm: algo, seed, ..Default::default() };
                match alternate_mmse(&ch, &dims, &opts) {
                    Ok((bf, _)) => {
                        if trial < 3 {
                            let g = bf.v_rf.adjoint() * &bf.v_rf;
                            let e = herm_eigen_desc(&g).0;
                            eprintln!("{algo} snr={snr} trial={trial}: v_rf gram eigs {:?}", e);
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        if failures <= 2 {
                            eprintln!("{algo} snr={snr} trial={trial}: ERR {e}");
                        }
                    }
                }
            }
            eprintln!("{algo} snr={snr}: {failures}/200 failures");
        }
    }
}
