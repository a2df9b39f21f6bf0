use qfreq::schemes::{generate_lona_sequence_diagnostic, SchemeSpec};
use qfreq::simulator::{sweep_curve, TrialConfig};
use std::sync::Arc;
use std::time::Instant;

fn crossings(seq: Vec<u32>, label: &str) {
    let len = seq.len();
    let seq: Arc<[u32]> = seq.into();
    let cfg = TrialConfig {
        omega0: 1.0,
        steps: len,
        scheme: SchemeSpec::lona(seq).unwrap(),
        seed: 12,
        trial_index: 0,
    };
    let cks: Vec<usize> = (1..=len).collect();
    let t0 = Instant::now();
    let sweep = sweep_curve(&cfg, &cks, 2000).unwrap();
    let mse3 = sweep.points.iter().find(|p| p.mse <= 1e-3).map(|p| p.n);
    let pv3 = sweep.points.iter().find(|p| p.mean_posterior_variance.unwrap() <= 1e-3).map(|p| p.n);
    let mse5 = sweep.points.iter().find(|p| p.mse <= 1e-5).map(|p| p.n);
    let pv5 = sweep.points.iter().find(|p| p.mean_posterior_variance.unwrap() <= 1e-5).map(|p| p.n);
    println!("  {label}: ensemble {:.1?}; 1e-3 mse@{:?} pv@{:?}; 1e-5 mse@{:?} pv@{:?}", t0.elapsed(), mse3, pv3, mse5, pv5);
    let tail: Vec<String> = sweep.points[19..].iter().map(|p| format!("{:.2e}", p.mean_posterior_variance.unwrap())).collect();
    println!("    pv[20..]: {}", tail.join(" "));
}

fn main() {
    for prune in [1e-6, 1e-5] {
        let t0 = Instant::now();
        let gen = generate_lona_sequence_diagnostic(1.0, 30, 1000, prune, 1 << 20).unwrap();
        println!(
            "lona d30 prune {prune:.0e}: gen {:.1?}, max branches {}, seq {:?}",
            t0.elapsed(),
            gen.branch_counts.iter().max().unwrap(),
            gen.sequence
        );
        crossings(gen.sequence, &format!("prune {prune:.0e}"));
    }
}
