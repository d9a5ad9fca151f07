//! Effective ranks and the critical index for the built-in spectrum families.

use benign_lab::spectrum::{CovarianceSpectrum, KIndex};

fn main() -> benign_lab::Result<()> {
    let n = 100;
    let families = [
        ("spike(2, 0.001, 5000)", CovarianceSpectrum::spike(2, 0.001, 5000)?),
        ("poly(1, 2000)", CovarianceSpectrum::poly(1.0, 2000)?),
        ("exp(0.995, 2000)", CovarianceSpectrum::exp(0.995, 2000)?),
        ("isotropic(500)", CovarianceSpectrum::isotropic(500)?),
    ];
    println!("{:<24} {:>6} {:>12} {:>12} {:>12}", "spectrum", "k", "s_k", "r_k", "R_k");
    for (name, spec) in &families {
        match spec.critical_index(n, 1.0).k {
            KIndex::Finite(k) => {
                let rep = spec.effective_ranks(k)?;
                println!("{name:<24} {k:>6} {:>12.4} {:>12.1} {:>12.1}", rep.s, rep.r, rep.r_big);
            }
            KIndex::Infinite => println!("{name:<24} {:>6}", "inf"),
        }
    }

    let spec = CovarianceSpectrum::poly(1.0, 2000)?;
    let set: Vec<usize> = (10..2000).step_by(3).collect();
    let sub = spec.subset_ranks(&set)?;
    println!("\nsubset of {} coordinates: r = {:.1}, R = {:.1}, r^2 = {:.1}", set.len(), sub.r, sub.r_big, sub.r * sub.r);
    Ok(())
}
