//! Finite-difference checks of every reverse pass, as the `gradcheck` subcommand runs them.
//!
//! cargo run --release --example gradcheck -- [seed...]

fn main() -> splat4d::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![0, 1, 2] } else { seeds };
    let mut failed = 0;
    for seed in seeds {
        for res in splat4d::gradcheck::run_all(seed)? {
            let tag = if res.passed() { "ok" } else { "FAILED" };
            failed += usize::from(!res.passed());
            println!(
                "seed {seed:<3} {:<10} {tag:<6} max rel err {:.2e} (tol {:.0e}) over {} entries",
                res.name, res.max_rel_err, res.tolerance, res.checked
            );
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
    Ok(())
}
