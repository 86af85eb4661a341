//! Finite-difference check of every layer and of the toy network.

use stressnet::neural::gradcheck::{full_suite, GradcheckConfig};

fn main() -> stressnet::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let cfg = GradcheckConfig { seed, ..Default::default() };
    for (name, report) in full_suite(&cfg)? {
        println!("{name}");
        for t in &report.tensors {
            println!(
                "  {:<16} {:>3} coords  max rel {:.2e}  (analytic {:+.3e}, numeric {:+.3e})",
                t.name, t.coords, t.max_rel_error, t.worst.0, t.worst.1
            );
        }
    }
    Ok(())
}
