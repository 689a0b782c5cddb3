//! Compares analytic parameter gradients with central finite differences
//! for the micro configuration of every network.

use mergenet::segnet::NetworkKind;
use mergenet::training::gradient_check;

fn main() -> mergenet::error::Result<()> {
    for kind in NetworkKind::ALL {
        let r = gradient_check(kind, &kind.micro_architecture(), 42)?;
        println!(
            "{:>8}: {} params, {} checked, {} skipped, {} reseeds, max rel error {:.2e}, max abs error {:.2e}",
            kind.name(),
            r.n_params,
            r.n_checked,
            r.n_skipped,
            r.reseeds,
            r.max_rel_error,
            r.max_abs_error
        );
    }
    Ok(())
}
