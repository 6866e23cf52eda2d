//! Restarted GMRES on the 2D Laplacian with and without ILU(0), printing
//! the residual history.

use solver_select::sparse::{gmres, setup, CsrMatrix, GmresParams, PrecondKind};

fn main() {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let a = CsrMatrix::laplacian_2d(n, n);
    let b = vec![1.0; a.n()];
    let p = GmresParams {
        max_iter: 2000,
        ..Default::default()
    };
    for kind in [PrecondKind::Identity, PrecondKind::Ilu { level: 0 }] {
        let m = setup(&kind, &a).unwrap();
        let out = gmres(&a, &b, m.as_ref(), &p);
        println!(
            "{:<10} converged={} iterations={} residual={:.2e} units={}",
            kind.label(),
            out.converged,
            out.iterations,
            out.residual,
            out.total_units()
        );
        for (k, r) in out.history.iter().enumerate().step_by(10) {
            println!("    {k:>4} {r:.3e}");
        }
    }
}
