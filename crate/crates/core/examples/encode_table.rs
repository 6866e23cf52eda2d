//! Encode three configurations of the small example space and print them
//! as a table, one slot per column.

use solver_select::config_space::{builtin, SolverConfig};

fn main() {
    let space = builtin::example_fig2();
    let rows = [
        ("A", SolverConfig::empty().with_choice("solver", "direct")),
        (
            "B",
            SolverConfig::empty()
                .with_choice("solver", "gmres")
                .with_param("restart", 30.0)
                .with_choice("preconditioner", "cpr")
                .with_param("strong_th_2", 0.7)
                .with_choice("cpr_stage2", "sor"),
        ),
        (
            "C",
            SolverConfig::empty()
                .with_choice("solver", "gmres")
                .with_param("restart", 50.0)
                .with_choice("preconditioner", "system_amg")
                .with_param("strong_th_1", 0.5),
        ),
    ];
    let labels = space.slot_labels();
    println!("{:<4}{}", "", labels.join("  "));
    for (name, cfg) in rows {
        let enc = space.encode(&cfg).expect("valid configuration");
        let cells: Vec<String> = enc
            .as_slice()
            .iter()
            .zip(&labels)
            .map(|(v, l)| format!("{:>w$}", v, w = l.len()))
            .collect();
        println!("{name:<4}{}", cells.join("  "));
    }
}
