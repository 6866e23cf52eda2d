//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed; exits non-zero on any FAIL.
//!
//! Timing-only checks (criterion 5) are reported but only enforced when
//! `SOLVER_SELECT_STRICT_TIMING` is set.

mod common;

use solver_select::config_space::{builtin, parse_space, CandidateSet, SolverConfig};
use solver_select::gbm::{GbmParams, PipelineModel};
use solver_select::harness::{run_experiment, Experiment, ExperimentConfig, Policy, RepeatOutput};
use solver_select::perfdata::{PerfRecord, PolicyTag, RecordIds};
use solver_select::selector::SelectorConfig;
use solver_select::simenv::flowheat::FlowHeatParams;
use solver_select::simenv::oracle::OracleParams;
use solver_select::simenv::SequenceKind;
use solver_select::sparse::{gmres, setup, CsrMatrix, GmresParams, PrecondKind, TwoLevelParams};
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1_encoding_golden() -> Outcome {
    let space = builtin::example_fig2();
    let cases = [
        (
            SolverConfig::empty().with_choice("solver", "direct"),
            vec![1., 0., 0., 0., 0., 0., 0., 0., 0.],
        ),
        (
            SolverConfig::empty()
                .with_choice("solver", "gmres")
                .with_param("restart", 30.0)
                .with_choice("preconditioner", "cpr")
                .with_param("strong_th_2", 0.7)
                .with_choice("cpr_stage2", "sor"),
            vec![0., 1., 0., 1., 1., 0., 30., 0., 0.7],
        ),
        (
            SolverConfig::empty()
                .with_choice("solver", "gmres")
                .with_param("restart", 50.0)
                .with_choice("preconditioner", "system_amg")
                .with_param("strong_th_1", 0.5),
            vec![0., 1., 1., 0., 0., 0., 50., 0.5, 0.],
        ),
    ];
    let exact = cases
        .iter()
        .filter(|(c, want)| space.encode(c).map(|e| e.as_slice() == want.as_slice()).unwrap_or(false))
        .count();
    outcome(
        exact == 3 && space.size() == 46,
        format!("{exact}/3 vectors exact, |A| = {}", space.size()),
    )
}

fn synthetic_config(policy: Policy) -> ExperimentConfig {
    ExperimentConfig {
        name: "acceptance-synthetic".into(),
        policy,
        environment: SequenceKind::Synthetic,
        n_sims: 15,
        repeats: 5,
        seed: 1,
        variation_seed: 2,
        oracle: OracleParams {
            f_fail: 0.35,
            sigma: 0.0,
            ..Default::default()
        },
        selector: SelectorConfig {
            num_initial: 64,
            batch_size: 64,
            max_failures: 20,
            ..Default::default()
        },
        ..Default::default()
    }
}

struct Online {
    outs: Vec<RepeatOutput>,
    candidates: usize,
    failure_fraction: f64,
    seconds: f64,
}

fn online_runs() -> Online {
    let t = Instant::now();
    let exp = Experiment::new(synthetic_config(Policy::Selection)).unwrap();
    let outs = exp.run(None).unwrap();
    Online {
        candidates: exp.candidates().len(),
        failure_fraction: exp.oracle().unwrap().failure_fraction(),
        outs,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn c2_top5(on: &Online) -> Outcome {
    let cutoff = 0.05 * on.candidates as f64;
    let (mut good, mut total) = (0usize, 0usize);
    let mut worst = 1.0f64;
    for o in &on.outs {
        let half = o.report.systems.len() as u64 / 2;
        let late: Vec<_> = o.report.attempts.iter().filter(|a| a.system >= half).collect();
        let g = late.iter().filter(|a| (a.rank.unwrap() as f64) < cutoff).count();
        worst = worst.min(g as f64 / late.len() as f64);
        good += g;
        total += late.len();
    }
    let share = good as f64 / total as f64;
    outcome(
        share >= 0.90 && (on.candidates as f64 - 2000.0).abs() <= 100.0
            && (on.failure_fraction - 0.35).abs() <= 0.01
            && on.seconds < 120.0,
        format!(
            "{:.1}% of late decisions in the top 5% (worst repeat {:.1}%, need >= 90%); |A| = {}, always-fail {:.3}, {:.1} s",
            100.0 * share,
            100.0 * worst,
            on.candidates,
            on.failure_fraction,
            on.seconds
        ),
    )
}

fn c3_guided_success(on: &Online) -> Outcome {
    let (mut n, mut f) = (0usize, 0usize);
    for o in &on.outs {
        for a in o.report.guided() {
            n += 1;
            f += usize::from(!a.success);
        }
    }
    let rate = f as f64 / n as f64;
    outcome(
        rate < 0.05,
        format!("{f}/{n} pipeline-guided attempts failed = {:.2}% (need < 5%)", 100.0 * rate),
    )
}

fn mean_reward(outs: &[RepeatOutput]) -> f64 {
    let r: Vec<f64> = outs
        .iter()
        .flat_map(|o| o.report.attempts.iter().filter(|a| a.success).map(|a| -a.time.ln()))
        .collect();
    r.iter().sum::<f64>() / r.len() as f64
}

fn c4_expert(on: &Online) -> Outcome {
    let mut prior = on.outs[0].dataset.clone();
    for o in &on.outs[1..] {
        prior.extend_from(&o.dataset).unwrap();
    }
    let cfg = ExperimentConfig {
        prior: Some("in-memory".into()),
        ..synthetic_config(Policy::Expert)
    };
    let outs = Experiment::new(cfg).unwrap().run(Some(&prior)).unwrap();
    let failures: usize = outs.iter().map(|o| o.report.failed_attempts()).sum();
    let (expert, online) = (mean_reward(&outs), mean_reward(&on.outs));
    outcome(
        failures == 0 && expert >= online - 0.05,
        format!(
            "prior {} records; expert failures {failures}, mean reward {expert:.4} vs online {online:.4} (need >= online - 0.05)",
            prior.len()
        ),
    )
}

fn c5_overhead() -> Outcome {
    // 10 × 10 × 10 × 10 = 10⁴ configurations.
    let grid = |name: &str| {
        format!(r#"{{"kind": "numerical", "name": "{name}", "grid": [0,1,2,3,4,5,6,7,8,9]}}"#)
    };
    let opts: Vec<String> = (0..10).map(|i| format!(r#"{{"name": "o{i}"}}"#)).collect();
    let text = format!(
        r#"{{"kind": "sequence", "children": [{{"kind": "categorical", "name": "c", "options": [{}]}}, {}, {}, {}]}}"#,
        opts.join(","),
        grid("x"),
        grid("y"),
        grid("z")
    );
    let space = parse_space(&text).unwrap();
    let cands = CandidateSet::new(&space);
    assert_eq!(cands.len(), 10_000);

    let ids = RecordIds::default();
    let mut records = Vec::with_capacity(10_000);
    for i in 0..10_000usize {
        let k = (i * 7919) % cands.len();
        let e = cands.encodings[k].as_slice().to_vec();
        let ctx = vec![(i % 97) as f64 / 97.0, (i % 13) as f64, 0.5];
        let v = e[0] * 0.3 + (e[10] - 4.0).powi(2) * 0.05 + e[11] * ctx[0];
        if (e[12] as usize + i) % 3 == 0 {
            records.push(PerfRecord::failure(e, ctx, Some(1.0), ids, PolicyTag::Random));
        } else {
            records.push(PerfRecord::success(e, ctx, (-v).exp() + 1e-3, ids, PolicyTag::Random).unwrap());
        }
    }
    let t = Instant::now();
    let model = PipelineModel::fit(&records, &GbmParams::default()).unwrap();
    let retrain = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let reps = 20;
    for r in 0..reps {
        let sel = model
            .select_mask(&cands.encodings, &[r as f64 / reps as f64, 3.0, 0.5])
            .unwrap();
        std::hint::black_box(sel.argmax());
    }
    let select_ms = 1e3 * t.elapsed().as_secs_f64() / reps as f64;
    let ok = select_ms <= 50.0 && retrain <= 5.0;
    let strict = std::env::var_os("SOLVER_SELECT_STRICT_TIMING").is_some();
    outcome(
        ok || !strict,
        format!(
            "predict+argmax {select_ms:.1} ms per system (<= 50), retrain on 10^4 records {retrain:.2} s (<= 5){}",
            if ok { "" } else { " [over budget, timing not enforced]" }
        ),
    )
}

fn c6_numerics() -> Outcome {
    let a = CsrMatrix::laplacian_2d(32, 32);
    let n = a.n();
    let b: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 37) % 11) as f64 / 11.0).collect();
    let p = GmresParams {
        restart: 30,
        tol: 1e-8,
        max_iter: 5000,
    };
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iters = std::collections::BTreeMap::new();
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for kind in common::preconditioner_menu() {
        let m = setup(&kind, &a).unwrap();
        let out = gmres(&a, &b, m.as_ref(), &p);
        let mut r = vec![0.0; n];
        a.residual(&b, &out.x, &mut r);
        let rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bn;
        worst = worst.max(rel);
        if !(out.converged && rel <= 1e-8) {
            failed.push(kind.label());
        }
        iters.insert(kind.label(), out.iterations);
    }
    let ilu0 = iters[&PrecondKind::Ilu { level: 0 }.label()];
    let none = iters[&PrecondKind::Identity.label()];
    let amg = iters[&PrecondKind::TwoLevel(TwoLevelParams::default()).label()];
    let jac = iters[&PrecondKind::Jacobi.label()];
    outcome(
        failed.is_empty() && ilu0 < none && amg < jac,
        format!(
            "{} preconditioners, worst true residual {worst:.1e}{}; ILU(0) {ilu0} < none {none}; two-level {amg} < Jacobi {jac}",
            iters.len(),
            if failed.is_empty() { String::new() } else { format!(", failed: {failed:?}") }
        ),
    )
}

fn flowheat_config(policy: Policy) -> ExperimentConfig {
    ExperimentConfig {
        name: "acceptance-flowheat".into(),
        policy,
        environment: SequenceKind::Flowheat,
        n_sims: 5,
        repeats: 1,
        seed: 1,
        variation_seed: 2,
        flowheat: FlowHeatParams::default(),
        ..Default::default()
    }
}

fn c7_flowheat() -> Outcome {
    let t = Instant::now();
    let rand = run_experiment(&flowheat_config(Policy::Random)).unwrap().remove(0).report;
    let sel = run_experiment(&flowheat_config(Policy::Selection)).unwrap().remove(0).report;
    let e = sel.exploration_systems();
    let slope = |c: &[f64]| {
        let start = if e == 0 { 0.0 } else { c[e - 1] };
        (c[c.len() - 1] - start) / (c.len() - e) as f64
    };
    let (cs, cr) = (sel.curve(), rand.curve());
    let (ss, sr) = (slope(&cs), slope(&cr));
    let ratio = ss / sr;
    let grid = FlowHeatParams::default();
    outcome(
        ratio <= 0.70 && e < cs.len() && e < cr.len() && sel.errors.is_empty(),
        format!(
            "{}x{} grid, {} / {} systems; cost per system after {e} exploration systems: selection {ss:.3e} vs random {sr:.3e}, ratio {ratio:.2} (need <= 0.70), {:.0} s",
            grid.nx,
            grid.ny,
            cs.len(),
            cr.len(),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        let name = entry.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        if !name.ends_with("overhead.csv") {
            out.push((name, std::fs::read(&entry).unwrap()));
        }
    }
    out.sort();
    out
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn c8_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let small_syn = ExperimentConfig {
        n_sims: 3,
        repeats: 2,
        oracle: OracleParams {
            steps_per_sim: 30,
            ..Default::default()
        },
        selector: SelectorConfig {
            num_initial: 16,
            batch_size: 16,
            ..Default::default()
        },
        ..synthetic_config(Policy::Selection)
    };
    let small_fh = ExperimentConfig {
        n_sims: 2,
        flowheat: FlowHeatParams {
            nx: 12,
            ny: 12,
            t_end: 1e7,
            ..Default::default()
        },
        selector: SelectorConfig {
            num_initial: 8,
            batch_size: 8,
            ..Default::default()
        },
        ..flowheat_config(Policy::Selection)
    };
    let mut compared = 0;
    let mut differing = Vec::new();
    for (label, cfg) in [("synthetic", small_syn), ("flowheat", small_fh)] {
        let mut trees = Vec::new();
        for run in 0..2 {
            let dir = tmp.path().join(format!("{label}_{run}"));
            let cfg = ExperimentConfig {
                output: Some(dir.clone()),
                ..cfg.clone()
            };
            run_experiment(&cfg).unwrap();
            trees.push(files(&dir));
        }
        compared += trees[0].len();
        if trees[0] != trees[1] {
            differing.push(label);
        }
    }
    outcome(
        differing.is_empty() && compared > 0,
        format!(
            "{compared} output files compared byte for byte across re-runs{}",
            if differing.is_empty() { String::new() } else { format!("; differ: {differing:?}") }
        ),
    )
}

fn c9_properties() -> Outcome {
    let checks: [(&str, Result<(), String>); 5] = [
        ("linearity", common::preconditioner_linearity(64)),
        ("reward", common::reward_identity(128)),
        ("injectivity", common::encoding_injectivity(256)),
        ("uniform exploration", common::exploration_uniformity(3)),
        ("summarize", common::summarize_fixtures()),
    ];
    let failed: Vec<String> = checks
        .iter()
        .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}")))
        .collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            "preconditioner linearity, reward identity, encoding injectivity, chi-square exploration, summarize fixtures".into()
        } else {
            failed.join("; ")
        },
    )
}

fn report(k: usize, title: &str, o: &Outcome) -> bool {
    println!(
        "[{}] criterion {k}: {title}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o.pass
}

fn main() {
    let mut all = true;
    all &= report(1, "encoding golden vectors", &c1_encoding_golden());
    let online = online_runs();
    all &= report(2, "selection within top 5%", &c2_top5(&online));
    all &= report(3, "post-exploration success", &c3_guided_success(&online));
    all &= report(4, "expert vs online", &c4_expert(&online));
    all &= report(5, "selection overhead", &c5_overhead());
    all &= report(6, "numerics", &c6_numerics());
    all &= report(7, "flow-heat cumulative cost", &c7_flowheat());
    all &= report(8, "determinism", &c8_determinism());
    all &= report(9, "property suites", &c9_properties());
    if !all {
        std::process::exit(1);
    }
}
