//! Property checks shared by the `properties` and `acceptance` targets.
//! Each runs a fixed-seed proptest runner for `cases` cases.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use solver_select::config_space::{builtin, CandidateSet, ConfigSpace};
use solver_select::perfdata::{
    reward_from_time, summarize, Dataset, PerfRecord, PolicyTag, RecordIds,
};
use solver_select::selector::{Provenance, Selector, SelectorConfig};
use solver_select::simenv::oracle;
use solver_select::sparse::{
    setup, CprParams, CsrMatrix, PrecondKind, SecondStage, SmootherKind, Strength,
    TemperatureSmoother, TwoLevelParams,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::sync::{Arc, OnceLock};

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

/// Five-point Laplacian with a skew convection term, 2 unknowns per "cell".
pub fn coupled_test_matrix() -> CsrMatrix {
    let base = CsrMatrix::laplacian_2d(8, 8);
    let mut t = base.triplets();
    for i in 0..base.n() - 1 {
        t.push((i, i + 1, -0.3));
        t.push((i + 1, i, 0.3));
    }
    CsrMatrix::from_triplets(base.n(), &t).unwrap()
}

pub fn preconditioner_menu() -> Vec<PrecondKind> {
    let amg = TwoLevelParams::default();
    vec![
        PrecondKind::Identity,
        PrecondKind::Jacobi,
        PrecondKind::BlockJacobi { block: 2 },
        PrecondKind::Sor { omega: 1.2 },
        PrecondKind::BlockSor { block: 2, omega: 1.0 },
        PrecondKind::Ilu { level: 0 },
        PrecondKind::Ilu { level: 1 },
        PrecondKind::BlockIlu { block: 2, level: 0 },
        PrecondKind::BlockIlu { block: 2, level: 2 },
        PrecondKind::TwoLevel(amg.clone()),
        PrecondKind::TwoLevel(TwoLevelParams {
            strength: Strength::Symmetric,
            theta: 0.0,
            prolongator_smoothing: true,
            smoother: SmootherKind::Ssor,
            sweeps: 2,
            dof_stride: 2,
            ..amg.clone()
        }),
        PrecondKind::TwoLevel(TwoLevelParams {
            aggressive_levels: 1,
            smoother: SmootherKind::L1Jacobi,
            ..amg.clone()
        }),
        PrecondKind::CprTwoStage(CprParams {
            pressure: amg.clone(),
            temperature: None,
            stage2: SecondStage::BlockIlu0,
        }),
        PrecondKind::CprTwoStage(CprParams {
            pressure: TwoLevelParams {
                smoother: SmootherKind::Sor,
                ..amg
            },
            temperature: Some(TemperatureSmoother::Jacobi),
            stage2: SecondStage::BlockSor,
        }),
    ]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// M(αx + βy) = αMx + βMy for every preconditioner on the menu.
pub fn preconditioner_linearity(cases: u32) -> Result<(), String> {
    let a = coupled_test_matrix();
    let n = a.n();
    let menu = preconditioner_menu();
    let ms: Vec<_> = menu.iter().map(|k| setup(k, &a).unwrap()).collect();
    let vec = || prop::collection::vec(-1.0f64..1.0, n);
    let strategy = (0..ms.len(), vec(), vec(), -3.0f64..3.0, -3.0f64..3.0);
    run(cases, strategy, |(k, x, y, al, be)| {
        let m = &ms[k];
        let mut mx = vec![0.0; n];
        let mut my = vec![0.0; n];
        let mut mz = vec![0.0; n];
        m.apply(&x, &mut mx);
        m.apply(&y, &mut my);
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| al * a + be * b).collect();
        m.apply(&z, &mut mz);
        let diff: Vec<f64> = (0..n).map(|i| mz[i] - al * mx[i] - be * my[i]).collect();
        let scale = al.abs() * norm(&mx) + be.abs() * norm(&my) + 1e-300;
        prop_assert!(norm(&diff) <= 1e-10 * scale, "{:?}: {}", menu[k], norm(&diff) / scale);
        Ok(())
    })
}

/// R = −ln t, strictly decreasing in t; non-positive times are rejected.
pub fn reward_identity(cases: u32) -> Result<(), String> {
    run(cases, (-25.0f64..25.0, -25.0f64..25.0), |(l1, l2)| {
        let (t1, t2) = (l1.exp(), l2.exp());
        let (r1, r2) = (reward_from_time(t1).unwrap(), reward_from_time(t2).unwrap());
        prop_assert_eq!(r1, -t1.ln());
        if t1 < t2 {
            prop_assert!(r1 > r2);
        }
        prop_assert!(reward_from_time(-t1).is_err());
        Ok(())
    })?;
    for bad in [0.0, f64::NAN, f64::INFINITY] {
        if reward_from_time(bad).is_ok() {
            return Err(format!("time {bad} accepted"));
        }
    }
    Ok(())
}

fn sequence_a() -> &'static (ConfigSpace, CandidateSet) {
    static CELL: OnceLock<(ConfigSpace, CandidateSet)> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = builtin::sequence_a_analog();
        let c = CandidateSet::new(&s);
        (s, c)
    })
}

/// Distinct configurations never share an encoding.
pub fn encoding_injectivity(cases: u32) -> Result<(), String> {
    let (space, cands) = sequence_a();
    let n = cands.len();
    run(cases, (0..n, 0..n), |(i, j)| {
        let (ei, ej) = (&cands.encodings[i], &cands.encodings[j]);
        prop_assert_eq!(i == j, ei == ej);
        prop_assert_eq!(space.index_of(&cands.configs[i]).unwrap(), i);
        Ok(())
    })
}

/// χ² goodness of fit of exploration choices against the uniform law, at
/// significance 0.001, for a few selector seeds.
pub fn exploration_uniformity(seeds: u64) -> Result<(), String> {
    let space = Arc::new(builtin::example_fig2());
    let cands = Arc::new(CandidateSet::new(&space));
    let k = cands.len();
    let draws = 200 * k;
    let critical = ChiSquared::new((k - 1) as f64).unwrap().inverse_cdf(0.999);
    for seed in 0..seeds {
        let cfg = SelectorConfig {
            seed,
            ..Default::default()
        };
        let mut sel = Selector::new(space.clone(), cands.clone(), oracle::schema(), cfg);
        let mut counts = vec![0usize; k];
        for _ in 0..draws {
            let c = sel.choose(&[0.0; 3], &[]).map_err(|e| e.to_string())?;
            if c.provenance != Provenance::Explore {
                return Err("left exploration".into());
            }
            counts[c.index] += 1;
        }
        let expected = draws as f64 / k as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        if chi2 > critical {
            return Err(format!("seed {seed}: chi2 {chi2:.1} > {critical:.1}"));
        }
    }
    Ok(())
}

/// `summarize` on a dataset whose statistics are known by hand.
pub fn summarize_fixtures() -> Result<(), String> {
    let space = builtin::example_fig2();
    let cands = CandidateSet::new(&space);
    let mut ds = Dataset::new(
        space.fingerprint(),
        space.size(),
        space.encoding_length(),
        oracle::schema(),
    );
    let ids = RecordIds::default();
    let enc = |i: usize| cands.encodings[i].as_slice().to_vec();
    let ctx = vec![0.1, 0.2, 0.3];
    let p = PolicyTag::Random;
    let ok = |i, t| PerfRecord::success(enc(i), ctx.clone(), t, ids, p).unwrap();
    let fail = |i| PerfRecord::failure(enc(i), ctx.clone(), Some(9.0), ids, p);
    for r in [ok(0, 1.0), ok(0, 3.0), ok(1, 2.0), fail(1), fail(2), ok(3, 6.0)] {
        ds.append(r).map_err(|e| e.to_string())?;
    }
    let s = summarize(&ds);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let checks = [
        ("configurations", s.num_configurations == 46),
        ("data points", s.num_data_points == 6),
        ("tried", close(s.configurations_tried_pct, 400.0 / 46.0)),
        ("success rate", close(s.success_rate_pct, 400.0 / 6.0)),
        ("always success", close(s.always_success_pct, 50.0)),
        ("always failure", close(s.always_failure_pct, 25.0)),
        ("mean", s.run_time_mean == Some(3.0)),
        ("median", s.run_time_median == Some(2.5)),
        ("min", s.run_time_min == Some(1.0)),
        ("max", s.run_time_max == Some(6.0)),
    ];
    let empty = summarize(&Dataset::new(space.fingerprint(), 46, 9, oracle::schema()));
    if empty.run_time_mean.is_some() || empty.success_rate_pct != 0.0 {
        return Err("empty dataset".into());
    }
    match checks.iter().find(|(_, ok)| !ok) {
        Some((name, _)) => Err(format!("{name}: {s:?}")),
        None => Ok(()),
    }
}

/// Uniform draws from the space itself should also be uniform.
pub fn sampler_uniformity() -> Result<(), String> {
    let space = builtin::example_fig2();
    let k = space.size() as usize;
    let draws = 200 * k;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = vec![0usize; k];
    for _ in 0..draws {
        let c = space.sample_random(&mut rng);
        counts[space.index_of(&c).map_err(|e| e.to_string())?] += 1;
    }
    let expected = draws as f64 / k as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((k - 1) as f64).unwrap().inverse_cdf(0.999);
    if chi2 > critical {
        return Err(format!("chi2 {chi2:.1} > {critical:.1}"));
    }
    Ok(())
}
