//! Acceptance suite. Each test prints one verdict line:
//!
//! ```text
//! criterion N [PASS|FAIL] title: details
//! ```
//!
//! Run with `cargo test -p bakeoff --test acceptance -- --nocapture`.

use bakeoff::basis::{apply_tensor_3d, make_basis, EvalMode, TransposeMode};
use bakeoff::bench::{
    bp_setup, convergence_ratio, make_bp_basis, quadrature_report, read_sweep_csv, run_scaling_sweep,
    strong_scale_time, time_to_solution, write_sweep_csv, BenchRecord, BpConfig, BpKind, CsvRow, ModelTimer,
    CSV_HEADER, TARGET_EFFICIENCY,
};
use bakeoff::kernels::{flops_estimate, FlopCounter, KernelPath, DEFAULT_BLOCK};
use bakeoff::krylov::{pcg, SolveMode, SolveOptions, DEFAULT_TOL};
use bakeoff::mesh::{Deformation, HexMesh};
use bakeoff::operator::MatFreeOperator;
use bakeoff::quadrature::{QuadratureKind, QuadratureRule};
use bakeoff::vecops::{dot, norm_inf};
use bakeoff::with_workers;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Serializes the criteria so timings are not disturbed by each other.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, title: &str, passed: bool, details: &str) {
    println!(
        "criterion {id} [{}] {title}: {details}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {id} failed: {details}");
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rel_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = norm_inf(b).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

const DEFORMATIONS: [Deformation; 2] = [Deformation::None, Deformation::Sine];

#[test]
fn criterion_1_quadrature_exactness() {
    let _g = serial();
    let start = Instant::now();
    let checks = quadrature_report(10).unwrap();
    let elapsed = start.elapsed();
    let worst = checks.iter().map(|c| c.value).fold(0.0, f64::max);
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let passed = failed.is_empty() && worst <= 1e-13 && elapsed < Duration::from_secs(1);
    verdict(
        1,
        "quadrature exactness q=1..10",
        passed,
        &format!(
            "{} rules, worst error {worst:.2e} (limit 1e-13), {:.3} s (limit 1 s), failing {failed:?}",
            checks.len(),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_oracle_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let (mut worst_apply, mut worst_diag, mut cases) = (0.0f64, 0.0f64, 0);
    for bp in BpKind::ALL {
        for p in 1..=3 {
            for n in [1, 2] {
                for def in DEFORMATIONS {
                    let mut config = BpConfig::new(bp, p, [n; 3]);
                    config.deformation = def;
                    let problem = bp_setup(&config).unwrap();
                    let op = &problem.op;
                    let dense = op.reference_assemble().unwrap();
                    let x = random_vec(op.size(), 17 + cases);
                    let y = op.apply(&x).unwrap();
                    let mut xp = x.clone();
                    op.project(&mut xp);
                    let mut y_ref = dense.matvec(&xp);
                    for &i in &op.constrained {
                        y_ref[i] = x[i];
                    }
                    worst_apply = worst_apply.max(rel_max_diff(&y, &y_ref));
                    worst_diag = worst_diag.max(rel_max_diff(&op.diagonal().unwrap(), &dense.diagonal()));
                    cases += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let passed = worst_apply <= 1e-12 && worst_diag <= 1e-12 && elapsed < Duration::from_secs(60);
    verdict(
        2,
        "matrix-free vs assembled",
        passed,
        &format!(
            "{cases} cases, apply {worst_apply:.2e}, diagonal {worst_diag:.2e} (limit 1e-12), {:.1} s (limit 60 s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_3_structural_identities() {
    let _g = serial();
    let mut notes = Vec::new();
    let mut passed = true;

    // Stiffness annihilates constants, on both Gauss and collocated rules
    let mut worst_null = 0.0f64;
    for p in 1..=4 {
        for def in DEFORMATIONS {
            let mesh = HexMesh::new([2, 2, 2], p, def).unwrap();
            for bp in [BpKind::Bp3, BpKind::Bp5] {
                let op = MatFreeOperator::new(&mesh, make_bp_basis(bp, p).unwrap(), 1, 1.0, 0.0, false).unwrap();
                let a1 = op.apply(&vec![1.0; op.size()]).unwrap();
                let scale = norm_inf(&op.diagonal().unwrap());
                worst_null = worst_null.max(norm_inf(&a1) / scale);
            }
        }
    }
    passed &= worst_null <= 1e-11;
    notes.push(format!("|A 1|/max diag {worst_null:.2e} (limit 1e-11)"));

    // 1^T B 1 = |Omega|
    let mut worst_vol = 0.0f64;
    for p in 1..=4 {
        for n in [1, 2, 3] {
            for def in DEFORMATIONS {
                let mesh = HexMesh::new([n; 3], p, def).unwrap();
                let op = MatFreeOperator::new(&mesh, make_bp_basis(BpKind::Bp1, p).unwrap(), 1, 0.0, 1.0, false)
                    .unwrap();
                let ones = vec![1.0; op.size()];
                worst_vol = worst_vol.max((dot(&ones, &op.apply(&ones).unwrap()) - 1.0).abs());
            }
        }
    }
    passed &= worst_vol <= 1e-10;
    notes.push(format!("|1^T B 1 - 1| {worst_vol:.2e} (limit 1e-10)"));

    // Symmetry <Ax, y> = <x, Ay>
    let mut worst_sym = 0.0f64;
    for bp in BpKind::ALL {
        for p in 1..=3 {
            let mut config = BpConfig::new(bp, p, [2, 2, 2]);
            config.deformation = Deformation::Sine;
            let op = bp_setup(&config).unwrap().op;
            let x = random_vec(op.size(), 100 + p as u64);
            let y = random_vec(op.size(), 200 + p as u64);
            let (a, b) = (dot(&op.apply(&x).unwrap(), &y), dot(&x, &op.apply(&y).unwrap()));
            worst_sym = worst_sym.max((a - b).abs() / a.abs().max(b.abs()));
        }
    }
    passed &= worst_sym <= 1e-12;
    notes.push(format!("symmetry {worst_sym:.2e} (limit 1e-12)"));

    // Collocated interpolation is exactly the identity
    let mut identity = true;
    for p in 1..=8 {
        let basis = make_bp_basis(BpKind::Bp5, p).unwrap();
        let n = p + 1;
        identity &= (0..n * n).all(|k| basis.interp1d[k] == if k % (n + 1) == 0 { 1.0 } else { 0.0 });
        let u = random_vec(n * n * n, p as u64);
        identity &= apply_tensor_3d(&basis, EvalMode::Interp, TransposeMode::Forward, 1, &u).unwrap() == u;
    }
    passed &= identity;
    notes.push(format!("BP5 interpolation identity {identity}"));

    verdict(3, "structural identities", passed, &notes.join(", "));
}

#[test]
fn criterion_4_convergence_orders() {
    let _g = serial();
    let start = Instant::now();
    let mut passed = true;
    let mut notes = Vec::new();
    for p in 1..=4 {
        let config = BpConfig::new(BpKind::Bp3, p, [2, 2, 2]);
        let (ratio, errors) = with_workers(4, || convergence_ratio(&config, [2, 2, 2], [4, 4, 4])).unwrap();
        let normalized = ratio / 2f64.powi(p as i32 + 1);
        passed &= (0.7..=1.3).contains(&normalized);
        notes.push(format!("p={p} ratio/2^(p+1)={normalized:.3} (e={:.2e}->{:.2e})", errors[0], errors[1]));
    }
    let elapsed = start.elapsed();
    passed &= elapsed < Duration::from_secs(120);
    notes.push(format!("{:.1} s (limit 120 s)", elapsed.as_secs_f64()));
    verdict(4, "BP3 convergence, band [0.7, 1.3]", passed, &notes.join(", "));
}

#[test]
fn criterion_5_mass_solve_identity() {
    let _g = serial();
    let start = Instant::now();
    let tol = DEFAULT_TOL;
    let (mut worst_ratio, mut failures, mut cases) = (0.0f64, Vec::new(), 0);
    for bp in [BpKind::Bp1, BpKind::Bp2] {
        for p in 1..=4 {
            for n in [2, 3] {
                for def in DEFORMATIONS {
                    let mut config = BpConfig::new(bp, p, [n; 3]);
                    config.deformation = def;
                    config.tol = tol;
                    let problem = bp_setup(&config).unwrap();
                    let opts = SolveOptions {
                        mode: SolveMode::Solve,
                        ..config.solve_options()
                    };
                    let (u, report) = pcg(&problem.op, &problem.precond, &problem.rhs, &opts).unwrap();
                    assert!(report.converged);
                    let err = u.iter().zip(&problem.f_nodal).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    worst_ratio = worst_ratio.max(err / tol);
                    if err > 10.0 * tol {
                        failures.push(format!("{bp} p={p} {n}^3 {def}: {err:.1e}"));
                    }
                    cases += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let passed = failures.is_empty() && elapsed < Duration::from_secs(30);
    verdict(
        5,
        "mass solve returns f",
        passed,
        &format!(
            "{cases} cases at tol {tol:e}, worst |u-f|_inf/tol {worst_ratio:.1} (limit 10), {:.1} s (limit 30 s), \
             over limit: [{}]",
            elapsed.as_secs_f64(),
            failures.join("; ")
        ),
    );
}

#[test]
fn criterion_6_determinism() {
    let _g = serial();
    let mut config = BpConfig::new(BpKind::Bp3, 4, [4, 4, 4]);
    config.mode = SolveMode::Solve;
    let x = random_vec(bp_setup(&config).unwrap().op.size(), 6);
    let runs: Vec<_> = [1, 2, 4, 8]
        .into_iter()
        .map(|w| {
            with_workers(w, || {
                let problem = bp_setup(&config).unwrap();
                let y: Vec<u64> = problem.op.apply(&x).unwrap().iter().map(|v| v.to_bits()).collect();
                let (u, report) = problem.solve().unwrap();
                let u: Vec<u64> = u.iter().map(|v| v.to_bits()).collect();
                let hist: Vec<u64> = report.residual_history.iter().map(|v| v.to_bits()).collect();
                (y, report.iterations, hist, u)
            })
        })
        .collect();
    let same = runs.iter().all(|r| *r == runs[0]);
    verdict(
        6,
        "bitwise determinism over 1, 2, 4, 8 workers",
        same,
        &format!(
            "BP3 p=4 4^3: apply, {} CG iterations, residual history and solution identical = {same}",
            runs[0].1
        ),
    );
}

fn min_apply_time(op: &MatFreeOperator, x: &[f64], reps: usize) -> f64 {
    let mut y = vec![0.0; x.len()];
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            op.apply_into(x, &mut y).unwrap();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_7_sum_factorization() {
    let _g = serial();
    let mut notes = Vec::new();

    // Wall time, p = 8, q = 10, E = 512, one worker
    let mesh = HexMesh::new([8, 8, 8], 8, Deformation::None).unwrap();
    let mut op = MatFreeOperator::new(&mesh, make_bp_basis(BpKind::Bp3, 8).unwrap(), 1, 1.0, 0.0, true).unwrap();
    assert_eq!((op.plan().q, op.num_elements()), (10, 512));
    let x = random_vec(op.size(), 7);
    let (t_fast, t_naive) = with_workers(1, || {
        let fast = min_apply_time(&op, &x, 3);
        op.set_plan(DEFAULT_BLOCK, KernelPath::Naive);
        let naive = min_apply_time(&op, &x, 1);
        (fast, naive)
    });
    let speedup = t_naive / t_fast;
    let mut passed = speedup >= 3.0;
    notes.push(format!("speedup {speedup:.1}x ({t_naive:.3} s vs {t_fast:.3} s, limit 3x)"));

    // Instrumented counts against the closed form
    let mut counts_ok = true;
    for p in [2, 4, 8] {
        let mesh = HexMesh::new([2, 2, 2], p, Deformation::Sine).unwrap();
        for bp in BpKind::ALL {
            let (alpha, beta) = bp.coefficients();
            let mut op =
                MatFreeOperator::new(&mesh, make_bp_basis(bp, p).unwrap(), bp.components(), alpha, beta, false)
                    .unwrap();
            let counter = FlopCounter::new();
            op.set_flop_counter(Some(counter.clone()));
            op.apply(&random_vec(op.size(), p as u64)).unwrap();
            let plan = op.plan();
            let mode = if bp.is_mass() { EvalMode::Interp } else { EvalMode::Grad };
            let expected = 2 * flops_estimate(plan, mode) * op.num_elements() as u64;
            counts_ok &= counter.get() == expected;
        }
    }
    passed &= counts_ok;
    notes.push(format!("counter equals closed form for p in {{2,4,8}} = {counts_ok}"));

    // Collocation saves work
    let mut fewer = true;
    for p in 1..=8 {
        let mesh = HexMesh::new([2, 2, 2], p, Deformation::None).unwrap();
        let count = |bp: BpKind| {
            MatFreeOperator::new(&mesh, make_bp_basis(bp, p).unwrap(), 1, 1.0, 0.0, true)
                .unwrap()
                .flops_per_apply()
        };
        fewer &= count(BpKind::Bp5) < count(BpKind::Bp3);
    }
    passed &= fewer;
    notes.push(format!("BP5 ops < BP3 ops for p=1..8 = {fewer}"));

    verdict(7, "sum-factorization advantage", passed, &notes.join(", "));
}

#[test]
fn criterion_8_metrics_self_consistency() {
    let _g = serial();
    let (a, b) = (2.0e-8, 1.0e-4);
    // Fixed overhead b appears only when more than one worker communicates.
    let model = |n: usize, workers: usize| {
        let n = n as f64;
        if workers == 1 {
            a * n
        } else {
            a * n / workers as f64 + b
        }
    };
    let template = BpConfig::new(BpKind::Bp3, 2, [1, 1, 1]);
    let dims: Vec<[usize; 3]> = (2..=40).map(|k| [k, k, k]).collect();
    let threads = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32];
    let sweep = run_scaling_sweep(&template, &dims, &threads, &ModelTimer(model)).unwrap();

    let worst_eta = sweep
        .rows
        .iter()
        .map(|r| {
            let (n, workers) = (r.record.n as f64, r.record.workers as f64);
            let exact = a * n / (a * n + if workers > 1.0 { b * workers } else { 0.0 });
            (r.scaling.eta - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    let target = 4.0 * b / a;
    let n08 = sweep.summary.n_08;
    let n08_err = n08.map_or(f64::INFINITY, |v| (v - target).abs() / target);

    // Formula chain with Mira-scale inputs
    let (mira_n08, mira_r08) = (50_000.0, 65.0e6);
    let ratio = mira_n08 / mira_r08;
    let t08 = strong_scale_time(TARGET_EFFICIENCY, mira_n08, mira_r08);
    let chain = time_to_solution(TARGET_EFFICIENCY, mira_n08 * 64.0, TARGET_EFFICIENCY, 64.0, mira_r08);
    let mira_ok = (ratio - 7.7e-4).abs() / 7.7e-4 < 0.01
        && (t08 - ratio).abs() <= 1e-18
        && (chain - t08).abs() <= 1e-15 * t08
        && (ratio * 1e4).round() == 8.0;

    let passed = worst_eta <= 1e-14 && n08_err <= 0.01 && mira_ok;
    verdict(
        8,
        "metrics pipeline",
        passed,
        &format!(
            "{} rows, eta relative deviation {worst_eta:.1e} (limit 1e-14), n_0.8 {} vs 4b/a {target:.0} \
             (error {:.3}%, limit 1%), Mira n_0.8/r_0.8 = {ratio:.3e} s, t_0.8 = {t08:.3e} s",
            sweep.rows.len(),
            n08.map_or("unavailable".into(), |v| format!("{v:.1}")),
            100.0 * n08_err
        ),
    );
}

fn bakeoff(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bakeoff")).args(args).output().unwrap()
}

#[test]
fn criterion_9_interface_contract() {
    let _g = serial();
    let mut notes = Vec::new();

    // run JSON schema
    let out = bakeoff(&["run", "--bp", "bp3", "--degree", "4", "--elems", "8x8x8", "--iters", "20", "--format", "json"]);
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let obj = value.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    let mut expected = vec!["bp", "p", "q", "E", "n", "P", "iterations", "seconds", "dofs_rate", "n_per_rank"];
    expected.sort_unstable();
    let ints = ["p", "q", "E", "n", "P", "iterations"].iter().all(|k| obj[*k].is_u64());
    let floats = ["seconds", "dofs_rate", "n_per_rank"].iter().all(|k| obj[*k].is_f64());
    let record: BenchRecord = serde_json::from_value(value.clone()).unwrap();
    let rate_exact = record.dofs_rate == record.n as f64 * record.iterations as f64 / record.seconds;
    let schema_ok = out.status.success()
        && keys == expected
        && obj["bp"] == "bp3"
        && ints
        && floats
        && record.iterations == 20
        && record.num_elem == 512
        && rate_exact;
    notes.push(format!("run schema {schema_ok}"));

    // sweep CSV round trip
    let out = bakeoff(&[
        "sweep", "--bp", "bp5", "--degree", "2", "--elems", "2x2x2,3x3x3", "--threads", "1,2,4", "--iters", "3",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = read_sweep_csv(text.as_bytes()).unwrap();
    let mut rewritten = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut rewritten);
        for r in &rows {
            w.serialize(r).unwrap();
        }
    }
    let sweep_ok = out.status.success()
        && text.lines().next() == Some(CSV_HEADER)
        && rows.len() == 6
        && String::from_utf8(rewritten).unwrap() == text;

    let model = run_scaling_sweep(
        &BpConfig::new(BpKind::Bp2, 1, [1, 1, 1]),
        &[[1, 1, 1], [2, 2, 2]],
        &[1, 2],
        &ModelTimer(|n, p| 1e-7 * n as f64 / p as f64 + 1e-5 * p as f64),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_sweep_csv(&model.rows, &mut buf).unwrap();
    let back = read_sweep_csv(buf.as_slice()).unwrap();
    let model_ok = back == model.rows.iter().map(CsvRow::from).collect::<Vec<_>>();
    notes.push(format!("sweep CSV round trip {}", sweep_ok && model_ok));

    // verify exit codes
    let ok = bakeoff(&["verify", "--bp", "bp1", "--degree", "2", "--elems", "2x2x2"]).status.code();
    let fail = bakeoff(&["verify", "--bp", "bp3", "--degree", "1", "--elems", "1x1x1"]).status.code();
    let usage = bakeoff(&["verify", "--bp", "bp7"]).status.code();
    let codes_ok = (ok, fail, usage) == (Some(0), Some(1), Some(2));
    notes.push(format!("verify exit codes {ok:?}/{fail:?}/{usage:?} (expect 0/1/2)"));

    verdict(9, "interface contract", schema_ok && sweep_ok && model_ok && codes_ok, &notes.join(", "));
}

#[test]
fn gauss_rules_match_basis_layout() {
    // Sanity for the suite itself: the Gauss rule used by BP1-BP4 has p+2 points.
    for p in 1..=6 {
        let basis = make_bp_basis(BpKind::Bp3, p).unwrap();
        let reference = make_basis(p, QuadratureRule::new(QuadratureKind::GaussLegendre, p + 2).unwrap()).unwrap();
        assert_eq!(basis.interp1d, reference.interp1d);
    }
}
