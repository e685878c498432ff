//! Acceptance checks. Runs as a plain binary (`harness = false`) so every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fail.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use substable::asymptotics::{
    build_grid, delta_covariance, jacobian_audit, omega, JacMode, MomentVector,
};
use substable::charfun::cf_theoretical;
use substable::estimators::{
    alpha_mult, estimate_all, mu_estimate, sigma_diag, sigma_offdiag, EstimateOptions,
};
use substable::montecarlo::{
    emit_table, matrices, preset, run_experiment, ExperimentResult, TableFormat,
};
use substable::sampler::{draw_positive_stable, sample_subgaussian, RngSpec};
use substable::{ecf, FrequencyPair, MuConfig, StableParams};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn cell(r: &ExperimentResult, alpha: f64, n: usize, col: &str) -> f64 {
    let k = r.column(col).expect("column present");
    let c = r
        .cells
        .iter()
        .find(|c| c.alpha == alpha && c.sample_size == n)
        .expect("cell present");
    c.rmse[k]
}

fn plug_in_exactness() -> Outcome {
    let start = Instant::now();
    let fp = FrequencyPair::default();
    let mu = vec![0.3, -0.2, 0.1];
    let mu_cfg = MuConfig::new(vec![1.0; 3]).unwrap();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (_, sigma) in matrices::all() {
        for alpha in [0.5, 1.0, 1.5] {
            let p = StableParams::new(alpha, mu.clone(), sigma.clone()).unwrap();
            let a = alpha_mult(&p, &fp).unwrap();
            let d = sigma_diag(&p, a, fp.s1()).unwrap();
            let nd = sigma_offdiag(&p, a).unwrap();
            let m = mu_estimate(&p, &mu_cfg).unwrap();
            let mut err = (a - alpha).abs();
            for (x, y) in d
                .iter()
                .zip(sigma.diag())
                .chain(nd.iter().zip(sigma.subdiag()))
            {
                err = err.max((x - y).abs());
            }
            for (x, y) in m.iter().zip(&mu) {
                err = err.max((x - y).abs());
            }
            worst = worst.max(err);
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(1),
        format!("{cases} cases, max abs error {worst:.2e} (tol 1e-10), {elapsed:.2?} (budget 1s)"),
    )
}

struct Studies {
    table3: ExperimentResult,
    table4: ExperimentResult,
    table7: ExperimentResult,
    table8: ExperimentResult,
    elapsed: Duration,
}

fn run_studies() -> Studies {
    let start = Instant::now();
    let table3 = run_experiment(&preset("table3", 500, SEED).unwrap()).unwrap();
    let mut s4 = preset("table4", 500, SEED).unwrap();
    s4.alphas = vec![1.5];
    s4.sample_sizes = vec![10_000];
    let table4 = run_experiment(&s4).unwrap();
    let mut s7 = preset("table7", 500, SEED).unwrap();
    s7.alphas = vec![1.0];
    s7.sample_sizes = vec![1000];
    let table7 = run_experiment(&s7).unwrap();
    let mut s8 = preset("table8", 500, SEED).unwrap();
    s8.alphas = vec![1.5];
    s8.sample_sizes = vec![10_000];
    let table8 = run_experiment(&s8).unwrap();
    Studies {
        table3,
        table4,
        table7,
        table8,
        elapsed: start.elapsed(),
    }
}

fn table_reproduction(st: &Studies) -> Outcome {
    let mut checks = Vec::new();
    for (alpha, want) in [(0.5, 0.0139), (1.0, 0.0143), (1.5, 0.0127)] {
        checks.push((
            format!("alpha_m_rm a={alpha}"),
            cell(&st.table3, alpha, 10_000, "alpha_m"),
            want,
        ));
    }
    checks.push((
        "Sigma11_rm a=1 n=1e3".into(),
        cell(&st.table7, 1.0, 1000, "Sigma11"),
        0.0114,
    ));
    checks.push((
        "Sigma21_rm a=1.5 n=1e4".into(),
        cell(&st.table8, 1.5, 10_000, "Sigma21"),
        0.0017,
    ));
    let pass = checks.iter().all(|(_, got, want)| rel(*got, *want) <= 0.25)
        && st.elapsed < Duration::from_secs(900);
    let parts: Vec<String> = checks
        .iter()
        .map(|(name, got, want)| {
            format!(
                "{name} {got:.4} vs {want} ({:+.0}%)",
                100.0 * (got - want) / want
            )
        })
        .collect();
    outcome(
        pass,
        format!("{}; tol 25%, {:.1?}", parts.join(", "), st.elapsed),
    )
}

fn ordering(st: &Studies) -> Outcome {
    let t = &st.table3;
    let (p, s, m) = (
        t.column("alpha_p").unwrap(),
        t.column("alpha_s").unwrap(),
        t.column("alpha_m").unwrap(),
    );
    let violations: Vec<String> = t
        .cells
        .iter()
        .filter(|c| !(c.rmse[m] < c.rmse[s] && c.rmse[s] < c.rmse[p]))
        .map(|c| format!("(a={}, n={})", c.alpha, c.sample_size))
        .collect();
    let ratio = cell(&st.table4, 1.5, 10_000, "alpha_p") / cell(&st.table4, 1.5, 10_000, "alpha_m");
    outcome(
        violations.is_empty() && ratio > 4.0,
        format!(
            "mult < single < press in {}/{} cells{}; press/mult on dominant matrix {ratio:.2} (need > 4)",
            t.cells.len() - violations.len(),
            t.cells.len(),
            if violations.is_empty() {
                String::new()
            } else {
                format!(" (violations {})", violations.join(" "))
            }
        ),
    )
}

fn omega_oracle() -> Outcome {
    let start = Instant::now();
    let params = StableParams::centered(1.0, matrices::correlated()).unwrap();
    let fp = FrequencyPair::default();
    let grid = build_grid(3, &fp).unwrap();
    let om = omega(&params, &grid).unwrap();
    let theta0 = MomentVector::from_source(&params, &grid)
        .unwrap()
        .into_theta();
    let m = grid.len();
    let dim = 2 * m;
    let draws = 1_000_000;
    let chunks = 20;
    let per = draws / chunks;
    // per-entry sums of z = (y_j - theta_j)(y_k - theta_k) and z^2, upper triangle
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let s = sample_subgaussian(&params, per, &RngSpec::new(SEED, 1000 + c as u64)).unwrap();
            let mut sum = vec![0.0; dim * dim];
            let mut sum_sq = vec![0.0; dim * dim];
            let mut y = vec![0.0; dim];
            for x in s.rows() {
                for (j, t) in grid.points().iter().enumerate() {
                    let arg: f64 = t.iter().zip(x).map(|(a, b)| a * b).sum();
                    let (si, co) = arg.sin_cos();
                    y[j] = co - theta0[j];
                    y[m + j] = si - theta0[m + j];
                }
                for j in 0..dim {
                    for k in j..dim {
                        let z = y[j] * y[k];
                        sum[j * dim + k] += z;
                        sum_sq[j * dim + k] += z * z;
                    }
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = vec![0.0; dim * dim];
    let mut sum_sq = vec![0.0; dim * dim];
    for (a, b) in &partial {
        for i in 0..dim * dim {
            sum[i] += a[i];
            sum_sq[i] += b[i];
        }
    }
    let nf = (per * chunks) as f64;
    let mut worst_z: f64 = 0.0;
    let mut failures = 0;
    for j in 0..dim {
        for k in j..dim {
            let mean = sum[j * dim + k] / nf;
            let var = (sum_sq[j * dim + k] / nf - mean * mean).max(0.0);
            let se = (var / nf).sqrt();
            let diff = (mean - om.assembled[(j, k)]).abs();
            let z = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst_z = worst_z.max(z);
            if z > 5.0 {
                failures += 1;
            }
        }
    }
    let (lmin, trace) = om.spectrum_check().unwrap();
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && lmin >= -1e-10 * trace && elapsed < Duration::from_secs(60),
        format!(
            "{}x{} entries vs 1e6 draws: max |z| {worst_z:.2} (tol 5), lambda_min {lmin:.2e}, trace {trace:.3}, {elapsed:.1?}",
            dim, dim
        ),
    )
}

fn jacobian_check() -> Outcome {
    let fp = FrequencyPair::default();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut printed: Vec<String> = Vec::new();
    for alpha in [0.5, 1.0, 1.5] {
        let params = StableParams::centered(alpha, matrices::correlated()).unwrap();
        let a = jacobian_audit(&params, &fp).unwrap();
        let ok = a.alpha_row_max_rel <= 1e-4
            && a.sigma_d_max_rel <= 1e-4
            && a.richardson_max_rel <= 1e-5;
        pass &= ok;
        parts.push(format!(
            "a={alpha}: alpha row {:.1e}, Sigma_d {:.1e}, richardson {:.1e}, corrected mismatches {:?}",
            a.alpha_row_max_rel,
            a.sigma_d_max_rel,
            a.richardson_max_rel,
            a.corrected_disagreements()
        ));
        for b in a.printed_disagreements() {
            if !printed.iter().any(|x| x == b) {
                printed.push(b.to_string());
            }
        }
    }
    outcome(
        pass,
        format!(
            "{}; as-printed blocks disagreeing with FD: {}",
            parts.join("; "),
            printed.join(", ")
        ),
    )
}

fn coverage() -> Outcome {
    let start = Instant::now();
    let truth = StableParams::centered(1.0, matrices::correlated()).unwrap();
    let fp = FrequencyPair::default();
    let reps = 500;
    let n = 10_000;
    let opts = EstimateOptions {
        psd_project: true,
        ..EstimateOptions::default()
    };
    let hits: Vec<Option<bool>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = sample_subgaussian(&truth, n, &RngSpec::new(SEED, 5000 + r as u64)).ok()?;
            let est = estimate_all(&s, &fp, &opts).ok()?;
            let plug =
                StableParams::new(est.alpha_hat, est.mu_or_zero(), est.sigma_hat.clone()).ok()?;
            let d = delta_covariance(&plug, &fp, n, 0.95, JacMode::Fd).ok()?;
            Some(d.ci[0].contains(1.0))
        })
        .collect();
    let failed = hits.iter().filter(|h| h.is_none()).count();
    let covered = hits.iter().filter(|h| **h == Some(true)).count();
    let rate = covered as f64 / (reps - failed) as f64;
    let elapsed = start.elapsed();
    outcome(
        failed == 0 && (0.92..=0.98).contains(&rate) && elapsed < Duration::from_secs(600),
        format!(
            "{covered}/{} intervals cover alpha=1 ({:.1}%, need 92-98%), {failed} failed, {elapsed:.1?}",
            reps - failed,
            100.0 * rate
        ),
    )
}

fn sampler_contract() -> Outcome {
    let draws = 1_000_000;
    let mut worst_z: f64 = 0.0;
    for (i, alpha) in [0.5f64, 1.0, 1.5].into_iter().enumerate() {
        let a = alpha / 2.0;
        let mut rng = RngSpec::new(SEED, 9000 + i as u64).rng();
        let v: Vec<f64> = (0..draws)
            .map(|_| draw_positive_stable(a, &mut rng))
            .collect();
        for gamma in [0.5f64, 1.0, 2.0] {
            let (mut s, mut s2) = (0.0, 0.0);
            for &x in &v {
                let e = (-gamma * x).exp();
                s += e;
                s2 += e * e;
            }
            let nf = draws as f64;
            let mean = s / nf;
            let se = ((s2 / nf - mean * mean) / nf).sqrt();
            let want = (-gamma.powf(a)).exp();
            worst_z = worst_z.max((mean - want).abs() / se);
        }
    }

    let n = 100_000;
    let fp = FrequencyPair::default();
    let grid = build_grid(3, &fp).unwrap();
    let mut worst_dev: f64 = 0.0;
    for (i, alpha) in [0.5, 1.0, 1.5].into_iter().enumerate() {
        let params = StableParams::centered(alpha, matrices::correlated()).unwrap();
        let s = sample_subgaussian(&params, n, &RngSpec::new(SEED, 9100 + i as u64)).unwrap();
        for t in grid.points() {
            let d = (ecf(&s, t).unwrap() - cf_theoretical(&params, t).unwrap()).norm();
            worst_dev = worst_dev.max(d);
        }
    }
    let bound = 5.0 / (n as f64).sqrt();
    outcome(
        worst_z <= 3.0 && worst_dev < bound,
        format!(
            "Laplace transform max |z| {worst_z:.2} (tol 3) over 9 cases; ECF vs CF max deviation {worst_dev:.2e} (< {bound:.2e})"
        ),
    )
}

fn determinism() -> Outcome {
    let mut spec = preset("table3", 100, SEED).unwrap();
    let mut outputs = Vec::new();
    for w in [1, 4, 8, 4] {
        spec.workers = Some(w);
        outputs.push(emit_table(
            &run_experiment(&spec).unwrap(),
            TableFormat::Csv,
        ));
    }
    let same = outputs
        .windows(2)
        .all(|w| w[0].as_bytes() == w[1].as_bytes());
    outcome(
        same,
        format!(
            "table3 R=100 with 1/4/8/4 workers: {} bytes each, identical={same}",
            outputs[0].len()
        ),
    )
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    // cargo test passes harness flags such as --list; honour --list so
    // tooling does not run the suite just to enumerate it
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }

    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "plug-in exactness", plug_in_exactness()));
    let studies = run_studies();
    results.push((2, "table reproduction", table_reproduction(&studies)));
    results.push((3, "estimator ordering", ordering(&studies)));
    results.push((4, "omega vs monte carlo", omega_oracle()));
    results.push((5, "jacobian audit", jacobian_check()));
    results.push((6, "interval coverage", coverage()));
    results.push((7, "sampler contract", sampler_contract()));
    results.push((8, "determinism", determinism()));

    let mut all = true;
    for (k, name, o) in &results {
        all &= o.pass;
        println!(
            "criterion {k} {name}: {} | {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
