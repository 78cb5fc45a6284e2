//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criterion 8 is a known failure. Its bound `exp(-E||delta||^2 / 2)` sits
//! above the exact mean acceptance `E[2 Phi(-||delta|| / 2)]` whenever the
//! drift gap is small, so it is printed but does not fail the run.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use nalgebra::{DMatrix, DVector};
use specdiff::commands::{couple, sweep};
use specdiff::config::ExperimentConfig;
use specdiff::{runner, Cli};
use specdiff_core::analysis::{acceptance_lower_bound, diff_covariance_overlap, expected_advance, simulate_advance};
use specdiff_core::coupling::{
    gaussian_tv, naive_adjusted_rejection, projected_reflection_coupling, reflection_coupling,
    tempered_reflection_coupling, Projection, DEFAULT_MAX_TRIALS,
};
use specdiff_core::linalg::Matrix;
use specdiff_core::metrics::{
    ks_one_sample, ks_two_sample, random_directions, sliced_wasserstein2_with, DEFAULT_PROJECTIONS,
};
use specdiff_core::rng::substream;
use specdiff_core::schedule::DEFAULT_T_CLIP;
use specdiff_core::special::{normal_cdf, normal_pdf};
use specdiff_core::{GaussianKernel, GmmSpec, RngStream, SampleSet, Schedule, ScoreModel, StreamKey};

const KNOWN_FAILURES: &[u8] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn rng(seed: u64) -> RngStream {
    RngStream::new(StreamKey::new(seed, 0, 0, substream::AUX))
}

fn normals(r: &mut RngStream, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    r.fill_normal(&mut v);
    v
}

fn pool() -> rayon::ThreadPool {
    runner::pool(None).unwrap()
}

/// 16-component mixture, K = 200, eps = 0.25, frozen, L = 10.
fn mixture_setup(d: usize, n_chains: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.gmm.d = d;
    cfg.gmm.n_comp = 16;
    cfg.sampler.steps = 200;
    cfg.sampler.eps = 0.25;
    cfg.speculative.strategy = "frozen".into();
    cfg.speculative.lookahead = 10;
    cfg.speculative.tau = 1.0;
    cfg.run.n_chains = n_chains;
    cfg
}

fn maximality() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let n = 1_000_000;
    let mut differ = 0u64;
    for _ in 0..n {
        let z = [r.normal()];
        let out = reflection_coupling(&[0.5], &[1.5], 0.5, &z, r.uniform()).unwrap();
        differ += u64::from(out.x != out.y);
    }
    let elapsed = start.elapsed();
    let want = 2.0 * normal_cdf(1.0) - 1.0;
    let p = differ as f64 / n as f64;
    let se = (want * (1.0 - want) / n as f64).sqrt();
    let z = (p - want) / se;
    Outcome::new(
        z.abs() <= 4.0 && elapsed < Duration::from_secs(10),
        format!("P(X!=Y) = {p:.6}, 2Phi(1)-1 = {want:.6}, {z:+.2} se, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn marginal_exactness() -> Outcome {
    let n = 100_000;
    let sigma = 0.7;
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    let mut tests = 0;
    for (i, &d) in [1usize, 8, 64].iter().enumerate() {
        let mut r = rng(20 + i as u64);
        let m_p = normals(&mut r, d);
        let m_q: Vec<f64> = m_p.iter().map(|m| m + 0.5 * r.normal()).collect();
        let (mut xs, mut ys) = (vec![Vec::with_capacity(n); d], vec![Vec::with_capacity(n); d]);
        for _ in 0..n {
            let z = normals(&mut r, d);
            let out = reflection_coupling(&m_p, &m_q, sigma, &z, r.uniform()).unwrap();
            for j in 0..d {
                xs[j].push(out.x[j]);
                ys[j].push(out.y[j]);
            }
        }
        for j in 0..d {
            for (col, m) in [(&xs[j], m_p[j]), (&ys[j], m_q[j])] {
                let p = ks_one_sample(col, |v| normal_cdf((v - m) / sigma)).unwrap().p_value;
                worst = worst.min(p);
                failures += usize::from(p <= 0.01);
                tests += 1;
            }
        }
    }
    // level 0.01 for the whole family of tests (Bonferroni); a per-test 0.01
    // would fail an exact sampler three times out of four
    let threshold = 0.01 / tests as f64;
    Outcome::new(
        worst > threshold,
        format!("{tests} KS tests, smallest p = {worst:.4} vs family threshold {threshold:.1e}; {failures} below 0.01"),
    )
}

/// Sliced W2 on fixed directions, target vs speculative, against a bootstrap
/// of target-vs-target distances drawn from the pooled target samples.
fn end_to_end_exactness() -> Outcome {
    let start = Instant::now();
    let n = 10_000;
    let cfg = mixture_setup(2, n);
    let pool = pool();
    let models = cfg.models().unwrap();
    let spec_cfg = cfg.speculative_config().unwrap();
    let strategy = cfg.strategy("frozen", &models).unwrap();
    let target = runner::target(&pool, models.target.as_ref(), 0.25, n, 1).unwrap();
    let second = runner::target(&pool, models.target.as_ref(), 0.25, n, 2).unwrap();
    let spec = runner::speculative(&pool, models.target.as_ref(), &strategy, &spec_cfg, n, 3).unwrap();

    let set = |rows: &[Vec<f64>]| SampleSet::from_rows(rows, "s").unwrap();
    let dirs = random_directions(2, DEFAULT_PROJECTIONS, &mut rng(30)).unwrap();
    let observed = sliced_wasserstein2_with(&set(&spec.samples), &set(&target.samples), &dirs).unwrap();

    let pooled: Vec<Vec<f64>> = target.samples.iter().chain(&second.samples).cloned().collect();
    let mut r = rng(31);
    let mut null: Vec<f64> = (0..100)
        .map(|_| {
            let mut draw = || (0..n).map(|_| pooled[r.below(pooled.len())].clone()).collect::<Vec<_>>();
            let (a, b) = (draw(), draw());
            sliced_wasserstein2_with(&set(&a), &set(&b), &dirs).unwrap()
        })
        .collect();
    null.sort_by(f64::total_cmp);
    let (lo, hi) = (null[2], null[97]);

    let ks: Vec<f64> =
        (0..2).map(|j| ks_two_sample(&spec.coordinate(j), &target.coordinate(j)).unwrap().p_value).collect();
    let elapsed = start.elapsed();
    let pass = observed <= hi && ks.iter().all(|&p| p > 0.01) && elapsed < Duration::from_secs(120);
    Outcome::new(
        pass,
        format!(
            "sliced W2 = {observed:.4}, null 95% [{lo:.4}, {hi:.4}], KS p = {:.3}/{:.3}, NFE {:.1}, {:.1}s",
            ks[0],
            ks[1],
            spec.mean_nfe_parallel(),
            elapsed.as_secs_f64()
        ),
    )
}

fn nfe_reduction() -> Outcome {
    let mut cfg = mixture_setup(2, 1000);
    cfg.sweep.param = "eps".into();
    cfg.sweep.values = vec![0.05, 0.1, 0.25, 0.5, 1.0];
    cfg.sweep.strategies = vec!["frozen".into()];
    let rows = sweep::run(&cfg, &pool()).unwrap();
    let nfe: Vec<f64> = rows.iter().map(|r| r.nfe_parallel_mean).collect();
    let best = (0..nfe.len()).min_by(|&a, &b| nfe[a].total_cmp(&nfe[b])).unwrap();
    let interior = best > 0 && best < nfe.len() - 1;
    let reduced = nfe.iter().any(|&v| v <= 0.7 * 200.0);
    let curve: Vec<String> = rows.iter().map(|r| format!("{}:{:.2}", r.value, r.nfe_parallel_mean)).collect();
    Outcome::new(
        reduced && interior,
        format!("nfe_parallel by eps {}; minimum at eps = {}", curve.join(" "), rows[best].value),
    )
}

fn frozen_dominance() -> Outcome {
    let mut cfg = mixture_setup(2, 300);
    cfg.sweep.param = "d".into();
    cfg.sweep.values = vec![2.0, 4.0, 8.0, 16.0, 32.0];
    cfg.sweep.strategies = vec!["frozen".into(), "independent".into()];
    let rows = sweep::run(&cfg, &pool()).unwrap();
    let mut wins = 0;
    let mut parts = Vec::new();
    for pair in rows.chunks(2) {
        let (f, i) = (&pair[0], &pair[1]);
        wins += usize::from(f.nfe_parallel_mean <= i.nfe_parallel_mean);
        parts.push(format!("d={} {:.1}/{:.1}", f.value, f.nfe_parallel_mean, i.nfe_parallel_mean));
    }
    Outcome::new(wins >= 4, format!("frozen/independent {}; frozen wins {wins}/5", parts.join(", ")))
}

fn expected_advance_formula() -> Outcome {
    let mut r = rng(60);
    let n = 100_000;
    let mut worst = 0.0f64;
    let mut geometric_err = 0.0f64;
    for _ in 0..20 {
        let alpha = r.uniform();
        let l = 1 + r.below(20);
        let want = expected_advance(alpha, l).unwrap();
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let a = simulate_advance(alpha, l, &mut r) as f64;
            s += a;
            s2 += a * a;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
        worst = worst.max(if se > 0.0 { (mean - want).abs() / se } else { (mean - want).abs() * f64::INFINITY });
        let closed = (1.0 - alpha.powi(l as i32)) / (1.0 - alpha);
        geometric_err = geometric_err.max((want - closed).abs() / closed);
    }
    let summed = expected_advance(0.5, 2).unwrap();
    let shortcut = 1.0 - 0.5f64.powi(2) + 2.0 * 0.5f64.powi(3);
    Outcome::new(
        worst <= 3.0 && geometric_err <= 1e-12 && summed != shortcut,
        format!(
            "max |sim - sum| = {worst:.2} se, max rel gap to (1-a^L)/(1-a) = {geometric_err:.1e}, a=0.5 L=2: sum {summed} vs 1-a^L+L a^(L+1) = {shortcut}"
        ),
    )
}

fn naive_baseline() -> Outcome {
    let p = GaussianKernel::new(vec![0.5], 0.5).unwrap();
    let q = GaussianKernel::new(vec![1.5], 0.5).unwrap();
    let tv = gaussian_tv(&p.mean, &q.mean, 0.5).unwrap();
    let mut r = rng(70);
    let n = 100_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let t = naive_adjusted_rejection(&p, &q, &mut r, DEFAULT_MAX_TRIALS).unwrap().1 as f64;
        s += t;
        s2 += t * t;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    // a rejection happens with probability TV and then costs E[trials] proposals
    let per_event = tv * mean;
    Outcome::new(
        (mean - 1.0 / tv).abs() <= 3.0 * se && (per_event - 1.0).abs() <= 3.0 * tv * se,
        format!(
            "mean trials = {mean:.4} +- {se:.4}, 1/TV = {:.4}, q-samples per coupling call = {per_event:.4}",
            1.0 / tv
        ),
    )
}

fn acceptance_bound() -> Outcome {
    let mut r = rng(80);
    let schedule = Schedule::linear(DEFAULT_T_CLIP).unwrap();
    let mut violations = 0;
    let mut worst = (0.0f64, 0.0, 0.0);
    for _ in 0..100 {
        let d = 1 + r.below(4);
        let gmm = GmmSpec::random(d, 2 + r.below(7), &mut r).unwrap();
        let offset = 0.05 + 0.45 * r.uniform();
        let draft = ScoreModel::perturbed(&gmm, offset, 0.0, &mut r).unwrap();
        let target = ScoreModel::exact(gmm);
        let t = 0.05 + 0.9 * r.uniform();
        let eps = 0.1 + 0.9 * r.uniform();
        let gamma = 1.0 / (20 + r.below(481)) as f64;
        let b = acceptance_lower_bound(&draft, &target, &schedule, t, gamma, eps, 4000, &mut r).unwrap();
        let gap = (b.bound - b.empirical_acceptance) / b.empirical_std_err.max(1e-300);
        if b.empirical_acceptance < b.bound - 3.0 * b.empirical_std_err {
            violations += 1;
        }
        if gap > worst.0 {
            worst = (gap, b.bound, b.empirical_acceptance);
        }
    }
    Outcome::new(
        violations == 0,
        format!(
            "{violations}/100 configs below bound - 3 se; worst bound {:.5} vs empirical {:.5} ({:.0} se)",
            worst.1, worst.2, worst.0
        ),
    )
}

fn temperature(exact_at_one: bool) -> Outcome {
    let pool = pool();
    let mut cfg = ExperimentConfig::default();
    cfg.couple.m_p = vec![0.5];
    cfg.couple.m_q = vec![1.5];
    cfg.couple.sigma = 0.5;
    cfg.couple.n_mc = 200_000;
    cfg.couple.n_naive = 0;
    let rates: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&tau| {
            cfg.couple.tau = tau;
            couple::run(&cfg, &pool).unwrap().empirical
        })
        .collect();
    let monotone = rates.windows(2).all(|w| w[1] <= w[0]);

    let mut r = rng(90);
    let identical = (0..10_000).all(|_| {
        let (m_p, m_q, z, u) = (normals(&mut r, 3), normals(&mut r, 3), normals(&mut r, 3), r.uniform());
        tempered_reflection_coupling(&m_p, &m_q, 0.8, &z, u, 1.0).unwrap()
            == reflection_coupling(&m_p, &m_q, 0.8, &z, u).unwrap()
    });

    cfg.couple.m_p = vec![1.0];
    cfg.couple.m_q = vec![0.0];
    cfg.couple.sigma = 1.0;
    cfg.couple.n_mc = 1_000_000;
    let mut coef = Vec::new();
    let mut within = true;
    for tau in [0.5, 2.0] {
        cfg.couple.tau = tau;
        let rep = couple::run(&cfg, &pool).unwrap();
        let (m, se, c) = (
            rep.mean_coefficient.unwrap(),
            rep.mean_coefficient_std_err.unwrap(),
            rep.mean_coefficient_closed_form.unwrap(),
        );
        within &= (m - c).abs() <= 4.0 * se;
        coef.push(format!("tau={tau}: {m:.4} vs C = {c:.4} ({:+.2} se)", (m - c) / se));
    }
    let rates: Vec<String> = rates.iter().map(|v| format!("{v:.4}")).collect();
    Outcome::new(
        monotone && identical && within && exact_at_one,
        format!(
            "rejection by tau [0.25..4] = {}; tau=1 bitwise reflection: {identical}; criterion 3: {exact_at_one}; {}",
            rates.join(" "),
            coef.join(", ")
        ),
    )
}

fn projection_algebra() -> Outcome {
    let mut r = rng(100);
    let mut bitwise = true;
    for d in [1usize, 3, 8] {
        let proj = Projection::new(Matrix::identity(d)).unwrap();
        for _ in 0..2000 {
            let (m_p, m_q, z, u) = (normals(&mut r, d), normals(&mut r, d), normals(&mut r, d), r.uniform());
            bitwise &= projected_reflection_coupling(&proj, &m_p, &m_q, 0.6, &z, u).unwrap()
                == reflection_coupling(&m_p, &m_q, 0.6, &z, u).unwrap();
        }
    }

    let mut worst = 0.0f64;
    for &(rows, cols) in &[(2usize, 5usize), (3, 3), (4, 8)] {
        for _ in 0..100 {
            let a = Matrix::from_rows(rows, cols, normals(&mut r, rows * cols)).unwrap();
            let proj = Projection::new(a.clone()).unwrap();
            let delta = normals(&mut r, cols);
            let z = normals(&mut r, cols);

            let an = DMatrix::from_row_slice(rows, cols, a.as_slice());
            let eig = (&an * an.transpose()).symmetric_eigen();
            let pow = |f: fn(f64) -> f64| {
                &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f)) * eig.eigenvectors.transpose()
            };
            let (inv_sqrt, sqrt) = (pow(|l| 1.0 / l.sqrt()), pow(f64::sqrt));
            let z_a = &inv_sqrt * (&an * DVector::from_column_slice(&z));
            let d_a = &inv_sqrt * (&an * DVector::from_column_slice(&delta));

            // the acceptance ratio in state space equals the latent Gaussian ratio
            let p_delta = proj.projector().matvec(&delta);
            let lhs: f64 = -0.5 * delta.iter().zip(&z).zip(&p_delta).map(|((d, z), p)| (d + 2.0 * z) * p).sum::<f64>();
            let rhs = -0.5 * (&z_a + &d_a).norm_squared() + 0.5 * z_a.norm_squared();
            worst = worst.max((lhs.exp() - rhs.exp()).abs() / rhs.exp().max(1e-300));

            // a rejected output pushes forward to the latent reflection
            let out = projected_reflection_coupling(&proj, &delta, &vec![0.0; cols], 1.0, &z, 1.0).unwrap();
            if !out.accepted {
                let e = &d_a / d_a.norm();
                let want = &sqrt * (&z_a - 2.0 * e.dot(&z_a) * &e);
                for (g, w) in a.matvec(&out.y).iter().zip(want.iter()) {
                    worst = worst.max((g - w).abs() / (1.0 + w.abs()));
                }
            }
        }
    }
    Outcome::new(
        bitwise && worst <= 1e-10,
        format!("A = I bitwise equal to reflection: {bitwise}; latent identities max rel err {worst:.1e}"),
    )
}

fn covariance_overlap() -> Outcome {
    let (s1, s2) = (0.2, 0.1);
    // integral of min(p, q) on a fine grid
    let (lo, hi, steps) = (-2.0, 2.0, 400_000);
    let h = (hi - lo) / steps as f64;
    let f = |x: f64| (normal_pdf(x / s1) / s1).min(normal_pdf(x / s2) / s2);
    let quad: f64 = (0..=steps)
        .map(|i| {
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * f(lo + i as f64 * h)
        })
        .sum::<f64>()
        * h;
    let at1 = diff_covariance_overlap(s1, s2, 1).unwrap();
    let curve: Vec<f64> = (1..=500).map(|d| diff_covariance_overlap(s1, s2, d).unwrap()).collect();
    let tail_decreasing = curve[9..].windows(2).all(|w| w[1] <= w[0]);
    let at500 = curve[499];
    Outcome::new(
        (at1 - quad).abs() <= 1e-4 && at500 < 1e-3 && tail_decreasing,
        format!("d=1: {at1:.6} vs quadrature {quad:.6}; d=500: {at500:.2e}; decreasing from d=10: {tail_decreasing}"),
    )
}

fn run_cli(args: &[&str], out: &Path) {
    let mut argv = vec!["specdiff".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.extend(["--out".into(), out.display().to_string()]);
    Cli::try_parse_from(argv).unwrap().run().unwrap();
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    let names = |p: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(p).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    let (na, nb) = (names(a), names(b));
    na == nb && na.iter().all(|n| std::fs::read(a.join(n)).unwrap() == std::fs::read(b.join(n)).unwrap())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let commands: [&[&str]; 4] = [
        &["sample", "--chains", "300", "--seed", "11"],
        &[
            "sweep",
            "--chains",
            "100",
            "--param",
            "L",
            "--values",
            "1,5,10",
            "--strategies",
            "frozen,independent,picard",
        ],
        &["couple", "--n-mc", "50000", "--tau", "2"],
        &["analyze", "--chains", "200", "--steps", "100"],
    ];
    let mut ok = true;
    for (i, cmd) in commands.iter().enumerate() {
        let runs: Vec<_> = ["1", "1", "4", "7"]
            .iter()
            .enumerate()
            .map(|(j, threads)| {
                let dir = tmp.path().join(format!("{i}-{j}"));
                let mut args = cmd.to_vec();
                args.extend(["--threads", threads]);
                run_cli(&args, &dir);
                dir
            })
            .collect();
        ok &= runs[1..].iter().all(|d| same_bytes(&runs[0], d));
    }
    Outcome::new(ok, "sample, sweep, couple, analyze: repeat and 1/4/7 threads byte-identical")
}

fn main() -> ExitCode {
    let run = |id: u8, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let tag = match (o.pass, KNOWN_FAILURES.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2} {tag:<12} {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        (id, o.pass)
    };
    let mut results =
        vec![run(1, "coupling maximality", &maximality), run(2, "marginal exactness", &marginal_exactness)];
    let exact = run(3, "end-to-end exactness", &end_to_end_exactness);
    results.push(exact);
    results.push(run(4, "NFE reduction", &nfe_reduction));
    results.push(run(5, "frozen drafting dominance", &frozen_dominance));
    results.push(run(6, "expected advance", &expected_advance_formula));
    results.push(run(7, "naive baseline", &naive_baseline));
    results.push(run(8, "acceptance lower bound", &acceptance_bound));
    results.push(run(9, "temperature", &|| temperature(exact.1)));
    results.push(run(10, "projection algebra", &projection_algebra));
    results.push(run(11, "different-covariance overlap", &covariance_overlap));
    results.push(run(12, "determinism", &determinism));

    let passed = results.iter().filter(|r| r.1).count();
    let unexpected: Vec<u8> = results.iter().filter(|r| !r.1 && !KNOWN_FAILURES.contains(&r.0)).map(|r| r.0).collect();
    println!("acceptance: {passed}/{} passed", results.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
