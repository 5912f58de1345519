//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Lines go straight to stdout so they show up without `--nocapture`.

use std::f64::consts::FRAC_PI_4;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use grassnet::features::{cross_gram, extract_all, VectorSeries};
use grassnet::gct::louvain::louvain;
use grassnet::gct::sparse::sparse_code;
use grassnet::gct::{gct_cluster, GctParams};
use grassnet::grassmann::{distance, exp_map, log_map, principal_angles};
use grassnet::metrics::{accuracy, confusion, nmi};
use grassnet::{GrassmannPoint, Horizon, KernelSpec, Scope, TimeSeriesPanel, WindowConfig};
use grassnet_cli::bench::{cmd_bench, run_trial, BenchConfig, Dataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{verdict}] criterion {id:>2} {name}: {detail}");
    let _ = out.flush();
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| gauss(rng))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    random_matrix(rng, n, n).qr().q()
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let took = start.elapsed();
    (took < limit, format!("{:.1}s of {}s", took.as_secs_f64(), limit.as_secs()))
}

fn bench_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/bench.json")
}

fn dataset(name: &str) -> Dataset {
    let text = std::fs::read_to_string(bench_config()).unwrap();
    let config: BenchConfig = serde_json::from_str(&text).unwrap();
    config.datasets.into_iter().find(|d| d.name == name).unwrap()
}

/// Mean of each metric over seeds 0..5; a failed trial aborts the criterion.
fn five_seed_means(d: &Dataset) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for seed in 0..5 {
        let rec = run_trial(d, seed);
        assert!(rec.ok, "{} seed {seed}: {:?}", d.name, rec.error);
        for (k, v) in rec.metrics {
            *sums.entry(k).or_default() += v;
        }
    }
    sums.values_mut().for_each(|v| *v /= 5.0);
    sums
}

// ---------------------------------------------------------------- 1

/// q independent copies of a 2-dim latent state observed through the row c.
/// With process noise the state is driven by unit innovations after a burn-in;
/// without it the trajectory is the free response from a random start.
/// Returns the q × len panel and the true span of [c; cA; cA²; cA³].
fn lti_panel(
    rng: &mut ChaCha8Rng,
    len: usize,
    process_noise: bool,
    obs_std: f64,
) -> (TimeSeriesPanel, GrassmannPoint) {
    let q = 3;
    // complex pole pair of radius 0.9; keeping the angle away from 0 and pi
    // keeps [c; cA] well conditioned so both directions show up in the data
    let th: f64 = rng.gen_range(FRAC_PI_4..3.0 * FRAC_PI_4);
    let a = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]) * 0.9;
    let c = DVector::from_fn(2, |_, _| gauss(rng));
    let mut psi = random_matrix(rng, q, 2);
    let burn = if process_noise { 200 } else { 0 };
    let mut data = DMatrix::zeros(q, len);
    for t in 0..burn + len {
        if t >= burn {
            let y = &psi * &c;
            for l in 0..q {
                data[(l, t - burn)] = y[l] + obs_std * gauss(rng);
            }
        }
        psi = &psi * a.transpose();
        if process_noise {
            psi += random_matrix(rng, q, 2);
        }
    }
    let mut obs = DMatrix::zeros(4, 2);
    let mut row = c.transpose();
    for k in 0..4 {
        obs.set_row(k, &row);
        row = &row * &a;
    }
    (TimeSeriesPanel::from_samples(data).unwrap(), GrassmannPoint::from_span(obs).unwrap())
}

fn lti_window(tau_f: usize) -> WindowConfig {
    WindowConfig { stack_depth: 1, block_rows: 4, rank: 2, tau_f, tau_b: 4, buff: 1, stride: 1, scope: Scope::NetworkWide }
}

fn lti_distance(panel: &TimeSeriesPanel, truth: &GrassmannPoint, cfg: &WindowConfig) -> f64 {
    let feats = extract_all(panel, cfg, &KernelSpec::Linear, &Horizon::Anchors(vec![cfg.first_anchor()])).unwrap();
    distance(&feats[0].point, truth).unwrap()
}

#[test]
fn criterion_01_subspace_recovery() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = lti_window(200);
    let (panel, truth) = lti_panel(&mut rng, cfg.sample_span(), false, 0.0);
    let exact = lti_distance(&panel, &truth, &cfg);

    let taus = [50, 200, 800];
    let mut means = [0.0; 3];
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (panel, truth) = lti_panel(&mut rng, lti_window(800).sample_span(), true, 0.01);
        for (k, &tau) in taus.iter().enumerate() {
            means[k] += lti_distance(&panel, &truth, &lti_window(tau)) / 5.0;
        }
    }
    let (fast, took) = within(start, Duration::from_secs(10));
    let ok = exact < 1e-6 && means[0] > means[1] && means[1] > means[2] && fast;
    report(
        1,
        "LTI subspace recovery",
        ok,
        &format!("noiseless {exact:.2e}; noisy means {:.3e} > {:.3e} > {:.3e}; {took}", means[0], means[1], means[2]),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_kernel_trick() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=3);
        let tau_f = rng.gen_range(2..=8);
        let tau_b = rng.gen_range(1..=4);
        let q = rng.gen_range(1..=4);
        let cfg = WindowConfig { stack_depth: n, block_rows: m, rank: 1, tau_f, tau_b, buff: 1, stride: 1, scope: Scope::NetworkWide };
        let t = tau_b - 1 + rng.gen_range(0..3);
        let len = t + m + tau_f + n + 2;
        let ys = random_matrix(&mut rng, q, len);
        // 1-based i, n, j, n', c as in the block definition
        let f = DMatrix::from_fn(m * n, tau_f * q, |r, col| {
            let (i, nn) = (r / n + 1, r % n + 1);
            let (c, l) = (col / q + 1, col % q);
            ys[(l, t + i + c + nn - 2)]
        });
        let b = DMatrix::from_fn(tau_b * n, tau_f * q, |s, col| {
            let (j, np) = (s / n + 1, s % n + 1);
            let (c, l) = (col / q + 1, col % q);
            ys[(l, t + c + np - 1 - j)]
        });
        let explicit = f * b.transpose() / tau_f as f64;
        let fast = cross_gram(&VectorSeries::new(ys), t, &cfg, &KernelSpec::Linear).unwrap();
        worst = worst.max((explicit - fast).norm());
    }

    let poly = KernelSpec::polynomial(2);
    let feature_map = |a: &[f64]| {
        let mut phi = vec![1.0];
        phi.extend(a.iter().map(|x| 2f64.sqrt() * x));
        for i in 0..a.len() {
            phi.push(a[i] * a[i]);
            for j in i + 1..a.len() {
                phi.push(2f64.sqrt() * a[i] * a[j]);
            }
        }
        phi
    };
    let mut poly_worst = 0.0f64;
    for _ in 0..20 {
        let d = rng.gen_range(1..=5);
        let a: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
        let b: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
        let explicit: f64 = feature_map(&a).iter().zip(feature_map(&b)).map(|(x, y)| x * y).sum();
        poly_worst = poly_worst.max((poly.eval(&a, &b).unwrap() - explicit).abs());
    }
    let (fast, took) = within(start, Duration::from_secs(5));
    report(
        2,
        "kernel trick",
        worst < 1e-10 && poly_worst < 1e-12 && fast,
        &format!("linear {worst:.1e}; polynomial {poly_worst:.1e}; {took}"),
    );
}

// ---------------------------------------------------------------- 3

/// Two bundles of rank-2 subspaces of R^6 around random centers.
fn bundles(rng: &mut ChaCha8Rng, per: usize) -> Vec<GrassmannPoint> {
    let centers: Vec<DMatrix<f64>> = (0..2).map(|_| random_matrix(rng, 6, 2)).collect();
    let mut points = Vec::new();
    for c in &centers {
        for _ in 0..per {
            points.push(GrassmannPoint::from_span(c + random_matrix(rng, 6, 2) * 0.05).unwrap());
        }
    }
    points
}

#[test]
fn criterion_03_grassmann_geometry() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut round_trip, mut asym, mut self_dist, mut invariance) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut pairs = 0;
    while pairs < 100 {
        let d = rng.gen_range(3..=8);
        let rho = rng.gen_range(1..d);
        let x = GrassmannPoint::from_span(random_matrix(&mut rng, d, rho)).unwrap();
        let y = GrassmannPoint::from_span(x.basis() + random_matrix(&mut rng, d, rho) * 0.6).unwrap();
        let angles = principal_angles(&x, &y).unwrap();
        if angles.iter().any(|&t| t > 1.4) {
            continue;
        }
        pairs += 1;
        let back = exp_map(&x, &log_map(&x, &y).unwrap()).unwrap();
        let e = distance(&back, &y).unwrap();
        round_trip = round_trip.max(e);
        asym = asym.max((distance(&x, &y).unwrap() - distance(&y, &x).unwrap()).abs());
        self_dist = self_dist.max(distance(&x, &x).unwrap());

        let (rx, ry) = (random_orthogonal(&mut rng, rho), random_orthogonal(&mut rng, rho));
        let (x2, y2) = (x.rebased(&rx).unwrap(), y.rebased(&ry).unwrap());
        let moved = principal_angles(&x2, &y2).unwrap();
        for (a, b) in angles.iter().zip(&moved) {
            invariance = invariance.max((a - b).abs());
        }
        invariance = invariance.max((distance(&x, &y).unwrap() - distance(&x2, &y2).unwrap()).abs());
    }

    let mut labels_match = true;
    for trial in 0..3 {
        let points = bundles(&mut rng, 12);
        let params = GctParams::new(5, 1.0, 1.0);
        let before = gct_cluster(&points, &params).unwrap();
        let rotated: Vec<GrassmannPoint> = points
            .iter()
            .map(|p| p.rebased(&random_orthogonal(&mut rng, 2)).unwrap())
            .collect();
        let after = gct_cluster(&rotated, &params).unwrap();
        if before != after {
            labels_match = false;
            eprintln!("trial {trial}: {before:?} vs {after:?}");
        }
    }
    let (fast, took) = within(start, Duration::from_secs(30));
    let ok = round_trip < 1e-8 && asym < 1e-12 && self_dist < 1e-12 && invariance < 1e-10 && labels_match && fast;
    report(
        3,
        "Grassmann geometry",
        ok,
        &format!(
            "round trip {round_trip:.1e}; asymmetry {asym:.1e}; d(X,X) {self_dist:.1e}; rebasing {invariance:.1e}; gct labels invariant {labels_match}; {took}"
        ),
    );
}

// ---------------------------------------------------------------- 4

fn coding_objective(xs: &[DVector<f64>], sigma: f64, alpha: &[f64]) -> f64 {
    let mut combo = DVector::zeros(xs[0].len());
    for (a, x) in alpha.iter().zip(xs) {
        combo += x * *a;
    }
    let penalty: f64 = alpha.iter().zip(xs).map(|(a, x)| (x.norm() / sigma).exp() * a.abs()).sum();
    combo.norm_squared() + penalty
}

/// Minimum over the hyperplane Σα = 1 by a zooming grid on the first k−1
/// coordinates. The objective is convex, so each zoom keeps the minimizer.
fn grid_oracle(xs: &[DVector<f64>], sigma: f64) -> f64 {
    let k = xs.len();
    let free = k - 1;
    // any α with ‖α‖₁ > R costs more than the best vertex
    let radius = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            coding_objective(xs, sigma, &e)
        })
        .fold(f64::INFINITY, f64::min);
    let steps = if free == 1 { 400 } else { 60 };
    let mut center = vec![0.0; free];
    let mut half = radius;
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        let h = 2.0 * half / steps as f64;
        let mut best_at = center.clone();
        let mut idx = vec![0usize; free];
        loop {
            let coords: Vec<f64> = (0..free).map(|d| center[d] - half + h * idx[d] as f64).collect();
            let mut alpha = coords.clone();
            alpha.push(1.0 - coords.iter().sum::<f64>());
            let f = coding_objective(xs, sigma, &alpha);
            if f < best {
                best = f;
                best_at = coords;
            }
            let mut d = 0;
            while d < free {
                idx[d] += 1;
                if idx[d] <= steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == free {
                break;
            }
        }
        center = best_at;
        half = 2.0 * h;
    }
    best
}

#[test]
fn criterion_04_sparse_coding_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let defaults = GctParams::new(2, 1.0, 1.0);
    let (mut gap, mut sum_err) = (0.0f64, 0.0f64);
    for k in [2usize, 3] {
        for _ in 0..25 {
            let d = rng.gen_range(2..=5);
            let scale = rng.gen_range(0.2..1.5);
            let xs: Vec<DVector<f64>> = (0..k).map(|_| DVector::from_fn(d, |_, _| gauss(&mut rng) * scale)).collect();
            let sigma = rng.gen_range(0.5..2.0);
            let code = sparse_code(&xs, sigma, defaults.sparse_solver_tol, defaults.sparse_solver_max_iter).unwrap();
            let solver = coding_objective(&xs, sigma, &code.alpha);
            gap = gap.max((solver - grid_oracle(&xs, sigma)).abs());
            sum_err = sum_err.max((code.alpha.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let (fast, took) = within(start, Duration::from_secs(60));
    report(
        4,
        "sparse coding oracle",
        gap < 1e-6 && sum_err < 1e-9 && fast,
        &format!("max objective gap {gap:.1e}; max |Σα − 1| {sum_err:.1e}; {took}"),
    );
}

// ---------------------------------------------------------------- 5

fn graph(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for &(i, j, x) in edges {
        w[(i, j)] = x;
        w[(j, i)] = x;
    }
    w
}

fn oracle_modularity(w: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let n = w.nrows();
    let k: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w[(i, j)]).sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += w[(i, j)] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Best modularity over every set partition (restricted growth strings).
fn exhaustive_modularity(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let mut labels = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        best = best.max(oracle_modularity(w, &labels));
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return best;
            }
            let ceiling = labels[..i].iter().max().unwrap() + 1;
            if labels[i] < ceiling {
                labels[i] += 1;
                labels[i + 1..].iter_mut().for_each(|l| *l = 0);
                break;
            }
            i -= 1;
        }
    }
}

#[test]
fn criterion_05_louvain_optimality() {
    let start = Instant::now();
    let mut graphs = vec![
        ("two triangles + bridge", graph(6, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0), (2, 3, 1.0)])),
        ("K4", graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)])),
        ("disconnected edges", graph(6, &[(0, 1, 1.0), (2, 3, 1.0), (4, 5, 1.0)])),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for r in 0..5 {
        let n = rng.gen_range(5..=8);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.5) {
                    edges.push((i, j, rng.gen_range(0.1..1.0)));
                }
            }
        }
        graphs.push((["random 1", "random 2", "random 3", "random 4", "random 5"][r], graph(n, &edges)));
    }
    let mut failures = Vec::new();
    for (name, w) in &graphs {
        let res = louvain(w, 1.0, 0);
        let optimum = exhaustive_modularity(w);
        let achieved = oracle_modularity(w, &res.labels);
        let monotone = res.history.windows(2).all(|p| p[1] >= p[0] - 1e-12);
        if (achieved - optimum).abs() > 1e-10 || (achieved - res.modularity).abs() > 1e-10 || !monotone {
            failures.push(format!("{name}: {achieved} vs optimum {optimum}, monotone {monotone}"));
        }
    }
    let (fast, took) = within(start, Duration::from_secs(30));
    let detail = if failures.is_empty() {
        format!("{} graphs at the exhaustive optimum, history monotone; {took}", graphs.len())
    } else {
        format!("{}; {took}", failures.join("; "))
    };
    report(5, "Louvain optimality", failures.is_empty() && fast, &detail);
}

// ---------------------------------------------------------------- 6-8

#[test]
fn criterion_06_state_clustering() {
    let start = Instant::now();
    let means = five_seed_means(&dataset("d1_states"));
    let (acc, nmi) = (means["accuracy"], means["nmi"]);
    let (fast, took) = within(start, Duration::from_secs(300));
    report(
        6,
        "state clustering analog",
        acc >= 0.95 && nmi >= 0.90 && fast,
        &format!("mean accuracy {acc:.3} (need 0.95), NMI {nmi:.3} (need 0.90); {took}"),
    );
}

#[test]
fn criterion_07_community_detection() {
    let start = Instant::now();
    let means = five_seed_means(&dataset("planted_communities"));
    let acc = means["node_accuracy"];
    let (fast, took) = within(start, Duration::from_secs(300));
    report(
        7,
        "community detection analog",
        acc >= 0.95 && fast,
        &format!("mean per-state node accuracy {acc:.3} (need 0.95); {took}"),
    );
}

#[test]
fn criterion_08_known_vs_estimated() {
    let start = Instant::now();
    let known = five_seed_means(&dataset("shared_driver_known"))["sequence_accuracy"];
    let estimated = five_seed_means(&dataset("shared_driver_estimated"))["sequence_accuracy"];
    let (fast, took) = within(start, Duration::from_secs(300));
    report(
        8,
        "known vs estimated states",
        known >= estimated && fast,
        &format!("sequence accuracy known {known:.3} >= estimated {estimated:.3}; {took}"),
    );
}

// ---------------------------------------------------------------- 9

fn brute_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let labels = |v: &[usize]| {
        let mut l = v.to_vec();
        l.sort_unstable();
        l.dedup();
        l
    };
    let (pl, tl) = (labels(pred), labels(truth));
    let mut best = 0;
    for map in injections(pl.len(), tl.len()) {
        let hits = pred
            .iter()
            .zip(truth)
            .filter(|(p, t)| {
                let r = pl.binary_search(p).unwrap();
                map[r].map(|c| tl[c]) == Some(**t)
            })
            .count();
        best = best.max(hits);
    }
    best as f64 / pred.len() as f64
}

/// Every partial one-to-one map rows → columns that matches min(rows, cols) rows.
fn injections(rows: usize, cols: usize) -> Vec<Vec<Option<usize>>> {
    fn go(r: usize, rows: usize, cols: usize, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if r == rows {
            if cur.iter().filter(|c| c.is_some()).count() == rows.min(cols) {
                out.push(cur.clone());
            }
            return;
        }
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                cur.push(Some(c));
                go(r + 1, rows, cols, used, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
        cur.push(None);
        go(r + 1, rows, cols, used, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    go(0, rows, cols, &mut vec![false; cols], &mut Vec::new(), &mut out);
    out
}

fn brute_nmi(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pm: BTreeMap<usize, f64> = BTreeMap::new();
    let mut tm: BTreeMap<usize, f64> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((p, t)).or_default() += 1.0 / n;
        *pm.entry(p).or_default() += 1.0 / n;
        *tm.entry(t).or_default() += 1.0 / n;
    }
    let h = |m: &BTreeMap<usize, f64>| -m.values().map(|p| p * p.ln()).sum::<f64>();
    let (hp, ht) = (h(&pm), h(&tm));
    if hp == 0.0 && ht == 0.0 {
        return 1.0;
    }
    let mi: f64 = joint.iter().map(|(&(p, t), &pj)| pj * (pj / (pm[&p] * tm[&t])).ln()).sum();
    (2.0 * mi / (hp + ht)).clamp(0.0, 1.0)
}

/// Confusion rates under every optimal matching; the lower truth label is positive.
fn brute_confusions(pred: &[usize], truth: &[usize]) -> Vec<[f64; 4]> {
    let mut pl = pred.to_vec();
    pl.sort_unstable();
    pl.dedup();
    let mut tl = truth.to_vec();
    tl.sort_unstable();
    tl.dedup();
    let score = |map: &Vec<Option<usize>>| {
        pred.iter().zip(truth).filter(|(p, t)| map[pl.binary_search(p).unwrap()].map(|c| tl[c]) == Some(**t)).count()
    };
    let maps = injections(pl.len(), 2);
    let best = maps.iter().map(score).max().unwrap();
    maps.iter()
        .filter(|m| score(m) == best)
        .map(|map| {
            let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
            for (p, t) in pred.iter().zip(truth) {
                let positive = *t == tl[0];
                match (map[pl.binary_search(p).unwrap()], positive) {
                    (Some(0), true) => tp += 1.0,
                    (Some(0), false) => fp += 1.0,
                    (Some(_), true) => fn_ += 1.0,
                    (Some(_), false) => tn += 1.0,
                    (None, true) => fn_ += 1.0,
                    (None, false) => fp += 1.0,
                }
            }
            [tp / (tp + fn_), fp / (fp + tn), fn_ / (tp + fn_), tn / (fp + tn)]
        })
        .collect()
}

#[test]
fn criterion_09_metric_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let (mut acc_mismatch, mut nmi_err, mut conf_mismatch, mut conf_cases) = (0, 0.0f64, 0, 0);
    for _ in 0..50 {
        let n = rng.gen_range(2..=30);
        let (kp, kt) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kp) * 3).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kt) + 10).collect();
        if accuracy(&pred, &truth).unwrap() != brute_accuracy(&pred, &truth) {
            acc_mismatch += 1;
        }
        nmi_err = nmi_err.max((nmi(&pred, &truth).unwrap() - brute_nmi(&pred, &truth)).abs());
        let mut distinct = truth.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() == 2 {
            conf_cases += 1;
            let c = confusion(&pred, &truth).unwrap();
            let got = [c.tpr, c.fpr, c.fnr, c.tnr];
            if !brute_confusions(&pred, &truth).contains(&got) {
                conf_mismatch += 1;
            }
        }
    }
    let (fast, took) = within(start, Duration::from_secs(5));
    report(
        9,
        "metric oracles",
        acc_mismatch == 0 && nmi_err < 1e-12 && conf_mismatch == 0 && conf_cases > 0 && fast,
        &format!(
            "accuracy mismatches {acc_mismatch}/50; max NMI error {nmi_err:.1e}; confusion mismatches {conf_mismatch}/{conf_cases}; {took}"
        ),
    );
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_bench_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_bench(&bench_config(), 2, 0, Some(2), &a).unwrap();
    cmd_bench(&bench_config(), 2, 0, Some(3), &b).unwrap();
    let first = std::fs::read(a.join("manifest.json")).unwrap();
    let second = std::fs::read(b.join("manifest.json")).unwrap();
    let summaries = std::fs::read(a.join("summary.csv")).unwrap() == std::fs::read(b.join("summary.csv")).unwrap();
    report(
        10,
        "bench determinism",
        first == second && summaries,
        &format!("manifests {} bytes, identical {}; summaries identical {summaries}", first.len(), first == second),
    );
}
