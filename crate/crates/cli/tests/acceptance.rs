//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `cargo test -p retrieve-cli --test acceptance -- [ids...]` runs a subset.
//! Failures are reported but only fail the process when
//! `ACCEPTANCE_STRICT=1` is set.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use retrieve_core::active::threshold_update;
use retrieve_core::eigenmap::{
    build_histogram, select_basis, solve_eigenfunctions_1d, VisualModel, VisualSettings,
};
use retrieve_core::harness::{generate_synthetic, ExperimentConfig, SyntheticConfig, Workbench};
use retrieve_core::numerics::DenseMatrix;
use retrieve_core::pipeline::item_smoothness;
use retrieve_core::solver::{exact_dense_solve, solve_coefficients, solve_reduced};
use retrieve_core::taxonomy::{
    build_class_basis, class_affinity, class_priors, lin_similarity, ClassPriors, NodeRecord,
    Taxonomy, TaxonomyDocument,
};
use retrieve_core::{
    ActiveLearner, FusionWeights, Label, LabelState, Modality, OfflineBases, PipelineConfig,
    QueryStrategy, StrategyKind, ThresholdState,
};
use retrieve_testkit::{generalized_eigen_diag, norm, spearman, top_k_overlap, Square, XorShift};

type Res<T> = Result<T, Box<dyn std::error::Error>>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Res<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    type Check = fn() -> Res<Outcome>;
    let criteria: [(u32, &str, u64, Check); 10] = [
        (
            1,
            "reduced solve tracks the exact graph solve",
            30,
            criterion_1,
        ),
        (
            2,
            "density eigenproblem residuals and discard rule",
            5,
            criterion_2,
        ),
        (3, "reduced system residuals", 5, criterion_3),
        (
            4,
            "adaptive beats constant threshold at round 20",
            600,
            criterion_4,
        ),
        (
            5,
            "adaptive at least random at round 200",
            1200,
            criterion_5,
        ),
        (6, "online round scales linearly in n", 300, criterion_6),
        (7, "Lin similarity suite", 1, criterion_7),
        (8, "threshold trace is exact", 1, criterion_8),
        (9, "replay and experiment determinism", 60, criterion_9),
        (
            10,
            "step size cross-validation structure",
            600,
            criterion_10,
        ),
    ];
    let mut failed = 0;
    for (id, title, budget, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let budget = Duration::from_secs(budget);
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {id}: {title}: {detail} [{:.2} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn two_clusters(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = XorShift::new(seed);
    (0..n)
        .map(|i| {
            let cx = if i < n / 2 { -1.5 } else { 1.5 };
            vec![cx + 0.6 * rng.normal(), 0.6 * rng.normal()]
        })
        .collect()
}

/// Fixed protocol: clusters at (±1.5, 0) with spread 0.6, nine positives
/// from the left cluster and one negative from the right. Reduced weight
/// `λ = 1`; the dense graph uses the same kernel width and `λ` rescaled by
/// the least-squares ratio between graph smoothness and the basis weights.
fn criterion_1() -> Res<Outcome> {
    let n = 2000;
    let rows = two_clusters(n, 7);
    let x = DenseMatrix::from_rows(&rows)?;
    let settings = VisualSettings {
        bins: 500,
        k: 8,
        pca_dims: 2,
        rbf_sigma: None,
        bandwidth_fraction: 0.1,
        discard_epsilon: 1e-10,
    };
    let model = VisualModel::fit(&x, &settings)?;
    let u = model.embed(&x)?;
    let sigma = item_smoothness(&model.basis.eigenvalues(), n);
    let seeds: Vec<(usize, Label)> = (0..9)
        .map(|i| (i, Label::Positive))
        .chain([(n / 2, Label::Negative)])
        .collect();
    let reduced = solve_reduced(&u, &sigma, &LabelState::with_labels(1.0, seeds.clone())?)?;

    let eps = model.basis.rbf_sigma;
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d2 = (rows[i][0] - rows[j][0]).powi(2) + (rows[i][1] - rows[j][1]).powi(2);
            w[i * n + j] = (-d2 / (2.0 * eps * eps)).exp();
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (j, s) in sigma.iter().enumerate() {
        let col = u.column(j);
        let mut q = 0.0;
        for a in 0..n {
            for b in (a + 1)..n {
                q += w[a * n + b] * (col[a] - col[b]).powi(2);
            }
        }
        num += q * s;
        den += s * s;
    }
    let c = num / den;
    let w = DenseMatrix::new(n, n, w)?;
    let dense = exact_dense_solve(&w, &LabelState::with_labels(c, seeds)?)?;

    let rho = spearman(&reduced.values, &dense.values);
    let overlap = top_k_overlap(&reduced.values, &dense.values, 100);
    outcome(
        rho >= 0.90 && overlap >= 0.80,
        format!(
            "spearman {rho:.4} (need >= 0.90), top-100 overlap {:.0}% (need >= 80%)",
            overlap * 100.0
        ),
    )
}

/// `‖(D̃ − PW̃P)g − σPD̂g‖` from the definitions, no shared code.
fn eq2_residual(w: &Square, weights: &[f64], eigenvalue: f64, g: &[f64]) -> f64 {
    let b = weights.len();
    let floored: Vec<f64> = weights.iter().map(|v| v.max(1e-8)).collect();
    let total: f64 = floored.iter().sum();
    let p: Vec<f64> = floored.iter().map(|v| v / total).collect();
    let mut d_tilde = vec![0.0; b];
    let mut d_hat = vec![0.0; b];
    for i in 0..b {
        for j in 0..b {
            d_tilde[j] += p[i] * w[i][j] * p[j];
            d_hat[j] += p[i] * w[i][j];
        }
    }
    let r: Vec<f64> = (0..b)
        .map(|i| {
            let pwp: f64 = (0..b).map(|j| p[i] * w[i][j] * p[j] * g[j]).sum();
            d_tilde[i] * g[i] - pwp - eigenvalue * p[i] * d_hat[i] * g[i]
        })
        .collect();
    norm(&r)
}

fn criterion_2() -> Res<Outcome> {
    // Overlapping triangular bumps: full support, two modes.
    let mut rng = XorShift::new(11);
    let column: Vec<f64> = (0..20_000)
        .map(|i| rng.uniform() + rng.uniform() + if i % 3 == 0 { 1.5 } else { 0.0 })
        .collect();
    let hist = build_histogram(&column, 500)?;
    let sigma = 0.1 * hist.range();
    let fns = solve_eigenfunctions_1d(&hist, sigma, 12)?;
    let w: Square = hist
        .bin_centers
        .iter()
        .map(|a| {
            hist.bin_centers
                .iter()
                .map(|b| (-(a - b).powi(2) / (2.0 * sigma * sigma)).exp())
                .collect()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for f in &fns {
        worst = worst.max(eq2_residual(
            &w,
            &hist.densities,
            f.eigenvalue,
            &f.values_at_bins,
        ));
    }
    let ascending = fns.windows(2).all(|p| p[0].eigenvalue <= p[1].eigenvalue);
    let g0 = &fns[0].values_at_bins;
    let spread = g0.iter().fold(0.0_f64, |m, v| m.max((v - g0[0]).abs())) / g0[0].abs();
    let constant_found = fns[0].eigenvalue.abs() < 1e-10 && spread < 1e-6;
    let basis = select_basis(vec![fns.clone()], 10, 1e-10, sigma)?;
    let discarded = basis.k() == 10
        && basis.functions.iter().all(|f| f.eigenvalue > 1e-10)
        && basis.functions[0].eigenvalue == fns[1].eigenvalue;

    // Class route over a synthetic taxonomy.
    let data = generate_synthetic(&SyntheticConfig {
        n: 5000,
        d: 4,
        num_classes: 50,
        positive_prior: 0.02,
        cluster_spread: 0.5,
        taxonomy_depth: 2,
        seed: 2,
    })?;
    let (classes, priors) = class_priors(&data.item_class, ClassPriors::Frequency);
    let aff = class_affinity(&data.taxonomy, &classes, 0.5)?;
    let cb = build_class_basis(&classes, &aff, &priors, 10, 1e-10)?;
    let w_cls: Square = aff.to_rows();
    let mut worst_cls: f64 = 0.0;
    for j in 0..cb.k() {
        worst_cls = worst_cls.max(eq2_residual(
            &w_cls,
            &priors,
            cb.eigenvalues[j],
            &cb.vectors.column(j),
        ));
    }
    // Oracle spectrum of the same pencil.
    let c = classes.len();
    let p: Vec<f64> = priors
        .iter()
        .map(|v| v / priors.iter().sum::<f64>())
        .collect();
    let mut a = vec![vec![0.0; c]; c];
    let mut mass = vec![0.0; c];
    for i in 0..c {
        for j in 0..c {
            a[i][j] = -p[i] * w_cls[i][j] * p[j];
        }
    }
    for j in 0..c {
        let col: f64 = (0..c).map(|i| p[i] * w_cls[i][j] * p[j]).sum();
        a[j][j] += col;
        mass[j] = p[j] * (0..c).map(|i| p[i] * w_cls[i][j]).sum::<f64>();
    }
    let (oracle, _) = generalized_eigen_diag(&a, &mass);
    let cls_constant = oracle[0].abs() < 1e-10 && cb.eigenvalues.iter().all(|&e| e > 1e-10);
    let cls_match = cb
        .eigenvalues
        .iter()
        .zip(&oracle[1..])
        .all(|(x, y)| (x - y).abs() <= 1e-8 * (1.0 + y.abs()));
    let cls_ascending = cb.eigenvalues.windows(2).all(|p| p[0] <= p[1]);

    outcome(
        worst <= 1e-8
            && worst_cls <= 1e-8
            && ascending
            && cls_ascending
            && constant_found
            && discarded
            && cls_constant
            && cls_match,
        format!(
            "1-D max residual {worst:.2e}, class max residual {worst_cls:.2e}, constant eigenvalue {:.1e} found and \
             discarded: {}, class spectrum matches oracle: {cls_match}",
            fns[0].eigenvalue,
            constant_found && discarded && cls_constant
        ),
    )
}

fn criterion_3() -> Res<Outcome> {
    let mut rng = XorShift::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 50 + (rng.next_u64() % 350) as usize;
        let k = 1 + (rng.next_u64() % 20) as usize;
        let u = DenseMatrix::new(n, k, (0..n * k).map(|_| rng.normal()).collect())?;
        let mut eig: Vec<f64> = (0..k)
            .map(|_| 10f64.powf(-3.0 + 5.0 * rng.uniform()))
            .collect();
        if rng.uniform() < 0.3 {
            eig[0] = 0.0;
        }
        let lambda = 10f64.powf(-2.0 + 5.0 * rng.uniform());
        let m = 1 + (rng.next_u64() % 30) as usize;
        let mut state = LabelState::new(lambda)?;
        while state.len() < m {
            let i = (rng.next_u64() % n as u64) as usize;
            if !state.contains(i) {
                state.insert(i, Label::from_bool(rng.uniform() < 0.5))?;
            }
        }
        let alpha = solve_coefficients(&u, &eig, &state)?;
        // A and b straight from the definition.
        let mut a: Square = (0..k)
            .map(|p| (0..k).map(|q| if p == q { eig[p] } else { 0.0 }).collect())
            .collect();
        let mut b = vec![0.0; k];
        for (i, y) in state.iter() {
            let row = u.row(i);
            for p in 0..k {
                b[p] += lambda * row[p] * y.value();
                for q in 0..k {
                    a[p][q] += lambda * row[p] * row[q];
                }
            }
        }
        let r: Vec<f64> = (0..k)
            .map(|p| (0..k).map(|q| a[p][q] * alpha[q]).sum::<f64>() - b[p])
            .collect();
        worst = worst.max(norm(&r) / (1.0 + norm(&b)));
    }
    outcome(
        worst <= 1e-8,
        format!("max ‖Aα − b‖ / (1 + ‖b‖) over 100 instances {worst:.2e}"),
    )
}

fn strategy_bench() -> Res<Workbench> {
    let text = std::fs::read_to_string(repo_path("configs/strategies.json"))?;
    Ok(Workbench::prepare(ExperimentConfig::from_json(&text)?)?)
}

const ALL: [StrategyKind; 3] = [
    StrategyKind::Adaptive,
    StrategyKind::Constant,
    StrategyKind::Random,
];

fn criterion_4() -> Res<Outcome> {
    let bench = strategy_bench()?;
    let doc = bench.compare(&ALL, 20, 20, false)?;
    let f1 = |s: &str| &doc.strategies[s].f1;
    let (a0, a20, c20) = (f1("adaptive")[0], f1("adaptive")[20], f1("constant")[20]);
    outcome(
        a20 > c20 && a20 > a0,
        format!(
            "mean F1 at round 20: adaptive {a20:.4}, constant {c20:.4}; adaptive round 0 {a0:.4} ({} concepts x 20 seeds)",
            bench.eval.len()
        ),
    )
}

fn criterion_5() -> Res<Outcome> {
    let bench = strategy_bench()?;
    let doc = bench.compare(
        &[StrategyKind::Adaptive, StrategyKind::Random],
        200,
        20,
        false,
    )?;
    let (a, r) = (
        doc.strategies["adaptive"].f1[200],
        doc.strategies["random"].f1[200],
    );
    outcome(
        a >= r,
        format!("mean F1 at round 200: adaptive {a:.4}, random {r:.4}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_6() -> Res<Outcome> {
    let mut times = Vec::new();
    for n in [10_000usize, 20_000, 40_000, 80_000] {
        let data = generate_synthetic(&SyntheticConfig {
            n,
            d: 16,
            num_classes: 50,
            positive_prior: 0.02,
            cluster_spread: 0.5,
            taxonomy_depth: 2,
            seed: 4,
        })?;
        let config = PipelineConfig {
            k_visual: 64,
            ..PipelineConfig::default()
        };
        let bases = OfflineBases::build(&data.features, &data.item_class, &data.taxonomy, &config)?;
        let modalities = bases.modalities(&data.features, &data.item_class)?;
        let truth = data.concepts[0].truth(&data.item_class);
        let pos: Vec<usize> = (0..n)
            .filter(|&i| truth[i] == Label::Positive)
            .take(9)
            .collect();
        let neg = (0..n)
            .find(|&i| truth[i] == Label::Negative)
            .ok_or("no negative")?;
        let seeds = pos
            .iter()
            .map(|&i| (i, Label::Positive))
            .chain([(neg, Label::Negative)]);
        let mut learner = ActiveLearner::new(
            modalities,
            FusionWeights::default(),
            LabelState::with_labels(config.lambda_reg, seeds)?,
            QueryStrategy::adaptive(),
            config.step_alpha,
        )?;
        let mut samples = Vec::new();
        for _ in 0..15 {
            let start = Instant::now();
            learner.run_round(|i| truth[i])?;
            samples.push(start.elapsed().as_secs_f64() * 1e3);
        }
        times.push((n, median(samples)));
    }
    let ratio = times[3].1 / times[0].1;
    let listing: Vec<String> = times
        .iter()
        .map(|(n, t)| format!("n={n}: {t:.2} ms"))
        .collect();
    outcome(
        ratio <= 12.0,
        format!(
            "{} ; 80k/10k ratio {ratio:.2} (need <= 12)",
            listing.join(", ")
        ),
    )
}

fn criterion_7() -> Res<Outcome> {
    // root(4) -> A -> {X(1), Y(1)}, root -> Z(2)
    let node = |id: &str, parent: Option<&str>, count| NodeRecord {
        id: id.into(),
        parent: parent.map(Into::into),
        count,
    };
    let t = Taxonomy::from_document(&TaxonomyDocument {
        nodes: vec![
            node("root", None, 0),
            node("A", Some("root"), 0),
            node("X", Some("A"), 1),
            node("Y", Some("A"), 1),
            node("Z", Some("root"), 2),
        ],
    })?;
    let xy = lin_similarity(&t, "X", "Y")?;
    let xa = lin_similarity(&t, "X", "A")?;
    let hand_xy = 2.0 * 0.5f64.ln() / (0.25f64.ln() + 0.25f64.ln());
    let hand_xa = 2.0 * 0.5f64.ln() / (0.25f64.ln() + 0.5f64.ln());
    let mut ok = (xy - 0.5).abs() <= 1e-12
        && (xy - hand_xy).abs() <= 1e-12
        && (xa - 2.0 / 3.0).abs() <= 1e-12
        && (xa - hand_xa).abs() <= 1e-12
        && lin_similarity(&t, "X", "Z")? == 0.0;

    let data = generate_synthetic(&SyntheticConfig {
        n: 1000,
        d: 2,
        num_classes: 27,
        positive_prior: 0.05,
        cluster_spread: 0.5,
        taxonomy_depth: 3,
        seed: 9,
    })?;
    let tax = &data.taxonomy;
    let ids: Vec<&String> = tax
        .ids()
        .iter()
        .filter(|id| id.as_str() != tax.root())
        .collect();
    let mut checked = 0;
    for a in &ids {
        ok &= lin_similarity(tax, a, a)? == 1.0;
        for b in &ids {
            let ab = lin_similarity(tax, a, b)?;
            ok &= ab == lin_similarity(tax, b, a)? && (0.0..=1.0).contains(&ab);
            checked += 1;
        }
    }
    outcome(
        ok,
        format!("lin(X,Y) = {xy}, lin(X,A) = {xa:.15}; identity, symmetry and range over {checked} pairs"),
    )
}

fn criterion_8() -> Res<Outcome> {
    use Label::{Negative as N, Positive as P};
    // (predicted, actual) per round and Θ after it, by hand with step 1/(2·round).
    let script = [(N, P), (P, N), (P, P), (N, P), (P, N), (N, N)];
    let r4: f64 = -0.25 - 0.125;
    let r5 = r4 + 0.1;
    let hand: [f64; 6] = [-0.5, -0.5 + 0.25, -0.5 + 0.25, r4, r5, r5];
    let mut s = ThresholdState::new(2.0)?;
    let mut trace = Vec::new();
    for (pred, act) in script {
        s = threshold_update(s, pred, act);
        trace.push(s.theta);
    }
    let pure_ok = trace
        .iter()
        .zip(&hand)
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && s.round == 7;

    // Same rule through a learner with a scripted oracle.
    let data = generate_synthetic(&SyntheticConfig {
        n: 400,
        d: 3,
        num_classes: 4,
        positive_prior: 0.25,
        cluster_spread: 0.5,
        taxonomy_depth: 2,
        seed: 8,
    })?;
    let config = PipelineConfig {
        bins: 100,
        k_visual: 8,
        k_semantic: 3,
        ..PipelineConfig::default()
    };
    let bases = OfflineBases::build(&data.features, &data.item_class, &data.taxonomy, &config)?;
    let mods: Vec<Modality> = bases.modalities(&data.features, &data.item_class)?;
    let seeds = (0..9)
        .map(|j| (4 * j, Label::Positive))
        .chain([(1, Label::Negative)]);
    let mut learner = ActiveLearner::new(
        mods,
        FusionWeights::default(),
        LabelState::with_labels(config.lambda_reg, seeds)?,
        QueryStrategy::adaptive(),
        2.0,
    )?;
    let answers = [P, N, N, P, P, N, P, N, N, N, P, P];
    let mut expect = 0.0f64;
    let mut learner_ok = true;
    for (r, &ans) in answers.iter().enumerate() {
        let item = learner.select_query()?;
        let predicted = if learner.scores().values[item] > expect {
            P
        } else {
            N
        };
        let step = 1.0 / (2.0 * (r + 1) as f64);
        match (predicted, ans) {
            (N, P) => expect -= step,
            (P, N) => expect += step,
            _ => {}
        }
        let out = learner.answer_query(item, ans)?;
        learner_ok &= out.theta_after.to_bits() == expect.to_bits() && out.round == r as u64 + 1;
    }
    outcome(
        pure_ok && learner_ok,
        format!(
            "scripted trace {trace:?}; learner trace over {} rounds exact: {learner_ok}",
            answers.len()
        ),
    )
}

fn criterion_9() -> Res<Outcome> {
    let dir = tempfile::tempdir()?;
    let files = generate_synthetic(&SyntheticConfig {
        n: 600,
        d: 4,
        num_classes: 6,
        positive_prior: 0.2,
        cluster_spread: 0.5,
        taxonomy_depth: 2,
        seed: 12,
    })?
    .export()?;
    let svc = retrieve_service::Service::open(dir.path())?;
    let desc = svc.create_collection(&retrieve_service::Upload {
        features: files.features,
        classes: files.classes,
        taxonomy: files.taxonomy,
        config: Some(br#"{"bins": 100, "k_visual": 16, "k_semantic": 4}"#.to_vec()),
    })?;
    let mut sids = Vec::new();
    for strategy in ["adaptive", "constant", "random"] {
        let mut seeds: Vec<serde_json::Value> = (0..9)
            .map(|j| serde_json::json!({"item": 6 * j, "label": 1}))
            .collect();
        seeds.push(serde_json::json!({"item": 1, "label": -1}));
        let req = serde_json::from_value(
            serde_json::json!({"seeds": seeds, "strategy": strategy, "seed": 5}),
        )?;
        let sid = svc.create_session(&desc.collection_id, &req)?.id.clone();
        for r in 0..15 {
            let s = svc.session(&sid)?;
            let item = s.pending.ok_or("pool exhausted")?;
            let volunteer = r % 5 == 4;
            let item = if volunteer {
                (0..600)
                    .find(|&i| !s.learner.labels().contains(i) && Some(i) != s.pending)
                    .ok_or("none")?
            } else {
                item
            };
            let label = Label::from_bool(item % 6 == 0);
            svc.submit_label(
                &sid,
                retrieve_service::LabelRequest {
                    item,
                    label,
                    volunteer,
                },
            )?;
        }
        sids.push(sid);
    }
    let snapshot =
        |svc: &retrieve_service::Service| -> Res<Vec<(Vec<u64>, u64, Option<usize>, u64)>> {
            sids.iter()
                .map(|sid| {
                    let s = svc.session(sid)?;
                    Ok((
                        s.learner
                            .scores()
                            .values
                            .iter()
                            .map(|v| v.to_bits())
                            .collect(),
                        s.theta().to_bits(),
                        s.pending,
                        s.round(),
                    ))
                })
                .collect()
        };
    let before = snapshot(&svc)?;
    drop(svc);
    let replayed = snapshot(&retrieve_service::Service::open(dir.path())?)?;
    let replay_ok = before == replayed;

    let config = dir.path().join("exp.json");
    std::fs::write(
        &config,
        r#"{"n": 2000, "d": 8, "num_classes": 10, "positive_prior": 0.1, "cluster_spread": 0.5,
            "taxonomy_depth": 2, "seed": 5, "k_visual": 16, "bins": 200, "test_per_class": 20,
            "eval_concepts": 2, "cv_concepts": 1}"#,
    )?;
    let run = |out: &str| -> Res<Vec<u8>> {
        let out = dir.path().join(out);
        retrieve_cli::experiment(&retrieve_cli::Experiment {
            config: config.clone(),
            strategies: ALL.to_vec(),
            rounds: 30,
            seeds: 4,
            timing: false,
            out: out.clone(),
        })?;
        Ok(std::fs::read(out)?)
    };
    let (a, b) = (run("a.json")?, run("b.json")?);
    let bytes_ok = a == b && !a.is_empty();
    outcome(
        replay_ok && bytes_ok,
        format!(
            "replayed {} sessions with identical f*, theta and pending item: {replay_ok}; identical result JSON ({} bytes): {bytes_ok}",
            sids.len(),
            a.len()
        ),
    )
}

fn criterion_10() -> Res<Outcome> {
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("cv.json");
    let alphas = retrieve_cli::parse_alphas("0.5,1,2,4,8")?;
    let rounds = 100;
    retrieve_cli::cv_alpha(&retrieve_cli::CvAlpha {
        config: repo_path("configs/strategies.json"),
        alphas: alphas.clone(),
        rounds,
        seeds: 5,
        out: out.clone(),
    })?;
    let doc: retrieve_core::harness::CvDocument = serde_json::from_slice(&std::fs::read(&out)?)?;
    let bench = strategy_bench()?;
    let eval_classes: Vec<&String> = bench
        .eval
        .iter()
        .flat_map(|c| &c.positive_classes)
        .collect();
    let disjoint = !doc.cv_concepts.is_empty()
        && doc
            .cv_concepts
            .iter()
            .all(|c| !doc.eval_concepts.contains(c))
        && bench
            .cv
            .iter()
            .flat_map(|c| &c.positive_classes)
            .all(|c| !eval_classes.contains(&c));
    let curves_ok = doc.curves.len() == alphas.len()
        && doc
            .curves
            .iter()
            .zip(&alphas)
            .all(|(c, a)| c.alpha == *a && c.f1.len() == rounds + 1)
        && doc
            .curves
            .iter()
            .all(|c| c.f1.iter().all(|v| (0.0..=1.0).contains(v)));
    let finals: Vec<String> = doc
        .curves
        .iter()
        .map(|c| format!("{}: {:.3}", c.alpha, c.f1[rounds]))
        .collect();
    outcome(
        curves_ok && disjoint,
        format!(
            "{} curves of {} points; cv concepts {:?} disjoint from eval {:?}: {disjoint}; final F1 {}",
            doc.curves.len(),
            rounds + 1,
            doc.cv_concepts,
            doc.eval_concepts,
            finals.join(", ")
        ),
    )
}
