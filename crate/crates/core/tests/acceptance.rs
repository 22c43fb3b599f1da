//! Acceptance run: one PASS/FAIL line per criterion, then a single verdict.
//!
//! ```text
//! cargo test --release --test acceptance -- --nocapture
//! ```

use std::path::Path;
use std::time::{Duration, Instant};

use flowcert::attack::{wpgd_attack, AttackConfig};
use flowcert::certify::{
    certify_finetuned, certify_vanilla, linear_finetuned_radius, linear_vanilla_radius, BaseMethod, Reference,
    SearchConfig,
};
use flowcert::commands::{cmd_refs, sample_references, RefStyle};
use flowcert::data::{idx_labels_path, ingest_idx, Dataset, Resize};
use flowcert::grid::PixelValues;
use flowcert::linprog::{solve_audit, LpStatus};
use flowcert::network::{lift_network, margin_loss_and_grad, train_small, Network, TrainConfig};
use flowcert::{
    apply_flow, delta_inverse, exact_w1, is_feasible, solve_lp, CouplingStrategy, Flow, FlowMatrix, GridImage,
    GridShape, LinearProgram,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(start: Instant, budget: Duration) -> bool {
    start.elapsed() <= budget
}

fn random_image<R: Rng>(shape: GridShape, rng: &mut R) -> GridImage {
    // a quarter of the draws leave some pixels empty
    let sparse = rng.gen_bool(0.25);
    let mut v: Vec<f64> = (0..shape.pixels())
        .map(|_| if sparse && rng.gen_bool(0.4) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        let k = rng.gen_range(0..v.len());
        v[k] = 1.0;
    }
    let total: f64 = v.iter().sum();
    GridImage::new(shape, v.into_iter().map(|x| x / total).collect()).unwrap()
}

fn random_shape<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> GridShape {
    GridShape::new(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mnist() -> (Dataset, Dataset) {
    let images = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset-images.idx3-ubyte");
    let data = ingest_idx(&images, &idx_labels_path(&images), Resize::Mnist8).unwrap();
    (data.slice(0, 1000), data.slice(1000, 200))
}

// ---------------------------------------------------------------------------
// Independent transport oracle: successive shortest paths on the bipartite
// coupling network with Manhattan costs.

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

fn coupling_w1(shape: GridShape, mu: &[f64], nu: &[f64]) -> f64 {
    let p = mu.len();
    let (s, t) = (2 * p, 2 * p + 1);
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj = vec![Vec::new(); 2 * p + 2];
    let add = |edges: &mut Vec<Edge>, adj: &mut Vec<Vec<usize>>, a: usize, b: usize, cap: f64, cost: f64| {
        adj[a].push(edges.len());
        edges.push(Edge { to: b, cap, cost });
        adj[b].push(edges.len());
        edges.push(Edge { to: a, cap: 0.0, cost: -cost });
    };
    for i in 0..p {
        add(&mut edges, &mut adj, s, i, mu[i], 0.0);
        add(&mut edges, &mut adj, p + i, t, nu[i], 0.0);
        let (ri, ci) = (i / shape.cols(), i % shape.cols());
        for j in 0..p {
            let (rj, cj) = (j / shape.cols(), j % shape.cols());
            let d = (ri.abs_diff(rj) + ci.abs_diff(cj)) as f64;
            add(&mut edges, &mut adj, i, p + j, 2.0, d);
        }
    }
    let n = 2 * p + 2;
    let mut cost = 0.0;
    for _ in 0..10 * p * p + 10 {
        // Bellman-Ford, residual costs may be negative
        let mut dist = vec![f64::INFINITY; n];
        let mut via = vec![usize::MAX; n];
        dist[s] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &adj[u] {
                    let ed = &edges[e];
                    if ed.cap > 1e-15 && dist[u] + ed.cost < dist[ed.to] - 1e-12 {
                        dist[ed.to] = dist[u] + ed.cost;
                        via[ed.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[t].is_infinite() {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = t;
        while v != s {
            let e = via[v];
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = t;
        while v != s {
            let e = via[v];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        cost += push * dist[t];
    }
    cost
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cols = FlowMatrix::new(GridShape::new(28, 28).unwrap()).ncols();
    let ok = cols == 1512 && within(start, Duration::from_secs(1));
    outcome(ok, format!("28x28 flow matrix has {cols} columns (expected 1512) in {:?}", start.elapsed()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let s = random_shape(&mut rng, 2, 4);
        let (a, b) = (random_image(s, &mut rng), random_image(s, &mut rng));
        let (w, _) = exact_w1(&a, &b).unwrap();
        worst = worst.max((w - coupling_w1(s, a.mass(), b.mass())).abs());
    }
    let ok = worst <= 1e-7 && within(start, Duration::from_secs(60));
    outcome(ok, format!("200 pairs on 2x2..4x4, max |W1 - coupling oracle| = {worst:.2e} (tol 1e-7) in {:?}", start.elapsed()))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut count = 0;
    for strategy in CouplingStrategy::ALL {
        for _ in 0..200 {
            let s = random_shape(&mut rng, 1, 8);
            let (r, mu) = (random_image(s, &mut rng), random_image(s, &mut rng));
            let d = delta_inverse(&r, &mu, strategy).unwrap();
            let back = apply_flow(&r, &d).unwrap();
            worst = worst.max(max_diff(back.values(), mu.mass()));
            count += 1;
        }
    }
    let ok = worst <= 1e-9 && within(start, Duration::from_secs(60));
    outcome(ok, format!("{count} (R, mu, strategy) cases up to 8x8, max round-trip error {worst:.2e} (tol 1e-9) in {:?}", start.elapsed()))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut agree = 0;
    for k in 0..100 {
        let s = random_shape(&mut rng, 2, 6);
        let net = Network::random(s, &[rng.gen_range(4..16), rng.gen_range(4..16)], rng.gen_range(2..6), &mut rng).unwrap();
        let (r, mu) = (random_image(s, &mut rng), random_image(s, &mut rng));
        let lifted = lift_network(&net, &r, &FlowMatrix::new(s)).unwrap();
        let d = delta_inverse(&r, &mu, CouplingStrategy::ALL[k % 3]).unwrap();
        worst = worst.max(max_diff(&net.forward_image(&mu).unwrap(), &lifted.forward(&d).unwrap()));
        agree += usize::from(net.classify_image(&mu).unwrap() == lifted.classify(&d).unwrap());
    }
    outcome(
        worst <= 1e-9 && agree == 100,
        format!("100 random 3-layer nets, max logit difference {worst:.2e} (tol 1e-9), argmax agreement {agree}/100"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let s = GridShape::new(3, 3).unwrap();
    let cfg = SearchConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut dv, mut df, mut order_ok) = (0.0f64, 0.0f64, true);
    for k in 0..50 {
        let net = Network::random(s, &[], rng.gen_range(2..5), &mut rng).unwrap();
        let r = Reference::random_uniform(s, &mut rng, "r");
        let mu = random_image(s, &mut rng);
        let strategy = CouplingStrategy::ALL[k % 3];
        let label = net.classify_image(&mu).unwrap();
        let v = certify_vanilla(&net, &r, &mu, strategy, &cfg).unwrap();
        let f = certify_finetuned(&net, &r, &mu, strategy, &cfg).unwrap();
        let lv = linear_vanilla_radius(&net, &r, &mu, label, strategy, &cfg).unwrap();
        let lf = linear_finetuned_radius(&net, &r, &mu, label, strategy, &cfg).unwrap();
        dv = dv.max((v.radius - lv.radius).abs());
        df = df.max((f.radius - lf.radius).abs());
        order_ok &= lf.radius >= lv.radius - 1e-9;
    }
    let ok = dv <= 1e-4 && df <= 1e-4 && order_ok && within(start, Duration::from_secs(300));
    outcome(
        ok,
        format!(
            "50 linear 3x3 classifiers: |vanilla - closed form| <= {dv:.2e}, |finetuned - LP| <= {df:.2e} (tol 1e-4), \
             feasible radius >= ball radius: {order_ok}, {:?}",
            start.elapsed()
        ),
    )
}

/// Certified MNIST instances shared by criteria 6 and 7.
struct Certified {
    mu: GridImage,
    label: usize,
    radius: f64,
}

fn certified_mnist(net: &Network, test: &Dataset, reference: &Reference) -> Vec<Certified> {
    let cfg = SearchConfig::default();
    let mut out = Vec::new();
    for (mu, &y) in test.images.iter().zip(&test.labels) {
        if out.len() == 20 {
            break;
        }
        if net.classify_image(mu).unwrap() != y {
            continue;
        }
        let c = certify_finetuned(net, reference, mu, CouplingStrategy::NorthWestCorner, &cfg).unwrap();
        if c.radius > 0.0 {
            out.push(Certified {
                mu: mu.clone(),
                label: y,
                radius: c.radius,
            });
        }
    }
    out
}

fn criterion_6(net: &Network, reference: &Reference, certified: &[Certified], start: Instant) -> Outcome {
    let s = net.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut flips, mut samples, mut w1_checked, mut w1_over) = (0, 0, 0, 0);
    for c in certified {
        let center = delta_inverse(&reference.image, &c.mu, CouplingStrategy::NorthWestCorner).unwrap();
        for k in 0..1000 {
            // sparse moves for half the samples, dense noise for the rest
            let mut dir = vec![0.0f64; s.flow_dim()];
            if k % 2 == 0 {
                for _ in 0..rng.gen_range(1..=4) {
                    dir[rng.gen_range(0..s.flow_dim())] += rng.gen_range(-1.0..1.0);
                }
            } else {
                dir.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            }
            let norm: f64 = dir.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
            let dir = Flow::from_vec(s, dir).unwrap();
            let mut t = c.radius * rng.gen_range(0.5..=1.0) / norm;
            // shrink toward the (feasible) center until the image is valid
            let mut delta = center.axpy(t, &dir).unwrap();
            while !is_feasible(&reference.image, &delta, 1e-12).unwrap() {
                t *= 0.5;
                delta = center.axpy(t, &dir).unwrap();
            }
            let img = apply_flow(&reference.image, &delta).unwrap().into_image().unwrap();
            samples += 1;
            flips += usize::from(net.classify_image(&img).unwrap() != c.label);
            if k % 100 == 0 {
                w1_checked += 1;
                w1_over += usize::from(exact_w1(&c.mu, &img).unwrap().0 > c.radius + 1e-9);
            }
        }
    }
    let ok = certified.len() == 20 && flips == 0 && w1_over == 0 && within(start, Duration::from_secs(600));
    outcome(
        ok,
        format!(
            "{} certified images, {samples} perturbations within the radius, {flips} class changes, \
             {w1_over}/{w1_checked} spot-checked W1 distances over the radius, {:?}",
            certified.len(),
            start.elapsed()
        ),
    )
}

fn criterion_7(net: &Network, reference: &Reference, certified: &[Certified]) -> Outcome {
    let start = Instant::now();
    let cfg = SearchConfig::default();
    let mut below_success = 0;
    let mut below_runs = 0;
    for c in certified {
        for alpha_scale in [None, Some(0.1)] {
            let mut a = AttackConfig::new(0.99 * c.radius);
            if let Some(f) = alpha_scale {
                a.step_size = f * a.eps;
            }
            below_runs += 1;
            below_success += usize::from(wpgd_attack(net, &reference.image, &c.mu, c.label, &a).unwrap().success);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut linear_runs, mut linear_wins, mut skipped) = (0, 0, 0);
    for k in 0..120 {
        let s = random_shape(&mut rng, 2, 4);
        let net = Network::random(s, &[], rng.gen_range(2..6), &mut rng).unwrap();
        let r = Reference::random_uniform(s, &mut rng, "r");
        let mu = random_image(s, &mut rng);
        let label = net.classify_image(&mu).unwrap();
        let strategy = CouplingStrategy::ALL[k % 3];
        let lv = linear_vanilla_radius(&net, &r, &mu, label, strategy, &cfg).unwrap();
        let lf = linear_finetuned_radius(&net, &r, &mu, label, strategy, &cfg).unwrap();
        for eps in [0.99 * lv.radius, 0.99 * lf.radius] {
            let mut a = AttackConfig::new(eps);
            a.strategy = strategy;
            a.step_size = (0.1 * eps).max(1e-6);
            below_runs += 1;
            below_success += usize::from(wpgd_attack(&net, &r.image, &mu, label, &a).unwrap().success);
        }
        if lf.witness.is_none() {
            // the label wins on the whole simplex, no budget can succeed
            skipped += 1;
            continue;
        }
        let mut a = AttackConfig::new(2.0 * lf.radius);
        a.strategy = strategy;
        a.step_size = 0.1 * a.eps;
        linear_runs += 1;
        linear_wins += usize::from(wpgd_attack(&net, &r.image, &mu, label, &a).unwrap().success);
    }
    let rate = linear_wins as f64 / linear_runs.max(1) as f64;
    let ok = below_success == 0 && rate >= 0.95 && within(start, Duration::from_secs(600));
    outcome(
        ok,
        format!(
            "below certified radius: {below_success}/{below_runs} successes; 2x exact minimum on linear models: \
             {linear_wins}/{linear_runs} = {:.1}% (need 95%, {skipped} unattackable skipped), {:?}",
            100.0 * rate,
            start.elapsed()
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-6;
    let (mut kink_free, mut tried, mut worst) = (0, 0, 0.0f64);
    while kink_free < 150 && tried < 2000 {
        tried += 1;
        let s = random_shape(&mut rng, 2, 5);
        let net = Network::random(s, &[rng.gen_range(3..10), rng.gen_range(3..10)], rng.gen_range(2..5), &mut rng).unwrap();
        let mu = random_image(s, &mut rng);
        let label = rng.gen_range(0..net.class_count());
        // alternate between the pixel network and the lifted one
        let (x, grad, f): (Vec<f64>, Vec<f64>, Box<dyn Fn(&[f64]) -> f64>) = if tried % 2 == 0 {
            let x = mu.mass().to_vec();
            let (_, g) = net.margin_loss_and_grad(&x, label).unwrap();
            let net = net.clone();
            (x, g, Box::new(move |v: &[f64]| net.margin_loss_and_grad(v, label).unwrap().0))
        } else {
            let r = random_image(s, &mut rng);
            let lifted = lift_network(&net, &r, &FlowMatrix::new(s)).unwrap();
            let d = delta_inverse(&r, &mu, CouplingStrategy::NorthWestCorner).unwrap();
            let (_, g) = margin_loss_and_grad(&lifted, &d, label).unwrap();
            let x = d.as_slice().to_vec();
            (
                x,
                g.into_vec(),
                Box::new(move |v: &[f64]| margin_loss_and_grad(&lifted, &Flow::from_vec(s, v.to_vec()).unwrap(), label).unwrap().0),
            )
        };
        let f0 = f(&x);
        let mut fd = Vec::with_capacity(x.len());
        let mut smooth = true;
        for i in 0..x.len() {
            let mut p = x.clone();
            p[i] += h;
            let mut m = x.clone();
            m[i] -= h;
            let (fp, fm) = (f(&p), f(&m));
            // one-sided slopes disagree across a kink
            let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
            if (right - left).abs() > 1e-6 * (1.0 + right.abs().max(left.abs())) {
                smooth = false;
                break;
            }
            fd.push((fp - fm) / (2.0 * h));
        }
        if !smooth {
            continue;
        }
        kink_free += 1;
        let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max).max(1e-12);
        worst = worst.max(max_diff(&fd, &grad) / scale);
    }
    outcome(
        kink_free >= 100 && worst <= 1e-4,
        format!("{kink_free} kink-free samples ({tried} drawn), max relative gradient error {worst:.2e} (tol 1e-4)"),
    )
}

fn criterion_9(net: &Network, train: &Dataset, test: &Dataset) -> Outcome {
    let start = Instant::now();
    let refs = sample_references(net.shape(), 6, &[RefStyle::Random, RefStyle::Point, RefStyle::Data], Some(train), 0)
        .unwrap();
    let out = tempfile::tempdir().unwrap();
    let sum = cmd_refs(
        net,
        &test.slice(0, 100),
        1000,
        &refs,
        BaseMethod::Vanilla,
        CouplingStrategy::NorthWestCorner,
        &SearchConfig::default(),
        out.path(),
    )
    .unwrap();
    let stds: Vec<f64> = sum.per_reference.iter().map(|s| s.std).collect();
    let spread_ratio = stds.iter().cloned().fold(0.0, f64::max) / stds.iter().cloned().fold(f64::INFINITY, f64::min);
    let a = spread_ratio <= 2.0;
    let distinct_best = sum.strict_best_counts.iter().filter(|&&c| c > 0).count();
    let b = distinct_best >= 2;
    let c = sum.max_dominates;
    let gain = sum.max_curve.mean / sum.per_reference.iter().map(|s| s.mean).fold(0.0, f64::max);
    outcome(
        a && b && c && within(start, Duration::from_secs(1800)),
        format!(
            "(a) spread ratio {spread_ratio:.3} <= 2: {a}; (b) references strictly best on some image: {distinct_best} \
             (need 2), strict-best counts {:?}: {b}; (c) max curve dominates: {c}; max/best-single mean ratio {gain:.4}, {:?}",
            sum.strict_best_counts,
            start.elapsed()
        ),
    )
}

/// Smallest objective over all vertices of `{G x <= h}`, `None` if there are none.
fn vertex_minimum(n: usize, rows: &[(Vec<f64>, f64)], c: &[f64]) -> Option<f64> {
    let m = rows.len();
    let mut best: Option<f64> = None;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        // solve the n active rows by Gaussian elimination with partial pivoting
        let mut a: Vec<Vec<f64>> = pick.iter().map(|&r| {
            let mut row = rows[r].0.clone();
            row.push(rows[r].1);
            row
        }).collect();
        let mut singular = false;
        for col in 0..n {
            let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            if a[p][col].abs() < 1e-10 {
                singular = true;
                break;
            }
            a.swap(col, p);
            for i in 0..n {
                if i != col {
                    let f = a[i][col] / a[col][col];
                    for k in col..=n {
                        a[i][k] -= f * a[col][k];
                    }
                }
            }
        }
        if !singular {
            let x: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
            if rows.iter().all(|(g, h)| g.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= h + 1e-9) {
                let v: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < m - n + i {
                break;
            }
        }
        pick[i] += 1;
        for j in i + 1..n {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

fn criterion_10() -> Outcome {
    let audit = solve_audit();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut agree, mut total, mut infeasible) = (0, 0, 0);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=5);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut lp = LinearProgram::new(c.clone());
        let mut rows = Vec::new();
        for _ in 0..m {
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = rng.gen_range(-0.5..2.0);
            lp.add_le(g.iter().cloned().enumerate().collect(), h);
            rows.push((g, h));
        }
        for j in 0..n {
            let ub = rng.gen_range(0.5..3.0);
            lp.set_bounds(j, 0.0, ub);
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e.clone(), ub));
            e[j] = -1.0;
            rows.push((e, 0.0));
        }
        total += 1;
        let sol = solve_lp(&lp).unwrap();
        match (vertex_minimum(n, &rows, &c), sol.status) {
            (Some(v), LpStatus::Optimal) if (v - sol.objective_value).abs() <= 1e-7 => agree += 1,
            (None, LpStatus::Infeasible) => {
                infeasible += 1;
                agree += 1;
            }
            _ => {}
        }
    }
    let certs_ok = audit.optimal_solves > 0 && audit.max_duality_gap <= 1e-7 && audit.max_primal_residual <= 1e-7;
    outcome(
        certs_ok && agree == total,
        format!(
            "{} optimal solves so far, worst gap {:.2e}, worst primal residual {:.2e}, worst dual residual {:.2e} (tol 1e-7); \
             vertex enumeration agrees on {agree}/{total} LPs ({infeasible} infeasible)",
            audit.optimal_solves, audit.max_duality_gap, audit.max_primal_residual, audit.max_dual_residual
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |k: u32, o: Outcome| {
        println!("criterion {k:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());

    let (train, test) = mnist();
    let net = train_small(&train.images, &train.labels, &TrainConfig::default()).unwrap();
    let reference = Reference::uniform(net.shape());
    let start = Instant::now();
    let certified = certified_mnist(&net, &test, &reference);
    report(6, criterion_6(&net, &reference, &certified, start));
    report(7, criterion_7(&net, &reference, &certified));
    report(8, criterion_8());
    report(9, criterion_9(&net, &train, &test));
    report(10, criterion_10());

    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(k, _)| *k).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
