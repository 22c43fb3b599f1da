//! Batch runs behind the command-line tool. Every run writes into an output
//! directory laid out as `reports/` (JSON lines and summaries), `images/`
//! (grid CSV files) and `manifest.json`. Wall-clock timings go to
//! `timings.json` so the reports themselves are reproducible byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::attack::{wpgd_attack, AttackConfig};
use crate::certify::{
    best_of, certify_each_reference, linear_finetuned_radius, linear_vanilla_radius, witness_image, BaseMethod,
    Certificate, Reference, SearchConfig,
};
use crate::data::{grid_to_csv, read_grid_csv, Dataset};
use crate::error::{Error, Result};
use crate::grid::{apply_flow, GridImage, GridShape, PixelValues};
use crate::network::{accuracy, save_model, train_small, Network, TrainConfig};
use crate::transport::{delta_inverse, exact_w1, CouplingStrategy};

/// Output directory of one run.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["reports", "images"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn write_lines<T: Serialize>(&mut self, rel: &str, records: &[T]) -> Result<()> {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("records serialize"));
            text.push('\n');
        }
        self.write(rel, &text)
    }

    fn write_json(&mut self, rel: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        self.write(rel, &text)
    }

    /// Writes the manifest and, separately, the timings.
    fn finish(mut self, command: &str, params: Value, timings: Value) -> Result<()> {
        let mut files = self.files.clone();
        files.sort();
        let manifest = json!({
            "command": command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "params": params,
            "files": files,
        });
        self.write_json("manifest.json", &manifest)?;
        let path = self.root.join("timings.json");
        let text = serde_json::to_string_pretty(&timings).expect("json serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Reference from a command-line description:
/// `uniform`, `random`, `point`, `point:i,j`, `data:<index>` or `file:<path>`.
/// `random` and `point` without coordinates draw from `seed`.
pub fn parse_reference(desc: &str, shape: GridShape, data: Option<&Dataset>, seed: u64) -> Result<Reference> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bad = |msg: String| Error::InvalidArgument(format!("reference {desc:?}: {msg}"));
    match desc.split_once(':') {
        None if desc == "uniform" => Ok(Reference::uniform(shape)),
        None if desc == "random" => Ok(Reference::random_uniform(shape, &mut rng, format!("random:{seed}"))),
        None if desc == "point" => {
            let (i, j) = (rng.gen_range(0..shape.rows()), rng.gen_range(0..shape.cols()));
            Reference::point(shape, i, j)
        }
        Some(("point", rest)) => {
            let (i, j) = rest
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                .ok_or_else(|| bad("expected point:i,j".into()))?;
            if i >= shape.rows() || j >= shape.cols() {
                return Err(bad(format!("pixel outside {shape}")));
            }
            Reference::point(shape, i, j)
        }
        Some(("data", rest)) => {
            let k: usize = rest.parse().map_err(|_| bad("expected data:<index>".into()))?;
            let data = data.ok_or_else(|| bad("no dataset loaded".into()))?;
            let img = data
                .images
                .get(k)
                .ok_or_else(|| bad(format!("index beyond {} images", data.len())))?;
            Ok(Reference::new(format!("data:{k}"), img.clone()))
        }
        Some(("file", path)) => {
            let img = read_grid_csv(Path::new(path))?;
            shape.ensure_same(&img.shape(), "reference file")?;
            Ok(Reference::new(format!("file:{path}"), img))
        }
        _ => Err(bad("expected uniform, random, point[:i,j], data:<index> or file:<path>".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefStyle {
    Uniform,
    Random,
    Point,
    Data,
}

impl FromStr for RefStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(RefStyle::Uniform),
            "random" => Ok(RefStyle::Random),
            "point" => Ok(RefStyle::Point),
            "data" => Ok(RefStyle::Data),
            other => Err(Error::InvalidArgument(format!(
                "unknown reference style {other:?} (expected uniform, random, point or data)"
            ))),
        }
    }
}

/// `k` references cycling through `styles`, e.g. two each of random, point
/// and data for `k = 6`. Data references are drawn from `pool`.
pub fn sample_references(
    shape: GridShape,
    k: usize,
    styles: &[RefStyle],
    pool: Option<&Dataset>,
    seed: u64,
) -> Result<Vec<Reference>> {
    if styles.is_empty() || k == 0 {
        return Err(Error::InvalidArgument("need at least one reference and one style".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_style = k.div_ceil(styles.len());
    let mut out = Vec::with_capacity(k);
    for (n, style) in styles.iter().flat_map(|s| std::iter::repeat(*s).take(per_style)).take(k).enumerate() {
        let r = match style {
            RefStyle::Uniform => Reference::uniform(shape),
            RefStyle::Random => Reference::random_uniform(shape, &mut rng, format!("random:{n}")),
            RefStyle::Point => {
                let (i, j) = (rng.gen_range(0..shape.rows()), rng.gen_range(0..shape.cols()));
                Reference::point(shape, i, j)?
            }
            RefStyle::Data => {
                let pool = pool
                    .filter(|p| !p.is_empty())
                    .ok_or_else(|| Error::InvalidArgument("data references need a reference pool".into()))?;
                let idx = rng.gen_range(0..pool.len());
                Reference::new(format!("data:{idx}"), pool.images[idx].clone())
            }
        };
        out.push(r);
    }
    Ok(out)
}

fn check_shape(net: &Network, data: &Dataset) -> Result<()> {
    if let Some(s) = data.shape() {
        net.shape().ensure_same(&s, "dataset vs model")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub images: usize,
    pub train_accuracy: f64,
}

pub fn cmd_train(data: &Dataset, cfg: &TrainConfig, model_path: &Path) -> Result<(Network, TrainSummary)> {
    let net = train_small(&data.images, &data.labels, cfg)?;
    save_model(&net, model_path)?;
    let summary = TrainSummary {
        images: data.len(),
        train_accuracy: accuracy(&net, &data.images, &data.labels)?,
    };
    Ok((net, summary))
}

#[derive(Debug, Clone, Serialize)]
struct FlowRecord {
    index: usize,
    label: usize,
    reference: String,
    strategy: String,
    flow_l1: f64,
    roundtrip_error: f64,
    flow: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowsSummary {
    pub records: usize,
    pub max_roundtrip_error: f64,
    pub mean_flow_l1: f64,
}

/// Maps every image to a flow from `reference` and writes `reports/flows.jsonl`.
pub fn cmd_flows(
    data: &Dataset,
    reference: &Reference,
    strategy: CouplingStrategy,
    first_index: usize,
    out: &Path,
) -> Result<FlowsSummary> {
    if let Some(s) = data.shape() {
        reference.image.shape().ensure_same(&s, "dataset vs reference")?;
    }
    let start = Instant::now();
    let records: Vec<FlowRecord> = data
        .images
        .par_iter()
        .zip(data.labels.par_iter())
        .enumerate()
        .map(|(k, (img, &label))| {
            let delta = delta_inverse(&reference.image, img, strategy)?;
            let back = apply_flow(&reference.image, &delta)?;
            let err = back
                .values()
                .iter()
                .zip(img.mass())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(FlowRecord {
                index: first_index + k,
                label,
                reference: reference.id.clone(),
                strategy: strategy.to_string(),
                flow_l1: delta.l1(),
                roundtrip_error: err,
                flow: delta.into_vec(),
            })
        })
        .collect::<Result<_>>()?;
    let summary = FlowsSummary {
        records: records.len(),
        max_roundtrip_error: records.iter().map(|r| r.roundtrip_error).fold(0.0, f64::max),
        mean_flow_l1: mean(&records.iter().map(|r| r.flow_l1).collect::<Vec<_>>()),
    };
    let mut dir = RunDir::create(out)?;
    dir.write_lines("reports/flows.jsonl", &records)?;
    dir.write_json("reports/summary.json", &json!(summary))?;
    dir.finish(
        "flows",
        json!({"reference": reference.id, "strategy": strategy.to_string(), "source": data.source}),
        json!({"total_seconds": secs(start)}),
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertifyMethod {
    Vanilla,
    FineTuned,
    MultiRef,
}

impl FromStr for CertifyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(CertifyMethod::Vanilla),
            "finetuned" => Ok(CertifyMethod::FineTuned),
            "multiref" => Ok(CertifyMethod::MultiRef),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected vanilla, finetuned or multiref)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyParams {
    pub method: CertifyMethod,
    /// Per-reference certifier for multi-reference runs.
    pub base: BaseMethod,
    pub strategy: CouplingStrategy,
    pub search: SearchConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CertRecord {
    pub index: usize,
    pub true_label: usize,
    pub label: usize,
    pub method: String,
    pub reference: String,
    pub strategy: String,
    pub radius: f64,
    pub witness: Option<String>,
    pub lp_tol: f64,
    pub search_tol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RadiusStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub histogram_edges: Vec<f64>,
    pub histogram_counts: Vec<usize>,
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn radius_stats(values: &[f64]) -> RadiusStats {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let m = mean(&sorted);
    let median = match n {
        0 => 0.0,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    };
    let std = if n == 0 {
        0.0
    } else {
        (sorted.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let (lo, hi) = (sorted.first().copied().unwrap_or(0.0), sorted.last().copied().unwrap_or(0.0));
    const BINS: usize = 10;
    let width = if hi > lo { (hi - lo) / BINS as f64 } else { 1.0 };
    let edges = (0..=BINS).map(|b| lo + b as f64 * width).collect();
    let mut counts = vec![0; BINS];
    for v in &sorted {
        let b = (((v - lo) / width) as usize).min(BINS - 1);
        counts[b] += 1;
    }
    RadiusStats {
        count: n,
        mean: m,
        median,
        std,
        min: lo,
        max: hi,
        histogram_edges: edges,
        histogram_counts: counts,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifySummary {
    pub records: Vec<CertRecord>,
    pub by_method: Vec<(String, RadiusStats)>,
}

fn cert_record(
    index: usize,
    true_label: usize,
    cert: &Certificate,
    witness: Option<String>,
    params: &CertifyParams,
) -> CertRecord {
    CertRecord {
        index,
        true_label,
        label: cert.label,
        method: cert.method.to_string(),
        reference: cert.reference_id.clone(),
        strategy: cert.flow_strategy.to_string(),
        radius: cert.radius,
        witness,
        lp_tol: params.search.lp.tol,
        search_tol: params.search.tol,
        seed: params.seed,
    }
}

/// Certifies every image against every reference (or their maximum for
/// `multiref`). Linear models additionally get the exact closed-form and LP
/// radii, with witness images saved under `images/`.
pub fn cmd_certify(
    net: &Network,
    data: &Dataset,
    first_index: usize,
    references: &[Reference],
    params: &CertifyParams,
    out: &Path,
) -> Result<CertifySummary> {
    check_shape(net, data)?;
    if references.is_empty() {
        return Err(Error::InvalidArgument("at least one reference is required".into()));
    }
    let start = Instant::now();
    struct Item {
        records: Vec<CertRecord>,
        witnesses: Vec<(String, GridImage)>,
        seconds: f64,
    }
    let items: Vec<Item> = data
        .images
        .par_iter()
        .zip(data.labels.par_iter())
        .enumerate()
        .map(|(k, (mu, &true_label))| {
            let t0 = Instant::now();
            let index = first_index + k;
            let base = match params.method {
                CertifyMethod::Vanilla => BaseMethod::Vanilla,
                CertifyMethod::FineTuned => BaseMethod::FineTuned,
                CertifyMethod::MultiRef => params.base,
            };
            let certs = certify_each_reference(net, mu, references, base, params.strategy, &params.search)?;
            let mut records = Vec::new();
            let mut witnesses = Vec::new();
            if params.method == CertifyMethod::MultiRef {
                records.push(cert_record(index, true_label, &best_of(certs.clone()), None, params));
            } else {
                records.extend(certs.iter().map(|c| cert_record(index, true_label, c, None, params)));
            }
            if net.is_linear() {
                let label = certs[0].label;
                for (r, reference) in references.iter().enumerate() {
                    for cert in [
                        linear_vanilla_radius(net, reference, mu, label, params.strategy, &params.search)?,
                        linear_finetuned_radius(net, reference, mu, label, params.strategy, &params.search)?,
                    ] {
                        let path = match &cert.witness {
                            Some(w) => {
                                let rel = format!("images/witness_{index:05}_{}_ref{r}.csv", cert.method);
                                witnesses.push((rel.clone(), witness_image(&reference.image, w)?));
                                Some(rel)
                            }
                            None => None,
                        };
                        records.push(cert_record(index, true_label, &cert, path, params));
                    }
                }
            }
            Ok(Item {
                records,
                witnesses,
                seconds: secs(t0),
            })
        })
        .collect::<Result<_>>()?;

    let mut dir = RunDir::create(out)?;
    let mut records = Vec::new();
    let mut per_item = Vec::new();
    for item in items {
        for (rel, img) in &item.witnesses {
            dir.write(rel, &grid_to_csv(img))?;
        }
        if let Some(r) = item.records.first() {
            per_item.push(json!({"index": r.index, "seconds": item.seconds}));
        }
        records.extend(item.records);
    }
    let mut methods: Vec<String> = Vec::new();
    for r in &records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let by_method: Vec<(String, RadiusStats)> = methods
        .into_iter()
        .map(|m| {
            let radii: Vec<f64> = records.iter().filter(|r| r.method == m).map(|r| r.radius).collect();
            (m, radius_stats(&radii))
        })
        .collect();
    dir.write_lines("reports/certificates.jsonl", &records)?;
    dir.write_json("reports/summary.json", &json!({"by_method": by_method}))?;
    dir.finish(
        "certify",
        json!({
            "method": format!("{:?}", params.method),
            "base": format!("{:?}", params.base),
            "strategy": params.strategy.to_string(),
            "references": references.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
            "lp_tol": params.search.lp.tol,
            "search_tol": params.search.tol,
            "search_start": params.search.start,
            "seed": params.seed,
            "source": data.source,
            "first_index": first_index,
        }),
        json!({"total_seconds": secs(start), "items": per_item}),
    )?;
    Ok(CertifySummary { records, by_method })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AttackRecord {
    pub index: usize,
    pub label: usize,
    pub success: bool,
    pub w1_bound: f64,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub adversarial: Option<String>,
    pub eps: f64,
    pub alpha: f64,
    pub max_iters: usize,
    pub reference: String,
    pub strategy: String,
    pub lp_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackSummary {
    pub records: Vec<AttackRecord>,
    pub success_rate: f64,
}

/// Attacks every image (against its true label) and writes `reports/attacks.jsonl`.
pub fn cmd_attack(
    net: &Network,
    data: &Dataset,
    first_index: usize,
    reference: &Reference,
    cfg: &AttackConfig,
    out: &Path,
) -> Result<AttackSummary> {
    check_shape(net, data)?;
    let start = Instant::now();
    let results: Vec<_> = data
        .images
        .par_iter()
        .zip(data.labels.par_iter())
        .map(|(mu, &label)| wpgd_attack(net, &reference.image, mu, label, cfg))
        .collect::<Result<_>>()?;
    let mut dir = RunDir::create(out)?;
    let mut records = Vec::with_capacity(results.len());
    for (k, res) in results.iter().enumerate() {
        let index = first_index + k;
        let adversarial = match &res.adversarial {
            Some(img) => {
                let rel = format!("images/adv_{index:05}.csv");
                dir.write(&rel, &grid_to_csv(img))?;
                Some(rel)
            }
            None => None,
        };
        records.push(AttackRecord {
            index,
            label: data.labels[k],
            success: res.success,
            w1_bound: res.w1_bound,
            iterations: res.iterations,
            final_loss: res.loss_trace.last().copied(),
            adversarial,
            eps: cfg.eps,
            alpha: cfg.step_size,
            max_iters: cfg.max_iters,
            reference: reference.id.clone(),
            strategy: cfg.strategy.to_string(),
            lp_tol: cfg.lp.tol,
        });
    }
    let success_rate = if records.is_empty() {
        0.0
    } else {
        records.iter().filter(|r| r.success).count() as f64 / records.len() as f64
    };
    dir.write_lines("reports/attacks.jsonl", &records)?;
    dir.write_json(
        "reports/summary.json",
        &json!({"images": records.len(), "success_rate": success_rate}),
    )?;
    dir.finish(
        "attack",
        json!({
            "eps": cfg.eps,
            "alpha": cfg.step_size,
            "iters": cfg.max_iters,
            "strategy": cfg.strategy.to_string(),
            "reference": reference.id,
            "lp_tol": cfg.lp.tol,
            "source": data.source,
            "first_index": first_index,
        }),
        json!({"total_seconds": secs(start)}),
    )?;
    Ok(AttackSummary { records, success_rate })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PointRow {
    pub index: usize,
    pub label: usize,
    pub radii: Vec<f64>,
    pub max: f64,
    /// Reference achieving the maximum (first on ties).
    pub best: usize,
    /// Whether the best reference beats every other one by more than the search resolution.
    pub strict: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefsSummary {
    pub references: Vec<String>,
    pub per_reference: Vec<RadiusStats>,
    pub max_curve: RadiusStats,
    pub points: Vec<PointRow>,
    /// Radii of each reference sorted ascending, then the sorted per-point maxima.
    pub sorted_curves: Vec<Vec<f64>>,
    pub sorted_max_curve: Vec<f64>,
    pub best_counts: Vec<usize>,
    pub strict_best_counts: Vec<usize>,
    pub max_dominates: bool,
}

/// Certifies every image against every reference and summarizes the
/// per-reference radius distributions and the per-point maximum.
pub fn cmd_refs(
    net: &Network,
    data: &Dataset,
    first_index: usize,
    references: &[Reference],
    base: BaseMethod,
    strategy: CouplingStrategy,
    search: &SearchConfig,
    out: &Path,
) -> Result<RefsSummary> {
    check_shape(net, data)?;
    if references.is_empty() {
        return Err(Error::InvalidArgument("at least one reference is required".into()));
    }
    let start = Instant::now();
    let all: Vec<Vec<Certificate>> = data
        .images
        .par_iter()
        .map(|mu| certify_each_reference(net, mu, references, base, strategy, search))
        .collect::<Result<_>>()?;
    let k = references.len();
    let mut points = Vec::with_capacity(all.len());
    let mut records = Vec::with_capacity(all.len() * k);
    for (n, certs) in all.iter().enumerate() {
        let radii: Vec<f64> = certs.iter().map(|c| c.radius).collect();
        let mut best = 0;
        for (r, &v) in radii.iter().enumerate() {
            if v > radii[best] {
                best = r;
            }
        }
        let strict = radii
            .iter()
            .enumerate()
            .all(|(r, &v)| r == best || radii[best] - v > search.tol);
        let index = first_index + n;
        for c in certs {
            records.push(json!({
                "index": index,
                "true_label": data.labels[n],
                "label": c.label,
                "method": c.method.to_string(),
                "reference": c.reference_id,
                "strategy": c.flow_strategy.to_string(),
                "radius": c.radius,
                "lp_tol": search.lp.tol,
                "search_tol": search.tol,
            }));
        }
        points.push(PointRow {
            index,
            label: certs[0].label,
            max: radii[best],
            radii,
            best,
            strict: strict && k > 1,
        });
    }
    let column = |r: usize| points.iter().map(|p| p.radii[r]).collect::<Vec<_>>();
    let per_reference: Vec<RadiusStats> = (0..k).map(|r| radius_stats(&column(r))).collect();
    let maxima: Vec<f64> = points.iter().map(|p| p.max).collect();
    let sorted = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v
    };
    let sorted_curves: Vec<Vec<f64>> = (0..k).map(|r| sorted(column(r))).collect();
    let sorted_max_curve = sorted(maxima.clone());
    let max_dominates = points.iter().all(|p| p.radii.iter().all(|&v| p.max >= v))
        && sorted_curves
            .iter()
            .all(|c| c.iter().zip(&sorted_max_curve).all(|(a, b)| b >= a));
    let mut best_counts = vec![0; k];
    let mut strict_best_counts = vec![0; k];
    for p in &points {
        best_counts[p.best] += 1;
        if p.strict {
            strict_best_counts[p.best] += 1;
        }
    }
    let summary = RefsSummary {
        references: references.iter().map(|r| r.id.clone()).collect(),
        per_reference,
        max_curve: radius_stats(&maxima),
        points,
        sorted_curves,
        sorted_max_curve,
        best_counts,
        strict_best_counts,
        max_dominates,
    };
    let mut dir = RunDir::create(out)?;
    dir.write_lines("reports/refs.jsonl", &records)?;
    dir.write_lines("reports/refs_points.jsonl", &summary.points)?;
    dir.write_json(
        "reports/summary.json",
        &json!({
            "references": summary.references,
            "per_reference": summary.per_reference,
            "max_curve": summary.max_curve,
            "sorted_curves": summary.sorted_curves,
            "sorted_max_curve": summary.sorted_max_curve,
            "best_counts": summary.best_counts,
            "strict_best_counts": summary.strict_best_counts,
            "max_dominates": summary.max_dominates,
        }),
    )?;
    dir.finish(
        "refs",
        json!({
            "base": format!("{base:?}"),
            "strategy": strategy.to_string(),
            "references": summary.references,
            "lp_tol": search.lp.tol,
            "search_tol": search.tol,
            "source": data.source,
            "first_index": first_index,
        }),
        json!({"total_seconds": secs(start)}),
    )?;
    Ok(summary)
}

/// Exact W1 distance between two grid images.
pub fn cmd_w1(a: &GridImage, b: &GridImage) -> Result<f64> {
    Ok(exact_w1(a, b)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;
    use ndarray::{array, Array2};

    fn tiny_data(s: GridShape, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let images: Vec<GridImage> = (0..n).map(|_| GridImage::random_uniform(s, &mut rng)).collect();
        let labels = (0..n).map(|k| k % 2).collect();
        Dataset::new(images, labels, "tiny").unwrap()
    }

    #[test]
    fn references_parse() {
        let s = GridShape::new(3, 3).unwrap();
        let data = tiny_data(s, 3, 0);
        assert_eq!(parse_reference("uniform", s, None, 0).unwrap().id, "uniform");
        assert_eq!(parse_reference("point:1,2", s, None, 0).unwrap().image, GridImage::point(s, 1, 2).unwrap());
        assert_eq!(parse_reference("data:2", s, Some(&data), 0).unwrap().image, data.images[2]);
        assert!(parse_reference("data:9", s, Some(&data), 0).is_err());
        assert!(parse_reference("point:3,0", s, None, 0).is_err());
        assert!(parse_reference("gauss", s, None, 0).is_err());
        assert_eq!(parse_reference("random", s, None, 4).unwrap(), parse_reference("random", s, None, 4).unwrap());
    }

    #[test]
    fn six_reference_mix() {
        let s = GridShape::new(3, 3).unwrap();
        let pool = tiny_data(s, 5, 1);
        let refs = sample_references(s, 6, &[RefStyle::Random, RefStyle::Point, RefStyle::Data], Some(&pool), 7)
            .unwrap();
        let ids: Vec<&str> = refs.iter().map(|r| r.id.split(':').next().unwrap()).collect();
        assert_eq!(ids, ["random", "random", "point", "point", "data", "data"]);
    }

    #[test]
    fn flows_round_trip_and_empty() {
        let s = GridShape::new(3, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_data(s, 4, 2);
        let sum = cmd_flows(&data, &Reference::uniform(s), CouplingStrategy::ExactOT, 0, dir.path()).unwrap();
        assert_eq!(sum.records, 4);
        assert!(sum.max_roundtrip_error <= 1e-9);
        let empty = Dataset::new(Vec::new(), Vec::new(), "none").unwrap();
        let sum = cmd_flows(&empty, &Reference::uniform(s), CouplingStrategy::ExactOT, 0, dir.path()).unwrap();
        assert_eq!(sum.records, 0);
        let other = Reference::uniform(GridShape::new(2, 2).unwrap());
        assert!(cmd_flows(&data, &other, CouplingStrategy::ExactOT, 0, dir.path()).is_err());
    }

    #[test]
    fn certify_reports_are_reproducible() {
        let s = GridShape::new(2, 2).unwrap();
        let w = Array2::from_shape_vec((2, 4), vec![1.0, -0.5, 0.3, 0.0, -0.2, 0.4, 0.1, 0.6]).unwrap();
        let net = Network::new(s, vec![Layer::new(w, array![0.1, 0.0]).unwrap()]).unwrap();
        let data = tiny_data(s, 3, 3);
        let params = CertifyParams {
            method: CertifyMethod::FineTuned,
            base: BaseMethod::Vanilla,
            strategy: CouplingStrategy::NorthWestCorner,
            search: SearchConfig::default(),
            seed: 0,
        };
        let refs = [Reference::uniform(s)];
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = cmd_certify(&net, &data, 0, &refs, &params, a.path()).unwrap();
        cmd_certify(&net, &data, 0, &refs, &params, b.path()).unwrap();
        for f in ["reports/certificates.jsonl", "reports/summary.json", "manifest.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        // finetuned + linear-vanilla + linear-finetuned per image
        assert_eq!(sa.records.len(), 9);
        for chunk in sa.records.chunks(3) {
            assert!((chunk[0].radius - chunk[2].radius).abs() <= 1e-4);
        }
    }

    #[test]
    fn zero_budget_attacks_fail_on_correct_images() {
        let s = GridShape::new(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::random(s, &[4], 2, &mut rng).unwrap();
        let mut data = tiny_data(s, 6, 4);
        data.labels = data.images.iter().map(|m| net.classify_image(m).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let sum = cmd_attack(&net, &data, 0, &Reference::uniform(s), &AttackConfig::new(0.0), dir.path()).unwrap();
        assert_eq!(sum.success_rate, 0.0);
    }

    #[test]
    fn single_reference_refs_match_certify() {
        let s = GridShape::new(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Network::random(s, &[5], 3, &mut rng).unwrap();
        let data = tiny_data(s, 3, 5);
        let refs = [Reference::uniform(s)];
        let search = SearchConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let refs_sum =
            cmd_refs(&net, &data, 0, &refs, BaseMethod::Vanilla, CouplingStrategy::NorthWestCorner, &search, dir.path())
                .unwrap();
        let params = CertifyParams {
            method: CertifyMethod::Vanilla,
            base: BaseMethod::Vanilla,
            strategy: CouplingStrategy::NorthWestCorner,
            search,
            seed: 0,
        };
        let cert = cmd_certify(&net, &data, 0, &refs, &params, dir.path()).unwrap();
        let a: Vec<f64> = refs_sum.points.iter().map(|p| p.max).collect();
        let b: Vec<f64> = cert.records.iter().map(|r| r.radius).collect();
        assert_eq!(a, b);
        assert!(refs_sum.max_dominates);
    }

    #[test]
    fn w1_of_corners() {
        let s = GridShape::new(2, 2).unwrap();
        let a = GridImage::point(s, 0, 0).unwrap();
        let b = GridImage::point(s, 1, 1).unwrap();
        assert!((cmd_w1(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        assert!(cmd_w1(&a, &a).unwrap().abs() < 1e-12);
    }
}
