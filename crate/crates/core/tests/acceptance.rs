//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.
//!
//! MNIST-dependent criteria look for the IDX files in `$MNIST_DIR`, falling
//! back to `<workspace>/data/mnist`. Missing data is reported as FAIL.

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use council_core::augment::{
    adjust_contrast, apply_spec, invert, rotate, translate, AugmentationSpec, CONTRAST_FACTORS, PROPORTIONS, ROTATIONS, TRANSLATIONS,
};
use council_core::campaign::{
    build_training_set, load_registry, parse_entry, run_campaign, sample_config, CampaignPlan, ModelConfig, Registry, HIDDEN_LAYERS,
    POOL_PERCENTAGES, REGISTRY_FILE,
};
use council_core::glyph::{map_features, render_svg, teeth_lines};
use council_core::mnist::{load_dataset, DataPaths, GrayImage, LabeledSet};
use council_core::nn::{
    decode_weights, evaluate, load_weights, save_weights, train, Activation, Architecture, Network, Optimizer,
    OptimizerKind, BATCH_SIZES, MAX_EPOCHS,
};
use council_core::outliers::{build_forest, partition_by_label, IsolationForestParams, OutlierPartition};
use council_core::rashomon::{
    build_prediction_matrix, decode_matrix, encode_matrix, group_by_label, identify_rashomon_set, load_matrix, save_matrix,
    PredictionMatrix,
};

// Tolerances and pinned regression floors.
const FD_STEP: f64 = 1e-5;
const FD_MAX_REL_ERROR: f64 = 1e-4;
const FD_BATCHES: usize = 5;
const FD_BATCH_ROWS: usize = 8;
const FD_HIDDEN: usize = 16;
const FD_TIME_LIMIT_S: f64 = 60.0;
const OPT_STEPS: usize = 200;
const SMOKE_EPOCHS: usize = 20;
const SMOKE_REQUIRED: f64 = 0.95;
/// Observed accuracy of the seeded smoke run minus one point.
const SMOKE_PINNED: f64 = 0.9676;
const SMOKE_TIME_LIMIT_S: f64 = 15.0 * 60.0;
const CAMPAIGN_MODELS: usize = 20;
const CAMPAIGN_SUBSET: usize = 10_000;
const CAMPAIGN_SEED: u64 = 2024;
const CAMPAIGN_MAX_EPOCHS: usize = MAX_EPOCHS;
const CAMPAIGN_GOOD_ACCURACY: f64 = 0.85;
const CAMPAIGN_REQUIRED_GOOD: usize = 8;
/// Observed count of models at or above the accuracy bar in the seeded run
/// (0 of 20). The required count stays in force.
const CAMPAIGN_PINNED_GOOD: usize = 0;
const EPSILON: f64 = 0.05;
const FLOOR: f64 = 0.85;
const EPSILON_GRID: [f64; 5] = [0.0, 0.01, 0.02, 0.05, 0.1];
const SAMPLER_DRAWS: u64 = 10_000;
const ROTATION_TOLERANCE_PX: f64 = 1.0;
const FOREST_RUNS: u64 = 10;
const GLYPH_SAMPLED: u64 = 1_000;

type Outcome = Result<String, String>;

struct Report {
    failures: usize,
}

impl Report {
    fn run(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn load_mnist() -> Result<(LabeledSet, LabeledSet), String> {
    let paths = DataPaths::in_dir(&mnist_dir());
    if let Some(p) = paths.first_missing() {
        return Err(format!("MNIST file not found: {}", p.display()));
    }
    load_dataset(&paths).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut checked = 0usize;
    for (k, activation) in Activation::ALL.into_iter().enumerate() {
        let arch = Architecture {
            input_dim: 784,
            hidden_layers: 1,
            hidden_width: FD_HIDDEN,
            output_dim: 10,
            activation,
            dropout: false,
            dropout_rate: 0.5,
        };
        let mut net: Network<f64> = Network::init(arch, 100 + k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(7 + k as u64);
        for batch in 0..FD_BATCHES {
            let x = Array2::from_shape_fn((FD_BATCH_ROWS, 784), |_| rng.random::<f64>());
            let labels: Vec<u8> = (0..FD_BATCH_ROWS).map(|_| rng.random_range(0..10)).collect();
            let (_, grads) = net.loss_and_gradients::<ChaCha8Rng>(x.view(), &labels, None).map_err(|e| e.to_string())?;

            // Every bias plus a random sample of each weight matrix.
            let mut coords: Vec<(usize, bool, usize)> = Vec::new();
            for layer in 0..net.layers.len() {
                let (w_len, b_len) = (net.layers[layer].weights.len(), net.layers[layer].bias.len());
                coords.extend((0..b_len).map(|i| (layer, true, i)));
                coords.extend((0..150).map(|_| (layer, false, rng.random_range(0..w_len))));
            }
            let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
            for &(layer, is_bias, i) in &coords {
                let analytic = if is_bias {
                    grads.layers[layer].1[i]
                } else {
                    grads.layers[layer].0.as_slice().unwrap()[i]
                };
                let at = |delta: f64, net: &mut Network<f64>| {
                    let p = if is_bias {
                        &mut net.layers[layer].bias.as_slice_mut().unwrap()[i]
                    } else {
                        &mut net.layers[layer].weights.as_slice_mut().unwrap()[i]
                    };
                    *p += delta;
                };
                at(FD_STEP, &mut net);
                let plus = net.loss(x.view(), &labels).map_err(|e| e.to_string())?;
                at(-2.0 * FD_STEP, &mut net);
                let minus = net.loss(x.view(), &labels).map_err(|e| e.to_string())?;
                at(FD_STEP, &mut net);
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                diff2 += (analytic - numeric).powi(2);
                a2 += analytic * analytic;
                n2 += numeric * numeric;
            }
            checked += coords.len();
            let rel = diff2.sqrt() / (a2.sqrt() + n2.sqrt()).max(1e-300);
            if rel > worst {
                worst = rel;
                worst_at = format!("{activation} batch {batch}");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= FD_MAX_REL_ERROR, || format!("relative error {worst:.3e} at {worst_at} exceeds {FD_MAX_REL_ERROR:e}"))?;
    ensure(secs < FD_TIME_LIMIT_S, || format!("took {secs:.1}s, limit {FD_TIME_LIMIT_S}s"))?;
    Ok(format!("10 activations x {FD_BATCHES} batches, {checked} coordinates, worst relative error {worst:.2e} ({worst_at})"))
}

fn quadratic_loss(w: &[f64], a: &[f64], c: &[f64]) -> f64 {
    w.iter().zip(a).zip(c).map(|((w, a), c)| 0.5 * a * (w - c).powi(2)).sum()
}

fn optimizer_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<f64> = (0..12).map(|_| rng.random_range(0.5..2.0)).collect();
    let c: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w0: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut details = Vec::new();
    for kind in OptimizerKind::ALL {
        let mut opt = Optimizer::<f64>::new(kind);
        let mut w = w0.clone();
        let initial = quadratic_loss(&w, &a, &c);
        for _ in 0..OPT_STEPS {
            let g: Vec<f64> = w.iter().zip(&a).zip(&c).map(|((w, a), c)| a * (w - c)).collect();
            opt.step(&mut [(&mut w[..], &g[..])]);
        }
        let last = quadratic_loss(&w, &a, &c);
        ensure(last < initial, || format!("{kind}: loss {initial:.4} -> {last:.4} did not decrease"))?;
        details.push(format!("{kind} {:.1e}", last / initial));

        let mut opt = Optimizer::<f64>::new(kind);
        let mut w = w0.clone();
        let zero = vec![0.0; w.len()];
        for _ in 0..50 {
            opt.step(&mut [(&mut w[..], &zero[..])]);
        }
        ensure(w == w0, || format!("{kind}: weights moved under zero gradient"))?;
    }
    Ok(format!("final/initial loss: {}; zero-gradient fixed point holds for all 8", details.join(", ")))
}

struct Mnist {
    train: LabeledSet,
    test: LabeledSet,
    partition: OutlierPartition,
}

fn prepare_mnist() -> Result<Mnist, String> {
    let (train, test) = load_mnist()?;
    let partition = partition_by_label(&train, &IsolationForestParams::default()).map_err(|e| e.to_string())?;
    Ok(Mnist { train, test, partition })
}

fn mnist_smoke(data: &Result<Mnist, String>) -> Outcome {
    let data = data.as_ref().map_err(Clone::clone)?;
    let start = Instant::now();
    let config = ModelConfig {
        id: "smoke".into(),
        seed: 1,
        outlier_pct: 1.0,
        typical_pct: 1.0,
        hidden_layers: 1,
        dropout: false,
        activation: Activation::Relu,
        batch_size: 128,
        optimizer: OptimizerKind::Adam,
        use_validation: true,
        augmentation: AugmentationSpec::IDENTITY,
    };
    let set = build_training_set(&config, &data.train, &data.partition).map_err(|e| e.to_string())?;
    ensure(set.len() == data.train.len(), || format!("training set has {} rows, expected {}", set.len(), data.train.len()))?;
    let mut plan = config.training_plan();
    plan.max_epochs = SMOKE_EPOCHS;
    let model = train(config.architecture(), &plan, set.inputs().view(), &set.labels).map_err(|e| e.to_string())?;
    let acc = evaluate(&model.network, &data.test).map_err(|e| e.to_string())?.accuracy;
    let secs = start.elapsed().as_secs_f64();
    let bar = SMOKE_REQUIRED.max(SMOKE_PINNED);
    ensure(acc >= bar, || format!("test accuracy {acc:.4} below {bar:.4}"))?;
    ensure(secs < SMOKE_TIME_LIMIT_S, || format!("took {secs:.0}s"))?;
    Ok(format!("test accuracy {acc:.4} after {} epochs (bar {bar:.4})", model.epochs_trained))
}

fn isolation_forest(data: &Result<Mnist, String>) -> Outcome {
    for run in 0..FOREST_RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + run);
        let mut points: Vec<Vec<f32>> = (0..100).map(|_| (0..8).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
        points.push(vec![10.0; 8]);
        let forest = build_forest(&points, &IsolationForestParams { seed: run, ..Default::default() }).map_err(|e| e.to_string())?;
        let scores: Vec<f64> = points.iter().map(|p| forest.anomaly_score(p)).collect();
        let top = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        ensure(top == 100 && scores.iter().filter(|&&s| s == scores[100]).count() == 1, || {
            format!("run {run}: planted point scored {:.4}, maximum at index {top}", scores[100])
        })?;
    }
    let data = data.as_ref().map_err(|e| format!("planted outlier 10/10; partition check: {e}"))?;
    let mut seen = vec![false; data.train.len()];
    for (digit, members) in data.train.class_indices().iter().enumerate() {
        let part = data.partition.class(digit as u8).ok_or_else(|| format!("class {digit} missing"))?;
        let outliers: BTreeSet<usize> = part.outliers.iter().copied().collect();
        let typicals: BTreeSet<usize> = part.typicals.iter().copied().collect();
        ensure(outliers.is_disjoint(&typicals), || format!("class {digit}: pools overlap"))?;
        let union: Vec<usize> = outliers.union(&typicals).copied().collect();
        ensure(union == *members, || format!("class {digit}: pools do not cover the class"))?;
        for i in union {
            ensure(!seen[i], || format!("index {i} assigned twice"))?;
            seen[i] = true;
        }
    }
    ensure(seen.iter().all(|&s| s), || "some training images are unassigned".into())?;
    Ok(format!("planted outlier ranked first in {FOREST_RUNS}/{FOREST_RUNS} runs; 10-class partition of {} images is a disjoint cover", data.train.len()))
}

struct CampaignArtifacts {
    registry: Registry,
    test: LabeledSet,
}

fn campaign(data: &Result<Mnist, String>, artifacts: &mut Option<CampaignArtifacts>, dir: &std::path::Path) -> Outcome {
    let data = data.as_ref().map_err(Clone::clone)?;
    let subset = data.train.head(CAMPAIGN_SUBSET);
    let partition = partition_by_label(&subset, &IsolationForestParams { seed: CAMPAIGN_SEED, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let plan = CampaignPlan {
        models: CAMPAIGN_MODELS,
        master_seed: CAMPAIGN_SEED,
        parallelism: 1,
        max_epochs: CAMPAIGN_MAX_EPOCHS,
        out_dir: dir.to_owned(),
    };
    let entries = run_campaign(&plan, &subset, &data.test, &partition).map_err(|e| e.to_string())?;
    ensure(entries.len() == CAMPAIGN_MODELS, || format!("{} entries", entries.len()))?;

    let text = std::fs::read_to_string(dir.join(REGISTRY_FILE)).map_err(|e| e.to_string())?;
    let mut ids = HashSet::new();
    let mut keys = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let meta = parse_entry(line).map_err(|e| format!("line {}: {e}", n + 1))?;
        ensure(!(meta.config.outlier_pct == 0.0 && meta.config.typical_pct == 0.0), || format!("{} has both pools at 0", meta.id()))?;
        ensure(ids.insert(meta.id().to_owned()), || format!("duplicate id {}", meta.id()))?;
        ensure(keys.insert(meta.config.variation_key()), || format!("duplicate config {}", meta.id()))?;
    }
    ensure(ids.len() == CAMPAIGN_MODELS, || format!("registry has {} lines", ids.len()))?;

    let registry = load_registry(&dir.join(REGISTRY_FILE)).map_err(|e| e.to_string())?;
    *artifacts = Some(CampaignArtifacts { registry: registry.clone(), test: data.test.clone() });
    let failed = registry.metadata().filter(|m| !m.is_ok()).count();
    let good = registry.metadata().filter(|m| m.is_ok() && m.test_accuracy >= CAMPAIGN_GOOD_ACCURACY).count();
    let accs: Vec<String> = registry.metadata().map(|m| format!("{:.3}", m.test_accuracy)).collect();

    let set = identify_rashomon_set(registry.metadata(), EPSILON, FLOOR).map_err(|e| e.to_string())?;
    let best = registry.metadata().filter(|m| m.is_ok()).map(|m| m.test_accuracy).fold(f64::NEG_INFINITY, f64::max);
    let bar = (best - EPSILON).max(FLOOR);
    let expected: Vec<String> =
        registry.metadata().filter(|m| m.is_ok() && m.test_accuracy >= bar).map(|m| m.id().to_owned()).collect();
    ensure(set.members == expected, || format!("members {:?}, recomputed {:?}", set.members, expected))?;

    let detail = format!(
        "{CAMPAIGN_MODELS} models on {CAMPAIGN_SUBSET} images ({failed} failed), {good} >= {CAMPAIGN_GOOD_ACCURACY}; Rashomon set {} members; accuracies {}",
        set.len(),
        accs.join(" ")
    );
    let required = CAMPAIGN_REQUIRED_GOOD.max(CAMPAIGN_PINNED_GOOD);
    ensure(good >= required, || format!("{detail}; need {required} models >= {CAMPAIGN_GOOD_ACCURACY}"))?;
    ensure(!set.is_empty(), || format!("{detail}; Rashomon set is empty"))?;
    Ok(detail)
}

fn grouping_partition(artifacts: &Option<CampaignArtifacts>) -> Outcome {
    let art = artifacts.as_ref().ok_or("needs the campaign registry")?;
    let matrix = build_prediction_matrix(&art.registry, &art.test).map_err(|e| e.to_string())?;
    for (row, id) in matrix.model_ids.iter().enumerate() {
        let recorded = art.registry.get(id).unwrap().metadata.test_accuracy;
        let recomputed = matrix.row_accuracy(row, &art.test.labels);
        ensure((recorded - recomputed).abs() <= 1e-9, || format!("{id}: matrix accuracy {recomputed} vs registry {recorded}"))?;
    }
    let mut sizes = Vec::new();
    for (epsilon, floor) in [(EPSILON, FLOOR), (1.0, 0.0)] {
        let set = identify_rashomon_set(art.registry.metadata(), epsilon, floor).map_err(|e| e.to_string())?;
        for s in 0..matrix.sample_count {
            let g = group_by_label(&matrix, s, &set).map_err(|e| e.to_string())?;
            let total: usize = g.heights().iter().sum();
            ensure(total == set.len(), || format!("epsilon {epsilon}, floor {floor}, sample {s}: bars sum to {total}, set has {}", set.len()))?;
        }
        sizes.push(set.len());
    }
    for floor in [0.0, FLOOR] {
        let sets: Vec<_> = EPSILON_GRID
            .iter()
            .map(|&e| identify_rashomon_set(art.registry.metadata(), e, floor).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        for pair in sets.windows(2) {
            ensure(pair[0].members.iter().all(|m| pair[1].contains(m)), || {
                format!("floor {floor}: members at epsilon {} not contained at {}", pair[0].epsilon, pair[1].epsilon)
            })?;
        }
    }
    Ok(format!(
        "{} samples, bars sum to the set size ({} members at epsilon {EPSILON}/floor {FLOOR}, {} with every ok model); membership nested over epsilon {:?}",
        matrix.sample_count,
        sizes[0],
        sizes[1],
        EPSILON_GRID
    ))
}

fn sampler_coverage() -> Outcome {
    let mut outlier = HashSet::new();
    let mut typical = HashSet::new();
    let mut layers = HashSet::new();
    let mut dropout = HashSet::new();
    let mut activation = HashSet::new();
    let mut batch = HashSet::new();
    let mut optimizer = HashSet::new();
    let mut validation = HashSet::new();
    let mut dx = HashSet::new();
    let mut dy = HashSet::new();
    let mut rotation = HashSet::new();
    let mut contrast = HashSet::new();
    let mut contrast_share = HashSet::new();
    let mut inversion = HashSet::new();
    let mut violations = 0;
    for s in 0..SAMPLER_DRAWS {
        let c = sample_config(s).map_err(|e| e.to_string())?;
        if c.validate().is_err() || (c.outlier_pct == 0.0 && c.typical_pct == 0.0) {
            violations += 1;
        }
        outlier.insert(c.outlier_pct.to_bits());
        typical.insert(c.typical_pct.to_bits());
        layers.insert(c.hidden_layers);
        dropout.insert(c.dropout);
        activation.insert(c.activation);
        batch.insert(c.batch_size);
        optimizer.insert(c.optimizer);
        validation.insert(c.use_validation);
        dx.insert(c.augmentation.dx);
        dy.insert(c.augmentation.dy);
        rotation.insert(c.augmentation.rotation_deg);
        contrast.insert(c.augmentation.contrast_factor.to_bits());
        contrast_share.insert(c.augmentation.contrast_proportion.to_bits());
        inversion.insert(c.augmentation.inversion_proportion.to_bits());
    }
    ensure(violations == 0, || format!("{violations} constraint violations"))?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<HashSet<_>>();
    let checks = [
        ("outlier_pct", outlier == bits(&POOL_PERCENTAGES)),
        ("typical_pct", typical == bits(&POOL_PERCENTAGES)),
        ("hidden_layers", layers == HIDDEN_LAYERS.into_iter().collect()),
        ("dropout", dropout.len() == 2),
        ("activation", activation == Activation::ALL.into_iter().collect()),
        ("batch_size", batch == BATCH_SIZES.into_iter().collect()),
        ("optimizer", optimizer == OptimizerKind::ALL.into_iter().collect()),
        ("use_validation", validation.len() == 2),
        ("dx", dx == TRANSLATIONS.into_iter().collect()),
        ("dy", dy == TRANSLATIONS.into_iter().collect()),
        ("rotation_deg", rotation == ROTATIONS.into_iter().collect()),
        ("contrast_factor", contrast == bits(&CONTRAST_FACTORS)),
        ("contrast_proportion", contrast_share == bits(&PROPORTIONS)),
        ("inversion_proportion", inversion == bits(&PROPORTIONS)),
    ];
    let missing: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    ensure(missing.is_empty(), || format!("value sets not fully covered: {missing:?}"))?;
    Ok(format!("{SAMPLER_DRAWS} draws cover all values of {} parameters, 0 violations", checks.len()))
}

fn teeth_formula() -> Outcome {
    let expected = [(32, 0), (64, 1), (128, 2), (256, 3), (512, 4)];
    for (batch, lines) in expected {
        let got = teeth_lines(batch).map_err(|e| e.to_string())?;
        ensure(got == lines, || format!("batch {batch}: {got} lines, expected {lines}"))?;
    }
    ensure(teeth_lines(100).is_err() && teeth_lines(1024).is_err(), || "out-of-set batch sizes accepted".into())?;
    Ok("32->0 64->1 128->2 256->3 512->4".into())
}

fn random_image(rng: &mut ChaCha8Rng) -> GrayImage {
    let mut img = GrayImage::black();
    for p in img.pixels_mut().iter_mut() {
        *p = rng.random();
    }
    img
}

fn augmentation_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let images: Vec<GrayImage> = (0..50).map(|_| random_image(&mut rng)).collect();
    for img in &images {
        ensure(translate(img, 0, 0).unwrap() == *img, || "translate(0, 0) changed the image".into())?;
        ensure(rotate(img, 0).unwrap() == *img, || "rotate(0) changed the image".into())?;
        ensure(adjust_contrast(img, 1.0).unwrap() == *img, || "contrast factor 1 changed the image".into())?;
        ensure(invert(&invert(img)) == *img, || "double inversion is not the identity".into())?;
        for (r, c) in [(0, 0), (5, 27), (27, 13)] {
            let p = img.get(r, c);
            ensure(invert(img).get(r, c) == 255 - p, || "inversion is not 255 - p".into())?;
        }
    }
    ensure(apply_spec(&images, &AugmentationSpec::IDENTITY, 9).unwrap() == images, || "identity spec changed images".into())?;

    let center = 13.5;
    let mut worst = 0.0f64;
    for &deg in &ROTATIONS {
        for &(row, col) in &[(6usize, 20usize), (20, 8), (13, 22), (4, 13)] {
            let mut img = GrayImage::black();
            img.set(row, col, 255);
            let out = rotate(&img, deg).map_err(|e| e.to_string())?;
            // Counter-clockwise as displayed with rows pointing down.
            let t = (deg as f64).to_radians();
            let (x, y) = (col as f64 - center, row as f64 - center);
            let exp_col = center + x * t.cos() + y * t.sin();
            let exp_row = center - x * t.sin() + y * t.cos();
            let (mut sum, mut sr, mut sc) = (0.0, 0.0, 0.0);
            for r in 0..28 {
                for c in 0..28 {
                    let v = out.get(r, c) as f64;
                    sum += v;
                    sr += v * r as f64;
                    sc += v * c as f64;
                }
            }
            ensure(sum > 0.0, || format!("{deg} deg: pixel vanished"))?;
            let d = ((sr / sum - exp_row).powi(2) + (sc / sum - exp_col).powi(2)).sqrt();
            worst = worst.max(d);
            ensure(d <= ROTATION_TOLERANCE_PX, || format!("{deg} deg from ({row},{col}): landed {d:.2}px from the closed form"))?;
        }
    }
    Ok(format!("identities exact on 50 random images; rotation worst offset {worst:.3}px over {} angles", ROTATIONS.len()))
}

fn formats() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (k, layers) in [1usize, 2, 3].into_iter().enumerate() {
        let net = Network::<f32>::init(Architecture::mnist(layers, Activation::ALL[k * 3], k == 1), 40 + k as u64);
        let path = dir.path().join(format!("w{k}.bin"));
        save_weights(&net, &path).map_err(|e| e.to_string())?;
        let first = std::fs::read(&path).map_err(|e| e.to_string())?;
        let loaded = load_weights(&path, net.architecture).map_err(|e| e.to_string())?;
        save_weights(&loaded, &path).map_err(|e| e.to_string())?;
        ensure(std::fs::read(&path).unwrap() == first, || "weights save-load-save changed bytes".into())?;
        ensure(loaded == net, || "weights round trip changed values".into())?;
        for pos in (0..first.len()).step_by(first.len() / 97 + 1) {
            let mut bad = first.clone();
            bad[pos] ^= 0x10;
            ensure(decode_weights(&bad).is_err(), || format!("flipped weights byte {pos} went undetected"))?;
            checked += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (models, samples) = (7, 301);
    let ids: Vec<String> = (0..models).map(|i| format!("model-{i:04}")).collect();
    let labels: Vec<u8> = (0..models * samples).map(|_| rng.random_range(0..10)).collect();
    let conf: Vec<f32> = (0..models * samples).map(|_| rng.random()).collect();
    let matrix = PredictionMatrix::new(ids.clone(), samples, labels, conf).map_err(|e| e.to_string())?;
    let path = dir.path().join("predictions.bin");
    save_matrix(&matrix, &path).map_err(|e| e.to_string())?;
    let first = std::fs::read(&path).unwrap();
    let loaded = load_matrix(&path).map_err(|e| e.to_string())?;
    save_matrix(&loaded, &path).map_err(|e| e.to_string())?;
    ensure(std::fs::read(&path).unwrap() == first && loaded == matrix, || "matrix save-load-save changed bytes".into())?;
    ensure(encode_matrix(&loaded) == first, || "encoder disagrees with file".into())?;
    for pos in (0..first.len()).step_by(first.len() / 97 + 1) {
        let mut bad = first.clone();
        bad[pos] ^= 0x01;
        ensure(decode_matrix(&bad, ids.clone()).is_err(), || format!("flipped matrix byte {pos} went undetected"))?;
        checked += 1;
    }
    Ok(format!("weights (3 shapes) and matrix files byte-identical after save-load-save; {checked} single-byte corruptions detected"))
}

fn count_class(doc: &roxmltree::Document, class: &str) -> usize {
    doc.descendants().filter(|n| n.attribute("class") == Some(class)).count()
}

fn check_glyph(config: &ModelConfig, confidence: Option<f64>) -> Result<(), String> {
    let svg = render_svg(&map_features(config, confidence).map_err(|e| e.to_string())?);
    let doc = roxmltree::Document::parse(&svg).map_err(|e| format!("{}: invalid XML: {e}", config.id))?;
    let root = doc.root_element();
    ensure(root.attribute("viewBox") == Some("0 0 120 140"), || "wrong viewBox".into())?;
    let teeth = (config.batch_size as f64).log2().round() as usize - 5;
    let found = (
        count_class(&doc, "eye"),
        count_class(&doc, "tooth-line"),
        count_class(&doc, "badge-validation"),
        count_class(&doc, "hole"),
        count_class(&doc, "cheek"),
    );
    let expected = (
        config.hidden_layers,
        teeth,
        config.use_validation as usize,
        if config.dropout { 3 } else { 0 },
        if confidence.is_some() { 2 } else { 0 },
    );
    ensure(found == expected, || format!("{}: (eyes, teeth, badge, holes, cheeks) {found:?}, expected {expected:?}", config.id))?;
    for class in ["antenna", "body", "mouth", "earpiece"] {
        ensure(count_class(&doc, class) > 0, || format!("no {class} element"))?;
    }
    let eyes: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("eye")).collect();
    let pupils: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("pupil")).collect();
    for (e, p) in eyes.iter().zip(&pupils) {
        let num = |n: &roxmltree::Node, a: &str| n.attribute(a).unwrap().parse::<f64>().unwrap();
        let dx = (num(p, "cx") - num(e, "cx")) / 2.0;
        let dy = (num(p, "cy") - num(e, "cy")) / 2.0;
        ensure(
            (dx - config.augmentation.dx as f64).abs() < 1e-9 && (dy - config.augmentation.dy as f64).abs() < 1e-9,
            || format!("{}: pupil offset ({dx}, {dy})", config.id),
        )?;
    }
    let mouth = doc.descendants().find(|n| n.attribute("class") == Some("mouth")).unwrap();
    let rot = format!("rotate({} ", config.augmentation.rotation_deg);
    ensure(mouth.attribute("transform").is_some_and(|t| t.starts_with(&rot)), || format!("{}: mouth transform", config.id))?;
    Ok(())
}

fn glyph_contract() -> Outcome {
    let mut cases = 0;
    for s in 0..GLYPH_SAMPLED {
        let config = sample_config(s).map_err(|e| e.to_string())?;
        let confidence = if s % 2 == 0 { Some((s % 101) as f64 / 100.0) } else { None };
        check_glyph(&config, confidence)?;
        cases += 1;
    }
    let base = sample_config(0).map_err(|e| e.to_string())?;
    for activation in Activation::ALL {
        for batch_size in BATCH_SIZES {
            for hidden_layers in HIDDEN_LAYERS {
                for (dropout, use_validation) in [(false, false), (false, true), (true, false), (true, true)] {
                    let config = ModelConfig { activation, batch_size, hidden_layers, dropout, use_validation, ..base.clone() };
                    check_glyph(&config, None)?;
                    cases += 1;
                }
            }
        }
    }
    let mut identical = 0;
    for s in 0..200 {
        let base = sample_config(s).map_err(|e| e.to_string())?;
        let reference = render_svg(&map_features(&base, None).unwrap());
        for optimizer in OptimizerKind::ALL {
            let other = ModelConfig { optimizer, ..base.clone() };
            ensure(render_svg(&map_features(&other, None).unwrap()) == reference, || format!("seed {s}: {optimizer} changes the SVG"))?;
            identical += 1;
        }
    }
    Ok(format!("{cases} glyphs parse and decode exactly; {identical} optimizer swaps render byte-identical"))
}

fn main() {
    let mut report = Report { failures: 0 };
    report.run("gradient-check", gradient_check);
    report.run("optimizer-suite", optimizer_suite);
    report.run("sampler-coverage", sampler_coverage);
    report.run("teeth-formula", teeth_formula);
    report.run("augmentation-oracles", augmentation_oracles);
    report.run("formats", formats);
    report.run("glyph-contract", glyph_contract);

    let start = Instant::now();
    let data = prepare_mnist();
    eprintln!("MNIST load and outlier partition: {:.1}s", start.elapsed().as_secs_f64());
    report.run("isolation-forest", || isolation_forest(&data));
    report.run("mnist-smoke", || mnist_smoke(&data));

    let dir = tempfile::tempdir().expect("temp dir");
    let mut artifacts = None;
    report.run("campaign", || campaign(&data, &mut artifacts, dir.path()));
    report.run("grouping-partition", || grouping_partition(&artifacts));

    if report.failures > 0 {
        println!("{} criteria failed", report.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
