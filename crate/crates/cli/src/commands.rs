//! One function per CLI verb. Each validates its inputs before doing any
//! heavy work and writes its outputs under the given directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dmt_core::evaluate::{
    match_regularizer, adversarial_perturb, platt_fit, predict, sweep_coefficients, train_svm,
    write_adversarial_record, AdversarialResult, ClassifierModel, Push, SweepReport,
};
use dmt_core::features::write_weights;
use dmt_core::mmd::{features_section_len, read_features, read_vector, write_features, write_gram_section, write_vector};
use dmt_core::reconstruct::{invert, InitImage, ReconstructionConfig, ReconstructionResult};
use dmt_core::traversal::{read_records, traverse, write_records, TraversalConfig, TraversalResult};
use dmt_core::{Error, Extractor, FeatureMatrix, ImageTensor, Result};
use log::info;

use crate::codec::{load_image, save_image};
use crate::config::{InitChoice, RunConfig};
use crate::manifest::Manifest;

pub const FEATURES_FILE: &str = "features.dmtv";
pub const WEIGHTS_FILE: &str = "weights.dmtw";
pub const RECORDS_FILE: &str = "traversal.txt";
pub const MODEL_FILE: &str = "model.json";
pub const SWEEP_FILE: &str = "sweep.txt";

pub fn r_file(i: usize) -> String {
    format!("r_{i}.dmtv")
}

pub fn zt_file(i: usize) -> String {
    format!("zt_{i}.dmtv")
}

fn io_ctx(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::from(e).context(path.display())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_ctx(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(io_ctx(path))?))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_ctx(dir))
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    read_features(open(path)?).map_err(|e| e.context(path.display()))
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>> {
    read_vector(open(path)?).map_err(|e| e.context(path.display()))
}

fn save_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    write_vector(&mut w, v)?;
    w.flush().map_err(io_ctx(path))
}

pub fn build_extractor(cfg: &RunConfig) -> Result<Extractor> {
    let (spec, weights) = cfg.extractor()?;
    Extractor::new(spec, &weights)
}

/// Extract features for every manifest image into `out/features.dmtv`
/// (rows ordered targets, sources, input) and save the weights used.
pub fn cmd_extract(manifest: &Manifest, cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let (spec, weights) = cfg.extractor()?;
    let extractor = Extractor::new(spec.clone(), &weights)?;
    let paths: Vec<&PathBuf> = manifest
        .target_paths
        .iter()
        .chain(&manifest.source_paths)
        .chain(std::iter::once(&manifest.input_path))
        .collect();
    let mut images = Vec::with_capacity(paths.len());
    for p in &paths {
        let img = load_image(p)?;
        if img.shape() != spec.input_shape() {
            return Err(Error::InvalidInput(format!(
                "{}: image is {:?} (HWC), extractor expects {:?}",
                p.display(),
                img.shape(),
                spec.input_shape()
            )));
        }
        images.push(img);
    }
    let mut rows = Vec::with_capacity(images.len() * extractor.feature_dim());
    for (img, p) in images.iter().zip(&paths) {
        rows.extend(extractor.extract(img).map_err(|e| e.context(p.display()))?);
    }
    let fm = FeatureMatrix::from_rows(
        rows,
        extractor.feature_dim(),
        manifest.source_paths.len(),
        manifest.target_paths.len(),
    )?;
    ensure_dir(out)?;
    let path = out.join(FEATURES_FILE);
    let mut w = create(&path)?;
    write_features(&mut w, &fm, false)?;
    w.flush().map_err(io_ctx(&path))?;
    let wpath = out.join(WEIGHTS_FILE);
    let mut w = create(&wpath)?;
    write_weights(&mut w, &spec, &weights)?;
    w.flush().map_err(io_ctx(&wpath))?;
    info!("extracted K = {} rows of D = {} to {}", fm.k(), fm.d(), path.display());
    Ok(path)
}

/// Append the Gram section to a feature file in place. The V bytes are left
/// untouched; an existing Gram section is replaced only with `overwrite`.
pub fn cmd_gram(features: &Path, overwrite: bool) -> Result<()> {
    let buf = fs::read(features).map_err(io_ctx(features))?;
    let v_len = features_section_len(&buf).map_err(|e| e.context(features.display()))?;
    if buf.len() > v_len && !overwrite {
        return Err(Error::Precondition(format!(
            "{} already has a Gram section; pass --overwrite to recompute it",
            features.display()
        )));
    }
    let mut fm = read_features(&buf[..v_len]).map_err(|e| e.context(features.display()))?;
    let gram = fm.compute_gram()?.clone();
    let mut out = buf[..v_len].to_vec();
    write_gram_section(&mut out, &gram)?;
    fs::write(features, out).map_err(io_ctx(features))?;
    info!("wrote {k}x{k} Gram section to {}", features.display(), k = gram.size());
    Ok(())
}

/// Run the λ sweep; writes `traversal.txt` and per-λ `r_i` / `zt_i` vectors.
pub fn cmd_traverse(features: &Path, cfg: &RunConfig, out: &Path) -> Result<TraversalResult> {
    let fm = load_features(features)?;
    let gram = fm.gram().ok_or_else(|| {
        Error::Precondition(format!(
            "{} has no Gram section; run `dmt gram {}` first",
            features.display(),
            features.display()
        ))
    })?;
    let sigma = cfg.traversal.sigma.kernel().resolve(gram)?;
    let tcfg = TraversalConfig {
        lambdas: cfg.traversal.resolve_lambdas(sigma),
        kernel: dmt_core::KernelConfig::Explicit(sigma),
        solver: cfg.solver.minimize_config(),
        target_restart: cfg.traversal.target_restart,
    };
    tcfg.validate()?;
    let result = traverse(&fm, &tcfg)?;
    ensure_dir(out)?;
    let path = out.join(RECORDS_FILE);
    let mut w = create(&path)?;
    writeln!(w, "# sigma {sigma:e}").map_err(io_ctx(&path))?;
    write_records(&mut w, &result)?;
    w.flush().map_err(io_ctx(&path))?;
    for (i, rec) in result.records.iter().enumerate() {
        save_vector(&out.join(r_file(i)), &rec.r)?;
        save_vector(&out.join(zt_file(i)), &result.z_t(&fm, i)?)?;
        info!(
            "lambda {:e}: witness {:e}, budget {:e}, {} iterations ({})",
            rec.lambda,
            rec.witness.value,
            rec.budget,
            rec.trace.iterations,
            rec.trace.termination.as_str()
        );
    }
    Ok(result)
}

/// Invert `z_t` to pixels and write the image to `output`.
pub fn cmd_reconstruct(zt: &Path, cfg: &RunConfig, init: Option<&Path>, output: &Path) -> Result<ReconstructionResult> {
    let z = load_vector(zt)?;
    let extractor = build_extractor(cfg)?;
    if z.len() != extractor.feature_dim() {
        return Err(Error::InvalidInput(format!(
            "{} has D = {}, extractor produces D = {}",
            zt.display(),
            z.len(),
            extractor.feature_dim()
        )));
    }
    let init = match (cfg.reconstruct.init, init) {
        (InitChoice::MidGray, _) => InitImage::MidGray,
        (InitChoice::Source, Some(p)) => InitImage::Given(load_image(p)?),
        (InitChoice::Source, None) => {
            return Err(Error::InvalidInput(
                "reconstruction init is \"source\" but no --init image was given".into(),
            ))
        }
    };
    let rcfg = ReconstructionConfig {
        lambda_tv: cfg.reconstruct.lambda_tv,
        beta: cfg.reconstruct.beta,
        pixel_bounds: (0.0, 1.0),
        init,
        solver: cfg.solver.minimize_config(),
    };
    let result = invert(&extractor, &z, &rcfg)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    save_image(&result.image, output)?;
    info!(
        "reconstructed {}: feature loss {:e}, tv {:e}, {} iterations",
        output.display(),
        result.final_feature_loss,
        result.final_tv,
        result.trace.iterations
    );
    Ok(result)
}

pub fn read_labels(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(io_ctx(path))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "1" | "+1" => out.push(1.0),
            "-1" => out.push(-1.0),
            _ => {
                return Err(Error::Format(format!(
                    "{} line {}: label must be +1 or -1, got {line:?}",
                    path.display(),
                    n + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Rows held out of SVM training for the Platt fit.
pub fn is_held_out(row: usize) -> bool {
    row % 5 == 4
}

/// Train the SVM on the labelled rows, calibrate on the held-out ones.
pub fn train_classifier(fm: &FeatureMatrix, labels: &[f64], c_reg: f64) -> Result<ClassifierModel> {
    if labels.len() != fm.k() - 1 {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} labelled feature rows (every row except the input)",
            labels.len(),
            fm.k() - 1
        )));
    }
    let (mut train_x, mut train_y, mut held_x, mut held_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, &y) in labels.iter().enumerate() {
        let row = fm.row(i).to_vec();
        if is_held_out(i) {
            held_x.push(row);
            held_y.push(u8::from(y > 0.0));
        } else {
            train_x.push(row);
            train_y.push(y);
        }
    }
    let svm = train_svm(&train_x, &train_y, c_reg)?;
    let values: Vec<f64> = held_x.iter().map(|x| svm.decision(x)).collect();
    let (platt_a, platt_b) = platt_fit(&values, &held_y).map_err(|e| e.context("Platt calibration"))?;
    Ok(ClassifierModel {
        w: svm.w,
        b: svm.b,
        platt_a,
        platt_b,
        trained_on: format!(
            "linear SVM (C = {c_reg}) on D = {} features; positive decision = label +1",
            fm.d()
        ),
    })
}

pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(model).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_ctx(path))
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    let text = fs::read_to_string(path).map_err(io_ctx(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Train and calibrate the classifier, then score the baseline and every
/// λ's `z_t`. The `r_i` vectors are read from beside the record file.
pub fn cmd_eval(
    features: &Path,
    records: &Path,
    labels: &Path,
    cfg: &RunConfig,
    out: &Path,
) -> Result<(ClassifierModel, SweepReport)> {
    let fm = load_features(features)?;
    let lines = read_records(open(records)?).map_err(|e| e.context(records.display()))?;
    let labels = read_labels(labels)?;
    let dir = records.parent().unwrap_or(Path::new(""));
    let rs: Vec<Vec<f64>> = (0..lines.len())
        .map(|i| load_vector(&dir.join(r_file(i))))
        .collect::<Result<_>>()?;
    if let Some(r) = rs.iter().find(|r| r.len() != fm.k()) {
        return Err(Error::InvalidInput(format!(
            "coefficient vector has length {}, features have K = {}",
            r.len(),
            fm.k()
        )));
    }
    let model = train_classifier(&fm, &labels, cfg.evaluate.c_reg)?;
    let report = sweep_coefficients(&model, lines.iter().zip(&rs).map(|(l, r)| (l.lambda, r.as_slice())), &fm)?;
    ensure_dir(out)?;
    save_model(&model, &out.join(MODEL_FILE))?;
    let path = out.join(SWEEP_FILE);
    let mut w = create(&path)?;
    report.write(&mut w)?;
    w.flush().map_err(io_ctx(&path))?;
    for r in report.all() {
        info!("lambda {:e}: decision {:e}, probability {:.4}", r.lambda, r.decision, r.probability);
    }
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversarialTarget {
    /// Bisect the regularizer until the decision value matches.
    Decision(f64),
    /// Run once with this regularizer, pushing the decision up.
    Regularizer(f64),
}

/// Pixel-space adversarial perturbation of `image`; writes
/// `adversarial.ppm` and `adversarial.txt`.
pub fn cmd_adversarial(
    model: &ClassifierModel,
    image: &ImageTensor,
    target: AdversarialTarget,
    cfg: &RunConfig,
    out: &Path,
) -> Result<AdversarialResult> {
    let extractor = build_extractor(cfg)?;
    let mut solver = cfg.solver.minimize_config();
    solver.max_iters = cfg.evaluate.adversarial_max_iters;
    let result = match target {
        AdversarialTarget::Decision(t) => match_regularizer(&extractor, model, image, t, &solver)?,
        AdversarialTarget::Regularizer(c) => adversarial_perturb(&extractor, model, image, c, Push::Increase, &solver)?,
    };
    ensure_dir(out)?;
    save_image(&result.perturbed, &out.join("adversarial.ppm"))?;
    let path = out.join("adversarial.txt");
    let mut w = create(&path)?;
    write_adversarial_record(&mut w, &result)?;
    w.flush().map_err(io_ctx(&path))?;
    info!(
        "adversarial: c_adv {:e}, decision {:e}, pixel L2 {:e}",
        result.c_adv, result.decision_value, result.l2_pixel_distance
    );
    Ok(result)
}

/// Decision value and probability of an image.
pub fn score_image(extractor: &Extractor, model: &ClassifierModel, image: &ImageTensor) -> Result<(f64, f64)> {
    predict(model, &extractor.extract(image)?)
}
