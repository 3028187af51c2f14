//! The synthetic two-class desk task and the full pipeline run on it.
//!
//! Class A (source) images carry horizontal stripes, class B (target)
//! images vertical stripes; both have a random period, phase, contrast and
//! uniform pixel noise. The input is one more class A image.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dmt_core::evaluate::SweepReport;
use dmt_core::rng::{seeded, Rng as ChaCha};
use dmt_core::traversal::TraversalResult;
use dmt_core::{Error, ImageTensor, Result};
use log::info;
use rand::Rng;

use crate::codec::{load_image, save_image};
use crate::commands::{
    build_extractor, cmd_adversarial, cmd_eval, cmd_extract, cmd_gram, cmd_reconstruct, cmd_traverse, score_image,
    zt_file, AdversarialTarget, FEATURES_FILE, RECORDS_FILE,
};
use crate::config::RunConfig;
use crate::manifest::Manifest;

pub const DEMO_SIZE: usize = 32;
pub const DEMO_PER_CLASS: usize = 64;
pub const SUMMARY_FILE: &str = "summary.txt";

/// Square-wave stripes plus noise. Only arithmetic, so the generated bytes
/// do not depend on the platform's libm.
pub fn stripe_image(rng: &mut ChaCha, horizontal: bool) -> ImageTensor {
    let period = rng.gen_range(4..=8) as f64;
    let phase = rng.gen::<f64>() * period;
    let contrast = rng.gen_range(0.25..0.4);
    let mut pixels = Vec::with_capacity(DEMO_SIZE * DEMO_SIZE);
    for y in 0..DEMO_SIZE {
        for x in 0..DEMO_SIZE {
            let t = if horizontal { y } else { x } as f64 + phase;
            let on = (t % period) < period / 2.0;
            let base = if on { 0.5 + contrast } else { 0.5 - contrast };
            pixels.push(base + 0.2 * (rng.gen::<f64>() - 0.5));
        }
    }
    ImageTensor::from_clamped(DEMO_SIZE, DEMO_SIZE, 1, pixels).expect("valid demo image")
}

/// Per-λ results gathered for the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoLambda {
    pub lambda: f64,
    pub decision: f64,
    pub probability: f64,
    pub recon_path: PathBuf,
    pub recon_feature_loss: f64,
    pub recon_decision: f64,
    pub recon_l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSummary {
    pub seed: u64,
    pub sigma: f64,
    pub baseline_decision: f64,
    pub baseline_probability: f64,
    pub lambdas: Vec<DemoLambda>,
    pub adversarial_c: f64,
    pub adversarial_decision: f64,
    pub adversarial_l2: f64,
}

impl DemoSummary {
    /// Decision values strictly increase from the baseline through the sweep.
    pub fn decision_monotone(&self) -> bool {
        let mut prev = self.baseline_decision;
        self.lambdas.iter().all(|l| {
            let ok = l.decision > prev;
            prev = l.decision;
            ok
        })
    }

    pub fn sign_flip(&self) -> bool {
        self.lambdas
            .last()
            .is_some_and(|l| l.decision.signum() != self.baseline_decision.signum())
    }

    pub fn probability_crosses_half(&self) -> bool {
        self.lambdas
            .last()
            .is_some_and(|l| (self.baseline_probability < 0.5) != (l.probability < 0.5))
    }

    pub fn traversal_l2(&self) -> f64 {
        self.lambdas.last().map_or(f64::NAN, |l| l.recon_l2)
    }

    pub fn adversarial_smaller(&self) -> bool {
        self.adversarial_l2 < self.traversal_l2()
    }

    pub fn to_text(&self) -> String {
        let yes = |b: bool| if b { "yes" } else { "no" };
        let mut s = String::new();
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(
            s,
            "task {DEMO_PER_CLASS} source (horizontal stripes), {DEMO_PER_CLASS} target (vertical stripes), {DEMO_SIZE}x{DEMO_SIZE}x1"
        );
        let _ = writeln!(s, "sigma {:e}", self.sigma);
        let _ = writeln!(s, "baseline decision {:e} probability {:e}", self.baseline_decision, self.baseline_probability);
        let _ = writeln!(s, "# lambda decision probability recon_feature_loss recon_decision recon_l2");
        for l in &self.lambdas {
            let _ = writeln!(
                s,
                "{:e} {:e} {:e} {:e} {:e} {:e}",
                l.lambda, l.decision, l.probability, l.recon_feature_loss, l.recon_decision, l.recon_l2
            );
        }
        let _ = writeln!(
            s,
            "adversarial c_adv {:e} decision {:e} l2 {:e}",
            self.adversarial_c, self.adversarial_decision, self.adversarial_l2
        );
        let _ = writeln!(s, "check decision_monotone {}", yes(self.decision_monotone()));
        let _ = writeln!(s, "check sign_flip_at_smallest_lambda {}", yes(self.sign_flip()));
        let _ = writeln!(s, "check probability_crosses_half {}", yes(self.probability_crosses_half()));
        let _ = writeln!(s, "check adversarial_l2_below_traversal_l2 {}", yes(self.adversarial_smaller()));
        s
    }
}

/// Write the task images, manifest, labels and config under `out`.
pub fn generate_task(seed: u64, out: &Path) -> Result<(Manifest, PathBuf)> {
    let img_dir = out.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::from(e).context(img_dir.display()))?;
    let mut rng = seeded(seed);
    let mut rel = |name: String, horizontal: bool| -> Result<PathBuf> {
        let img = stripe_image(&mut rng, horizontal);
        save_image(&img, &img_dir.join(&name))?;
        Ok(PathBuf::from("images").join(name))
    };
    let mut source = Vec::new();
    let mut target = Vec::new();
    for i in 0..DEMO_PER_CLASS {
        source.push(rel(format!("source_{i:02}.ppm"), true)?);
        target.push(rel(format!("target_{i:02}.ppm"), false)?);
    }
    let input = rel("input.ppm".into(), true)?;
    let relative = Manifest {
        source_paths: source,
        target_paths: target,
        input_path: input,
    };
    let manifest_path = out.join("manifest.txt");
    fs::write(&manifest_path, relative.to_text()).map_err(|e| Error::from(e).context(manifest_path.display()))?;
    // Feature rows are [targets, sources]: targets are the +1 class.
    let labels: String = std::iter::repeat_n("1\n", DEMO_PER_CLASS)
        .chain(std::iter::repeat_n("-1\n", DEMO_PER_CLASS))
        .collect();
    let labels_path = out.join("labels.txt");
    fs::write(&labels_path, labels).map_err(|e| Error::from(e).context(labels_path.display()))?;
    Ok((Manifest::load(&manifest_path)?, labels_path))
}

/// Generate the task and run every stage, writing all artifacts and
/// `summary.txt` under `out`.
pub fn cmd_demo(seed: u64, out: &Path, cfg: &RunConfig) -> Result<DemoSummary> {
    let (manifest, labels) = generate_task(seed, out)?;
    let mut saved = cfg.clone();
    saved.out = PathBuf::from(".");
    fs::write(out.join("config.toml"), saved.to_toml()).map_err(Error::from)?;
    info!("demo task written to {}", out.display());

    let features = cmd_extract(&manifest, cfg, out)?;
    debug_assert_eq!(features, out.join(FEATURES_FILE));
    cmd_gram(&features, false)?;
    let traversal: TraversalResult = cmd_traverse(&features, cfg, out)?;
    let (model, report): (_, SweepReport) = cmd_eval(&features, &out.join(RECORDS_FILE), &labels, cfg, out)?;

    let extractor = build_extractor(cfg)?;
    let input = load_image(&manifest.input_path)?;
    let mut lambdas = Vec::new();
    for (i, rec) in report.records.iter().enumerate() {
        let recon_path = out.join(format!("recon_{i}.ppm"));
        let res = cmd_reconstruct(&out.join(zt_file(i)), cfg, Some(&manifest.input_path), &recon_path)?;
        // Scored before quantization, like the adversarial image below.
        let recon = &res.image;
        let (recon_decision, _) = score_image(&extractor, &model, recon)?;
        lambdas.push(DemoLambda {
            lambda: rec.lambda,
            decision: rec.decision,
            probability: rec.probability,
            recon_path,
            recon_feature_loss: res.final_feature_loss,
            recon_decision,
            recon_l2: recon.l2_distance(&input)?,
        });
    }
    let target = lambdas.last().map(|l| l.recon_decision).expect("at least one lambda");
    let adv = cmd_adversarial(&model, &input, AdversarialTarget::Decision(target), cfg, out)?;

    let summary = DemoSummary {
        seed,
        sigma: traversal.sigma,
        baseline_decision: report.baseline.decision,
        baseline_probability: report.baseline.probability,
        lambdas,
        adversarial_c: adv.c_adv,
        adversarial_decision: adv.decision_value,
        adversarial_l2: adv.l2_pixel_distance,
    };
    let path = out.join(SUMMARY_FILE);
    fs::write(&path, summary.to_text()).map_err(|e| Error::from(e).context(path.display()))?;
    Ok(summary)
}
