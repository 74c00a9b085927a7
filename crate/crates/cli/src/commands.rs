use std::path::{Path, PathBuf};

use serde::Serialize;

use d3dp::aggregate::{AggregationReport, Aggregator};
use d3dp::denoise::{
    init_params, load_checkpoint, save_checkpoint, train, ContractiveOracle, Denoiser, DenoiserParams, MlpDenoiser,
    MlpShape, NoisyOracle, OracleTarget, PerfectOracle, TrainItem,
};
use d3dp::metrics::{metrics_csv, MetricReport, MetricRow};
use d3dp::posefile::{load_pose2d, load_pose3d, save_poses, PoseFile};
use d3dp::sampler::{pose_seed, sample_traced, FlipContext, SampleOutput, SamplerConfig};
use d3dp::schedule::{NoiseSchedule, SignalScale};
use d3dp::synth::{gen_poses, ScenarioManifest};
use d3dp::{HypothesisSet, PoseSeq2D, PoseSeq3D};

use crate::render::render_frame;
use crate::config::{write_run_manifest, OracleKind, RunConfig};
use crate::{create_dir, write_file, Failure};

/// One dataset entry loaded from disk.
pub struct Entry {
    pub x: PoseSeq2D,
    pub gt: Option<PoseSeq3D>,
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<(), Failure> {
    let dir = cfg.dataset_dir();
    create_dir(&dir)?;
    let data = gen_poses(&cfg.scenario).map_err(Failure::from_lib)?;
    let mut files = Vec::with_capacity(data.len());
    for (i, s) in data.into_iter().enumerate() {
        let (gt_name, x_name) = (format!("gt_{i:04}.jsonl"), format!("x_{i:04}.jsonl"));
        save_poses(&PoseFile::from(s.gt), dir.join(&gt_name)).map_err(Failure::from_lib)?;
        save_poses(&PoseFile::from(s.x), dir.join(&x_name)).map_err(Failure::from_lib)?;
        files.push((gt_name, x_name));
    }
    let manifest = ScenarioManifest {
        config: cfg.scenario.clone(),
        files,
    };
    write_file(&dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest).expect("serializes"))?;
    cfg.scenario.camera.save(dir.join("camera.json")).map_err(Failure::from_lib)?;
    cfg.scenario.skeleton.save(dir.join("skeleton.json")).map_err(Failure::from_lib)?;
    write_run_manifest(cfg, "gen", &cfg.out)?;
    println!("wrote {} poses to {}", manifest.files.len(), dir.display());
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<ScenarioManifest, Failure> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::config(format!("dataset manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("dataset manifest {}: {e}", path.display())))
}

/// Loads every 2D input and, unless `with_gt` is false, its ground truth.
pub fn load_dataset(dir: &Path, with_gt: bool) -> Result<(ScenarioManifest, Vec<Entry>), Failure> {
    let manifest = load_manifest(dir)?;
    let entries = manifest
        .files
        .iter()
        .map(|(gt, x)| {
            Ok(Entry {
                x: load_pose2d(dir.join(x)).map_err(Failure::from_lib)?,
                gt: if with_gt {
                    Some(load_pose3d(dir.join(gt)).map_err(Failure::from_lib)?)
                } else {
                    None
                },
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    Ok((manifest, entries))
}

fn schedule(cfg: &RunConfig) -> Result<NoiseSchedule, Failure> {
    NoiseSchedule::cosine(cfg.t_max).map_err(Failure::from_lib)
}

fn scale(cfg: &RunConfig) -> Result<SignalScale, Failure> {
    SignalScale::new(cfg.signal_scale).map_err(Failure::from_lib)
}

pub fn dump_schedule(cfg: &RunConfig) -> Result<(), Failure> {
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("schedule.csv"), &schedule(cfg)?.to_csv())
}

pub fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.denoiser.checkpoint.clone().unwrap_or_else(|| cfg.out.join("model.ckpt"))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), Failure> {
    let (_, entries) = load_dataset(&cfg.dataset_dir(), true)?;
    let items: Vec<TrainItem> = entries
        .into_iter()
        .map(|e| TrainItem {
            x: e.x,
            y0: e.gt.expect("loaded with ground truth"),
        })
        .collect();
    let joints = items.first().map(|i| i.x.joints()).ok_or_else(|| Failure::config("dataset is empty"))?;
    let shape = MlpShape::new(joints, cfg.denoiser.hidden_width, cfg.denoiser.hidden_layers, cfg.denoiser.target);
    shape.validate().map_err(|e| Failure::config(format!("denoiser: {e}")))?;
    let init = init_params(shape, cfg.seed).map_err(Failure::from_lib)?;
    let sched = schedule(cfg)?;
    let scale = scale(cfg)?;
    let outcome = train(init, &items, &sched, scale, &cfg.train).map_err(Failure::from_lib)?;
    create_dir(&cfg.out)?;
    let path = checkpoint_path(cfg);
    save_checkpoint(&path, &outcome.params, scale, cfg.t_max).map_err(Failure::from_lib)?;
    write_file(&cfg.out.join("loss.csv"), &outcome.loss_csv())?;
    write_run_manifest(cfg, "train", &cfg.out)?;
    match outcome.loss_history.last() {
        Some(l) => println!("final loss {l:e} after {} steps; checkpoint {}", outcome.loss_history.len(), path.display()),
        None => println!("no training steps run; checkpoint {}", path.display()),
    }
    Ok(())
}

/// The denoiser selected by the config: an oracle bound to one pose's
/// ground truth, or the trained network.
pub enum Model {
    Oracle(OracleKind),
    Network(DenoiserParams),
}

impl Model {
    pub fn from_config(cfg: &RunConfig, joints: usize) -> Result<Self, Failure> {
        if let Some(kind) = cfg.denoiser.oracle {
            return Ok(Model::Oracle(kind));
        }
        let path = checkpoint_path(cfg);
        if !path.exists() {
            return Err(Failure::config(format!(
                "no oracle selected and checkpoint {} does not exist",
                path.display()
            )));
        }
        let (header, params) = load_checkpoint(&path).map_err(Failure::from_lib)?;
        if header.shape.joints != joints {
            return Err(Failure::config(format!(
                "checkpoint expects {} joints, dataset has {joints}",
                header.shape.joints
            )));
        }
        if header.t_max != cfg.t_max || header.signal_scale.scale != cfg.signal_scale {
            return Err(Failure::config(
                "checkpoint was trained with a different t_max or signal scale",
            ));
        }
        Ok(Model::Network(params))
    }

    /// Runs the sampler for one input.
    pub fn sample(
        &self,
        cfg: &RunConfig,
        sampler: &SamplerConfig,
        x: &PoseSeq2D,
        gt: Option<&PoseSeq3D>,
    ) -> Result<SampleOutput, Failure> {
        let sched = schedule(cfg)?;
        let scale = scale(cfg)?;
        let flip = FlipContext {
            skeleton: &cfg.scenario.skeleton,
            image_width: cfg.image_width,
        };
        let run = |d: &dyn Denoiser| sample_traced(x, d, sampler, &sched, scale, Some(flip)).map_err(Failure::from_lib);
        match self {
            Model::Network(params) => run(&MlpDenoiser::new(params, &sched).map_err(Failure::from_lib)?),
            Model::Oracle(kind) => {
                let gt = gt.ok_or_else(|| Failure::missing_gt("oracle denoisers need ground truth"))?;
                let target = OracleTarget::new(gt, scale)
                    .with_flip(&cfg.scenario.skeleton)
                    .map_err(Failure::from_lib)?;
                match kind {
                    OracleKind::Perfect => run(&PerfectOracle::new(target)),
                    OracleKind::Contractive => {
                        run(&ContractiveOracle::new(target, cfg.denoiser.contraction).map_err(Failure::from_lib)?)
                    }
                    OracleKind::Noisy => {
                        run(&NoisyOracle::uniform(target, cfg.denoiser.noise_mm).map_err(Failure::from_lib)?)
                    }
                }
            }
        }
    }
}

fn check_gt_requests(cfg: &RunConfig, have_gt: bool) -> Result<(), Failure> {
    if have_gt {
        return Ok(());
    }
    if let Some(a) = cfg.aggregators.iter().find(|a| a.needs_ground_truth()) {
        return Err(Failure::missing_gt(format!("aggregator {a} needs ground truth")));
    }
    if cfg.denoiser.oracle.is_some() {
        return Err(Failure::missing_gt("oracle denoisers need ground truth"));
    }
    Ok(())
}

#[derive(Serialize)]
struct AggregationSummary {
    method: String,
    feasible_in_production: bool,
    /// Final poses, one file per dataset entry.
    poses: Vec<String>,
    /// Per-joint selections, one CSV per dataset entry.
    selections: Vec<String>,
}

#[derive(Serialize)]
struct HypothesisManifest {
    hypotheses: usize,
    iterations: usize,
    clamped_coordinates: usize,
    /// Per dataset entry, the hypothesis files in index order.
    files: Vec<Vec<String>>,
}

fn concat(poses: &[PoseSeq3D]) -> Result<PoseSeq3D, Failure> {
    PoseSeq3D::concat(poses).map_err(Failure::from_lib)
}

pub fn cmd_infer(cfg: &RunConfig, with_gt: bool) -> Result<(), Failure> {
    check_gt_requests(cfg, with_gt)?;
    let (_, entries) = load_dataset(&cfg.dataset_dir(), with_gt)?;
    let joints = entries.first().map(|e| e.x.joints()).ok_or_else(|| Failure::config("dataset is empty"))?;
    let model = Model::from_config(cfg, joints)?;
    let dir = cfg.out.join("infer");
    create_dir(&dir)?;

    let mut hyp_files = Vec::new();
    let mut clamped = 0;
    let mut finals: Vec<Vec<PoseSeq3D>> = vec![Vec::new(); cfg.aggregators.len()];
    let mut summaries: Vec<AggregationSummary> = cfg
        .aggregators
        .iter()
        .map(|a| AggregationSummary {
            method: a.to_string(),
            feasible_in_production: !a.needs_ground_truth(),
            poses: Vec::new(),
            selections: Vec::new(),
        })
        .collect();
    for (i, e) in entries.iter().enumerate() {
        let sampler = SamplerConfig {
            seed: pose_seed(cfg.seed, i),
            ..cfg.sampler.clone()
        };
        let out = model.sample(cfg, &sampler, &e.x, e.gt.as_ref())?;
        clamped += out.clamped;
        let pose_dir = format!("pose_{i:04}");
        create_dir(&dir.join(&pose_dir))?;
        let mut names = Vec::new();
        for (h, hyp) in out.hypotheses.iter().enumerate() {
            let name = format!("{pose_dir}/hypothesis_{h:02}.jsonl");
            save_poses(&PoseFile::from(hyp.clone()), dir.join(&name)).map_err(Failure::from_lib)?;
            names.push(name);
        }
        hyp_files.push(names);
        for (k, a) in cfg.aggregators.iter().enumerate() {
            let report = aggregate(*a, &out.hypotheses, e, cfg)?;
            let pose_name = format!("{pose_dir}/{a}.jsonl");
            let sel_name = format!("{pose_dir}/{a}_selection.csv");
            save_poses(&PoseFile::from(report.pose.clone()), dir.join(&pose_name)).map_err(Failure::from_lib)?;
            write_file(&dir.join(&sel_name), &report.to_csv())?;
            summaries[k].poses.push(pose_name);
            summaries[k].selections.push(sel_name);
            finals[k].push(report.pose);
        }
    }
    let manifest = HypothesisManifest {
        hypotheses: cfg.sampler.hypotheses,
        iterations: cfg.sampler.iterations,
        clamped_coordinates: clamped,
        files: hyp_files,
    };
    write_file(&dir.join("hypotheses.json"), &serde_json::to_string_pretty(&manifest).expect("serializes"))?;
    write_file(&dir.join("aggregation.json"), &serde_json::to_string_pretty(&summaries).expect("serializes"))?;

    if with_gt {
        let gt = concat(&entries.iter().map(|e| e.gt.clone().expect("loaded")).collect::<Vec<_>>())?;
        let rows = cfg
            .aggregators
            .iter()
            .zip(&finals)
            .map(|(a, poses)| {
                Ok(MetricRow {
                    method: a.to_string(),
                    hypotheses: cfg.sampler.hypotheses,
                    iterations: cfg.sampler.iterations,
                    report: MetricReport::evaluate(&concat(poses)?, &gt, cfg.alignment).map_err(Failure::from_lib)?,
                })
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        let csv = metrics_csv(&rows);
        write_file(&dir.join("metrics.csv"), &csv)?;
        print!("{csv}");
    }
    if clamped > 0 {
        eprintln!("warning: {clamped} DDIM coefficients were clamped to zero");
    }
    write_run_manifest(cfg, "infer", &cfg.out)?;
    Ok(())
}

fn aggregate(a: Aggregator, hs: &HypothesisSet, e: &Entry, cfg: &RunConfig) -> Result<AggregationReport, Failure> {
    a.run(hs, &e.x, &cfg.scenario.camera, e.gt.as_ref()).map_err(Failure::from_lib)
}

/// Sweep rows for every `(H, K, aggregator)`; hypotheses for smaller `H`
/// are prefixes of the largest set, exactly as a separate run would produce.
pub fn bench_rows(cfg: &RunConfig) -> Result<Vec<MetricRow>, Failure> {
    let grid = &cfg.bench;
    if grid.hypotheses.is_empty() || grid.iterations.is_empty() || grid.hypotheses.contains(&0) {
        return Err(Failure::config("bench grid is empty"));
    }
    check_gt_requests(cfg, true)?;
    let (_, entries) = load_dataset(&cfg.dataset_dir(), true)?;
    let joints = entries.first().map(|e| e.x.joints()).ok_or_else(|| Failure::config("dataset is empty"))?;
    let model = Model::from_config(cfg, joints)?;
    let h_max = *grid.hypotheses.iter().max().expect("non-empty");
    let gt = concat(&entries.iter().map(|e| e.gt.clone().expect("loaded")).collect::<Vec<_>>())?;
    let mut rows = Vec::new();
    for &k in &grid.iterations {
        let sets = entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let sampler = SamplerConfig {
                    hypotheses: h_max,
                    iterations: k,
                    seed: pose_seed(cfg.seed, i),
                    ..cfg.sampler.clone()
                };
                sampler.validate(cfg.t_max).map_err(|e| Failure::config(format!("bench grid: {e}")))?;
                Ok(model.sample(cfg, &sampler, &e.x, e.gt.as_ref())?.hypotheses)
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        for &h in &grid.hypotheses {
            for a in &cfg.aggregators {
                let poses = sets
                    .iter()
                    .zip(&entries)
                    .map(|(set, e)| Ok(aggregate(*a, &set.prefix(h).map_err(Failure::from_lib)?, e, cfg)?.pose))
                    .collect::<Result<Vec<_>, Failure>>()?;
                rows.push(MetricRow {
                    method: a.to_string(),
                    hypotheses: h,
                    iterations: k,
                    report: MetricReport::evaluate(&concat(&poses)?, &gt, cfg.alignment).map_err(Failure::from_lib)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<(), Failure> {
    let rows = bench_rows(cfg)?;
    let csv = metrics_csv(&rows);
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("bench.csv"), &csv)?;
    write_run_manifest(cfg, "bench", &cfg.out)?;
    print!("{csv}");
    Ok(())
}

/// Writes `<out>/render/frame_XXXX.svg` for every frame; returns the count.
pub fn cmd_render(
    cfg: &RunConfig,
    gt: Option<&PoseSeq3D>,
    hypotheses: &[PoseSeq3D],
    size: (f64, f64),
) -> Result<usize, Failure> {
    let first = gt.or(hypotheses.first()).ok_or_else(|| Failure::config("nothing to render"))?;
    let joints = cfg.scenario.skeleton.num_joints();
    if gt.into_iter().chain(hypotheses).any(|p| p.frames() != first.frames() || p.joints() != joints) {
        return Err(Failure::config(format!(
            "pose files must share a frame count and match the {joints}-joint skeleton"
        )));
    }
    let dir = cfg.out.join("render");
    create_dir(&dir)?;
    for f in 0..first.frames() {
        let mut warnings = Vec::new();
        let svg = render_frame(f, gt, hypotheses, &cfg.scenario.skeleton, &cfg.scenario.camera, size, &mut warnings);
        for w in warnings {
            eprintln!("warning: {w}");
        }
        write_file(&dir.join(format!("frame_{f:04}.svg")), &svg)?;
    }
    Ok(first.frames())
}
