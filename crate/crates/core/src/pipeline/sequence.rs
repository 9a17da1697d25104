use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, Aggregate, EvaluationRecord};
use super::formats::{
    detections_per_frame, list_frames, load_model, parse_toml, read_depth_png, read_depth_raw, read_detections,
    read_joints, read_mask_png, read_trajectory, write_joints, write_trajectory,
};
use super::preprocess::preprocess;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthFrame};
use crate::kinematics::Pose;
use crate::model::SkinnedModel;
use crate::solver::{track_sequence, FrameResult, TrackerConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthFormat {
    /// 16-bit single-channel PNG in millimetres.
    #[default]
    Png,
    /// Headerless little-endian `u16`, dimensions from the intrinsics.
    Raw,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Png => "png",
            DepthFormat::Raw => "raw",
        }
    }
}

fn default_threshold() -> f64 {
    1000.0
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

/// Everything needed to track one recorded or synthetic sequence. Relative
/// paths are resolved against the configuration file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    /// Hand model sidecar.
    pub model: PathBuf,
    /// Object model sidecars, merged after the hand.
    #[serde(default)]
    pub objects: Vec<PathBuf>,
    /// Directory of depth frames, read in file-name order.
    pub frames: PathBuf,
    #[serde(default)]
    pub depth_format: DepthFormat,
    pub intrinsics: CameraIntrinsics,
    /// mm
    #[serde(default = "default_threshold")]
    pub depth_threshold: f64,
    /// Directory of 8-bit mask PNGs, one per frame in name order.
    #[serde(default)]
    pub masks: Option<PathBuf>,
    #[serde(default)]
    pub detections: Option<PathBuf>,
    /// Trajectory CSV whose first row initializes tracking.
    #[serde(default)]
    pub initial_pose: Option<PathBuf>,
    /// Joint CSV for evaluation.
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    #[serde(default)]
    pub joint_subset: Option<Vec<usize>>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub tracker: TrackerConfig,
}

impl SequenceConfig {
    pub fn parse(text: &str, source: &str, base: &Path) -> Result<Self> {
        let mut c: SequenceConfig = parse_toml(text, source)?;
        c.resolve(base);
        Ok(c)
    }

    /// Parses the file and checks that every input path exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let c = Self::parse(&text, &path.display().to_string(), base)?;
        c.check_paths()?;
        c.intrinsics.validate()?;
        Ok(c)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.model);
        self.objects.iter_mut().for_each(join);
        join(&mut self.frames);
        join(&mut self.output);
        for p in [&mut self.masks, &mut self.detections, &mut self.initial_pose, &mut self.ground_truth]
            .into_iter()
            .flatten()
        {
            join(p);
        }
    }

    pub fn check_paths(&self) -> Result<()> {
        let inputs = [Some(&self.model), Some(&self.frames)]
            .into_iter()
            .flatten()
            .chain(&self.objects)
            .chain([&self.masks, &self.detections, &self.initial_pose, &self.ground_truth].into_iter().flatten());
        for p in inputs {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// The hand, merged with the objects when there are any.
    pub fn load_model(&self) -> Result<SkinnedModel> {
        let hand = load_model(&self.model)?;
        if self.objects.is_empty() {
            return Ok(hand);
        }
        let mut models = vec![hand];
        for p in &self.objects {
            models.push(load_model(p)?);
        }
        SkinnedModel::merge("scene", &models)
    }

    /// Reads, masks and thresholds every frame.
    pub fn load_frames(&self) -> Result<Vec<DepthFrame>> {
        let files = list_frames(&self.frames, self.depth_format.extension())?;
        let masks = match &self.masks {
            Some(dir) => {
                let m = list_frames(dir, "png")?;
                if m.len() != files.len() {
                    return Err(Error::LengthMismatch(format!("{} masks for {} frames", m.len(), files.len())));
                }
                m.into_iter().map(Some).collect()
            }
            None => vec![None; files.len()],
        };
        files
            .iter()
            .zip(masks)
            .map(|(f, m)| {
                let raw = match self.depth_format {
                    DepthFormat::Png => read_depth_png(f, &self.intrinsics)?,
                    DepthFormat::Raw => read_depth_raw(f, &self.intrinsics)?,
                };
                let mask = m.map(|p| read_mask_png(&p, &self.intrinsics)).transpose()?;
                preprocess(&raw, self.depth_threshold, mask.as_deref())
            })
            .collect()
    }

    pub fn initial_pose(&self, model: &SkinnedModel) -> Result<Pose> {
        let pose = match &self.initial_pose {
            Some(p) => read_trajectory(p)?
                .into_iter()
                .next()
                .ok_or_else(|| Error::Config(format!("{} holds no pose", p.display())))?,
            None => Pose::zeros(&model.skeleton),
        };
        pose.check(&model.skeleton)?;
        Ok(pose)
    }
}

/// Result of [`run_sequence`].
#[derive(Clone, Debug)]
pub struct SequenceOutput {
    pub results: Vec<FrameResult>,
    pub evaluation: Option<EvaluationRecord>,
}

impl SequenceOutput {
    pub fn poses(&self) -> Vec<Pose> {
        self.results.iter().map(|r| r.pose.clone()).collect()
    }
}

/// Loads inputs, tracks every frame and evaluates against ground truth when
/// configured.
pub fn run_sequence(config: &SequenceConfig) -> Result<SequenceOutput> {
    let model = config.load_model()?;
    let frames = config.load_frames()?;
    let detections = match &config.detections {
        Some(p) => detections_per_frame(&read_detections(p)?, &frames),
        None => Vec::new(),
    };
    let initial = config.initial_pose(&model)?;
    let results = track_sequence(&model, &frames, &detections, &initial, &config.tracker);
    let evaluation = match &config.ground_truth {
        Some(p) => {
            let truth = read_joints(p)?;
            let est = results
                .iter()
                .map(|r| model.joint_positions(&r.pose))
                .collect::<Result<Vec<_>>>()?;
            Some(evaluate(&est, &truth, &config.intrinsics, config.joint_subset.as_deref())?)
        }
        None => None,
    };
    Ok(SequenceOutput { results, evaluation })
}

/// Per-frame solver report as CSV text.
pub fn format_report(results: &[FrameResult]) -> String {
    let mut out = String::from("frame,iterations,final_energy,displacement_mm,converged,stable,object_displacement_mm,error\n");
    for (f, r) in results.iter().enumerate() {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        match &r.report {
            Some(rep) => {
                let (stable, disp) = match &rep.stability {
                    Some(s) => (s.stable.to_string(), s.displacement.to_string()),
                    None => (String::new(), String::new()),
                };
                let _ = writeln!(
                    out,
                    "{f},{},{},{},{},{stable},{disp},{err}",
                    rep.iterations, rep.final_energy, rep.displacement, rep.converged
                );
            }
            None => {
                let _ = writeln!(out, "{f},0,,,false,,,{err}");
            }
        }
    }
    out
}

/// Summary statistics as TOML text.
pub fn format_summary(record: &EvaluationRecord) -> String {
    #[derive(Serialize)]
    struct Summary<'a> {
        error_2d_px: &'a Aggregate,
        error_3d_mm: &'a Aggregate,
    }
    toml::to_string(&Summary {
        error_2d_px: &record.summary_2d,
        error_3d_mm: &record.summary_3d,
    })
    .unwrap_or_default()
}

/// Writes `poses.csv`, `joints.csv`, `report.csv` and, with ground truth,
/// `metrics.toml` into `dir`.
pub fn write_outputs(dir: &Path, model: &SkinnedModel, output: &SequenceOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let poses = output.poses();
    write_trajectory(&dir.join("poses.csv"), &poses)?;
    let joints = poses
        .iter()
        .map(|p| model.joint_positions(p))
        .collect::<Result<Vec<_>>>()?;
    write_joints(&dir.join("joints.csv"), &joints)?;
    let report = dir.join("report.csv");
    fs::write(&report, format_report(&output.results)).map_err(|e| Error::io(&report, e))?;
    if let Some(ev) = &output.evaluation {
        let path = dir.join("metrics.toml");
        fs::write(&path, format_summary(ev)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_resolves_relative_paths() {
        let text = r#"
model = "hand.toml"
frames = "depth"
output = "/tmp/out"

[intrinsics]
fx = 500.0
fy = 500.0
cx = 319.5
cy = 239.5
width = 640
height = 480

[tracker]
metric = "p2p"
stopping = { kind = "epsilon", eps_mm = 0.2, max_iterations = 50 }

[tracker.weights]
gamma_c = 0.0
"#;
        let c = SequenceConfig::parse(text, "c.toml", Path::new("/data/seq")).unwrap();
        assert_eq!(c.model, PathBuf::from("/data/seq/hand.toml"));
        assert_eq!(c.frames, PathBuf::from("/data/seq/depth"));
        assert_eq!(c.output, PathBuf::from("/tmp/out"));
        assert_eq!(c.depth_threshold, 1000.0);
        assert_eq!(c.tracker.metric, crate::data_terms::Metric::PointToPoint);
        assert_eq!(c.tracker.weights.gamma_c, 0.0);
        assert_eq!(c.tracker.weights.gamma_ph, 10.0);
        assert!(c.check_paths().is_err());
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "model = \"m\"\nframes = \"f\"\nbogus = 1\n";
        match SequenceConfig::parse(text, "c.toml", Path::new(".")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
