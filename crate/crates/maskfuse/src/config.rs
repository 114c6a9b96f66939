//! Pipeline configuration file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use indexmap::IndexMap;
use maskfuse_core::{
    EnsembleConfig, EvalParams, NmsConfig, NmsMethod, Overlap, RegionRule, ScaleSize,
    SemanticFusionConfig, WeightsMode,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::read_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    SoftNms,
    SemanticFusion,
    Ensemble,
    TtaMerge,
    Evaluate,
}

impl Stage {
    pub const DEFAULT_ORDER: [Stage; 4] = [
        Stage::SoftNms,
        Stage::SemanticFusion,
        Stage::Ensemble,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::SoftNms => "soft-nms",
            Stage::SemanticFusion => "semantic-fusion",
            Stage::Ensemble => "ensemble",
            Stage::TtaMerge => "tta-merge",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Stage::SoftNms,
            Stage::SemanticFusion,
            Stage::Ensemble,
            Stage::TtaMerge,
            Stage::Evaluate,
        ]
        .into_iter()
        .find(|stage| stage.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Parses a comma-separated stage list such as `soft-nms,evaluate`.
pub fn parse_stage_list(list: &str) -> Result<Vec<Stage>> {
    let stages = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Stage::from_str)
        .collect::<Result<Vec<_>>>()?;
    if stages.is_empty() {
        return Err(Error::Config("stage list is empty".into()));
    }
    Ok(stages)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Hard,
    SoftLinear,
    SoftGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapName {
    BoxIou,
    MaskIou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EvalOverlap {
    Mask,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsModeName {
    Explicit,
    MapNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionRuleName {
    BboxClip,
    WholeImage,
}

impl From<MethodName> for NmsMethod {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Hard => NmsMethod::Hard,
            MethodName::SoftLinear => NmsMethod::SoftLinear,
            MethodName::SoftGaussian => NmsMethod::SoftGaussian,
        }
    }
}

impl From<OverlapName> for Overlap {
    fn from(o: OverlapName) -> Self {
        match o {
            OverlapName::BoxIou => Overlap::BoxIou,
            OverlapName::MaskIou => Overlap::MaskIou,
        }
    }
}

impl From<EvalOverlap> for Overlap {
    fn from(o: EvalOverlap) -> Self {
        match o {
            EvalOverlap::Mask => Overlap::MaskIou,
            EvalOverlap::Box => Overlap::BoxIou,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmsSection {
    pub method: MethodName,
    pub overlap: OverlapName,
    pub iou_threshold: f64,
    pub sigma: f64,
    pub prune_threshold: f64,
}

impl Default for NmsSection {
    fn default() -> Self {
        Self {
            method: MethodName::SoftGaussian,
            overlap: OverlapName::BoxIou,
            iou_threshold: 0.3,
            sigma: 0.5,
            prune_threshold: 0.001,
        }
    }
}

impl NmsSection {
    pub fn to_core(&self) -> NmsConfig {
        NmsConfig {
            method: self.method.into(),
            overlap: self.overlap.into(),
            iou_threshold: self.iou_threshold,
            sigma: self.sigma,
            prune_threshold: self.prune_threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticSection {
    pub tau1: f64,
    pub region_rule: RegionRuleName,
}

impl Default for SemanticSection {
    fn default() -> Self {
        Self {
            tau1: 0.5,
            region_rule: RegionRuleName::BboxClip,
        }
    }
}

impl SemanticSection {
    pub fn to_core(&self) -> SemanticFusionConfig {
        SemanticFusionConfig {
            tau1: self.tau1,
            region_rule: match self.region_rule {
                RegionRuleName::BboxClip => RegionRule::BboxClip,
                RegionRuleName::WholeImage => RegionRule::WholeImage,
            },
        }
    }
}

fn ensemble_nms() -> NmsSection {
    NmsSection {
        method: MethodName::Hard,
        overlap: OverlapName::MaskIou,
        iou_threshold: 0.5,
        ..NmsSection::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub weights_mode: WeightsModeName,
    pub model_maps: Option<BTreeMap<String, f64>>,
    /// Explicit per-model weights. Without it every model weighs 1.0.
    pub weights: Option<BTreeMap<String, f64>>,
    #[serde(default = "ensemble_nms")]
    pub nms: NmsSection,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            weights_mode: WeightsModeName::Explicit,
            model_maps: None,
            weights: None,
            nms: ensemble_nms(),
        }
    }
}

impl EnsembleSection {
    pub fn to_core(&self) -> EnsembleConfig {
        EnsembleConfig {
            weights_mode: match self.weights_mode {
                WeightsModeName::Explicit => WeightsMode::Explicit,
                WeightsModeName::MapNormalized => WeightsMode::MapNormalized,
            },
            model_maps: self.model_maps.clone(),
            nms: NmsConfig {
                overlap: Overlap::MaskIou,
                ..self.nms.to_core()
            },
        }
    }

    /// Weight of `model_id` in explicit mode; NaN when a weights map is given
    /// but lacks the model, which the ensemble rejects as unresolved.
    pub fn explicit_weight(&self, model_id: &str) -> f64 {
        match &self.weights {
            None => 1.0,
            Some(w) => w.get(model_id).copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub max_detections: usize,
    pub overlap: EvalOverlap,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            max_detections: 100,
            overlap: EvalOverlap::Mask,
        }
    }
}

impl EvalSection {
    pub fn to_core(&self) -> EvalParams {
        EvalParams {
            max_detections: self.max_detections,
            overlap: self.overlap.into(),
            ..EvalParams::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub gt_path: PathBuf,
    /// model id → prediction file, in the order models are reported.
    pub prediction_paths: IndexMap<String, PathBuf>,
    #[serde(default)]
    pub semantic_path: Option<PathBuf>,
    /// Ground-truth semantic maps; enables the mean IoU row.
    #[serde(default)]
    pub semantic_gt_path: Option<PathBuf>,
    /// model id → `[height, width]` the file was inferred at. Ids of the form
    /// `base@tag` sharing a base are merged by `tta-merge`.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub scale_tags: IndexMap<String, [usize; 2]>,
    /// Model refined by semantic fusion and evaluated when no ensemble runs.
    #[serde(default)]
    pub primary_model: Option<String>,
}

impl DatasetConfig {
    pub fn scale(&self, model_id: &str) -> Option<ScaleSize> {
        self.scale_tags
            .get(model_id)
            .map(|[h, w]| ScaleSize::new(*h, *w))
    }
}

/// Part of a model id before `@`.
pub fn base_model(model_id: &str) -> &str {
    model_id.split_once('@').map_or(model_id, |(base, _)| base)
}

fn default_stages() -> Vec<Stage> {
    Stage::DEFAULT_ORDER.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub datasets: Vec<DatasetConfig>,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub semantic: SemanticSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub nms: NmsSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let value = read_value(path).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg: PipelineConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for d in &mut self.datasets {
            fix(&mut d.gt_path);
            d.prediction_paths.values_mut().for_each(fix);
            d.semantic_path.iter_mut().for_each(fix);
            d.semantic_gt_path.iter_mut().for_each(fix);
        }
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.stages.is_empty() {
            return fail("stage list is empty".into());
        }
        if self.datasets.is_empty() {
            return fail("no datasets configured".into());
        }
        self.nms.to_core().validate()?;
        self.ensemble.to_core().nms.validate()?;
        self.semantic.to_core().validate()?;
        self.eval.to_core().validate()?;

        let mut names = BTreeSet::new();
        for d in &self.datasets {
            if d.name.is_empty() || d.name.contains(['/', '\\']) || d.name.starts_with('.') {
                return fail(format!(
                    "dataset name `{}` is not usable as a file name",
                    d.name
                ));
            }
            if !names.insert(d.name.as_str()) {
                return fail(format!("dataset `{}` is listed twice", d.name));
            }
            if d.prediction_paths.is_empty() {
                return fail(format!("dataset `{}` has no prediction files", d.name));
            }
            if let Some(primary) = &d.primary_model {
                let known = d.prediction_paths.keys().any(|k| base_model(k) == primary);
                if !known {
                    return fail(format!(
                        "dataset `{}`: primary model `{primary}` has no prediction file",
                        d.name
                    ));
                }
            }
            if let Some(id) = d
                .scale_tags
                .keys()
                .find(|k| !d.prediction_paths.contains_key(*k))
            {
                return fail(format!(
                    "dataset `{}`: scale tag for unknown model `{id}`",
                    d.name
                ));
            }
            if let Some((id, _)) = d.scale_tags.iter().find(|(_, [h, w])| *h == 0 || *w == 0) {
                return fail(format!(
                    "dataset `{}`: scale of `{id}` has zero area",
                    d.name
                ));
            }
            if self.stages.contains(&Stage::TtaMerge) && d.scale_tags.is_empty() {
                return fail(format!("dataset `{}`: tta-merge needs scale_tags", d.name));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> serde_json::Value {
        json!({
            "datasets": [{"name": "cable", "gt_path": "gt.json",
                          "prediction_paths": {"htc": "htc.json"}}]
        })
    }

    #[test]
    fn defaults() {
        let cfg: PipelineConfig = serde_json::from_value(minimal()).unwrap();
        assert_eq!(cfg.stages, Stage::DEFAULT_ORDER);
        assert_eq!(cfg.nms.to_core(), NmsConfig::default());
        assert_eq!(cfg.ensemble.to_core(), EnsembleConfig::default());
        assert_eq!(cfg.semantic.to_core(), SemanticFusionConfig::default());
        assert_eq!(cfg.eval.to_core(), EvalParams::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_stage_is_a_config_error() {
        let mut v = minimal();
        v["stages"] = json!(["soft-nms", "sharpen"]);
        assert!(serde_json::from_value::<PipelineConfig>(v).is_err());
        assert!(matches!(
            parse_stage_list("evaluate,sharpen"),
            Err(Error::Config(_))
        ));
        assert_eq!(
            parse_stage_list("ensemble, evaluate").unwrap(),
            vec![Stage::Ensemble, Stage::Evaluate]
        );
    }

    #[test]
    fn empty_stage_list_rejected() {
        let mut v = minimal();
        v["stages"] = json!([]);
        let cfg: PipelineConfig = serde_json::from_value(v).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(parse_stage_list(" , ").is_err());
    }

    #[test]
    fn tta_needs_scale_tags() {
        let mut v = minimal();
        v["stages"] = json!(["tta-merge", "evaluate"]);
        let cfg: PipelineConfig = serde_json::from_value(v.clone()).unwrap();
        assert!(cfg.validate().is_err());
        v["datasets"][0]["prediction_paths"] = json!({"htc@a": "a.json", "htc@b": "b.json"});
        v["datasets"][0]["scale_tags"] = json!({"htc@a": [64, 64], "htc@b": [32, 32]});
        let cfg: PipelineConfig = serde_json::from_value(v).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.datasets[0].scale("htc@b"), Some(ScaleSize::new(32, 32)));
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v = minimal();
        v["nms"] = json!({"method": "hard", "treshold": 0.5});
        assert!(serde_json::from_value::<PipelineConfig>(v).is_err());
    }

    #[test]
    fn relative_paths_follow_config() {
        let mut cfg: PipelineConfig = serde_json::from_value(minimal()).unwrap();
        cfg.resolve_paths(Path::new("/data/run"));
        assert_eq!(cfg.datasets[0].gt_path, Path::new("/data/run/gt.json"));
        assert_eq!(cfg.output_dir, Path::new("/data/run/out"));
    }

    #[test]
    fn explicit_weights() {
        let mut e = EnsembleSection::default();
        assert_eq!(e.explicit_weight("x"), 1.0);
        e.weights = Some([("a".to_string(), 0.5)].into());
        assert_eq!(e.explicit_weight("a"), 0.5);
        assert!(e.explicit_weight("b").is_nan());
    }

    #[test]
    fn base_names() {
        assert_eq!(base_model("htc@1024x1024"), "htc");
        assert_eq!(base_model("htc"), "htc");
    }
}
