//! Pipeline configuration: loss weights, optimizer settings, quality
//! settings and per-category scale ranges, read from TOML.
//!
//! Every section is optional and falls back to its defaults. Unknown keys
//! are errors.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::affordance::{sample_scales, AffordanceObject, CategoryScaleRange};
use crate::error::{Error, Result};
use crate::quality::QualitySettings;
use crate::synthesis::{LossWeights, OptimizerSettings};

/// Relative half-width of the scale range used for categories without an
/// entry.
pub const FALLBACK_SCALE_SPREAD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub weights: LossWeights,
    pub optimizer: OptimizerSettings,
    pub quality: QualitySettings,
    /// Maximum-extent ranges (m) per category. The shipped values are
    /// illustrative, not measured.
    pub scales: Vec<CategoryScaleRange>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            weights: LossWeights::default(),
            optimizer: OptimizerSettings::default(),
            quality: QualitySettings::default(),
            scales: default_scale_ranges(),
        }
    }
}

/// Scale ranges for the bundled categories plus a drill entry.
pub fn default_scale_ranges() -> Vec<CategoryScaleRange> {
    [("cylinder", 0.16, 0.24), ("drill", 0.15, 0.35), ("spray_bottle", 0.18, 0.26)]
        .into_iter()
        .map(|(c, lo, hi)| CategoryScaleRange {
            category: c.into(),
            s_low: lo,
            s_high: hi,
            n_scales: 15,
        })
        .collect()
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text).map_err(|e| Error::load(path.display().to_string(), e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.optimizer.validate()?;
        self.quality.validate()?;
        let mut seen = BTreeSet::new();
        for r in &self.scales {
            r.validate()?;
            if !seen.insert(r.category.as_str()) {
                return Err(Error::invalid(format!("duplicate scale range for {:?}", r.category)));
            }
        }
        Ok(())
    }

    pub fn scale_range(&self, category: &str) -> Option<&CategoryScaleRange> {
        self.scales.iter().find(|r| r.category == category)
    }

    /// Scale range for `obj`: the configured entry for its category, or
    /// ±[`FALLBACK_SCALE_SPREAD`] around its current scale.
    pub fn scale_range_for(&self, obj: &AffordanceObject) -> CategoryScaleRange {
        self.scale_range(&obj.category).cloned().unwrap_or_else(|| {
            log::warn!("no scale range for category {:?}; using ±20% of {:.3} m", obj.category, obj.scale);
            CategoryScaleRange {
                category: obj.category.clone(),
                s_low: obj.scale * (1.0 - FALLBACK_SCALE_SPREAD),
                s_high: obj.scale * (1.0 + FALLBACK_SCALE_SPREAD),
                n_scales: 15,
            }
        })
    }

    /// Scales to synthesize `obj` at; `n_scales` overrides the range's count.
    pub fn scales_for(&self, obj: &AffordanceObject, n_scales: Option<usize>) -> Result<Vec<f64>> {
        let mut r = self.scale_range_for(obj);
        if let Some(n) = n_scales {
            r.n_scales = n;
        }
        r.validate()?;
        Ok(sample_scales(&r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{asset, fixture_object};

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let d = PipelineConfig::default();
        let text = d.to_toml_string().unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), d);
    }

    #[test]
    fn shipped_default_file_matches_the_defaults() {
        let path = asset("../config/default.toml");
        assert_eq!(PipelineConfig::load(&path).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = PipelineConfig::from_toml_str(
            "[weights]\nlambda_f = 50.0\n[quality.thresholds]\nmax_dg = 0.03\n[optimizer]\nfunctional_modes = [\"index\", \"thumb\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.weights.lambda_f, 50.0);
        assert_eq!(cfg.weights.lambda_ip, LossWeights::default().lambda_ip);
        assert_eq!(cfg.quality.thresholds.max_dg, 0.03);
        assert_eq!(cfg.quality.thresholds.max_df, 0.002);
        assert_eq!(cfg.optimizer.functional_modes.len(), 2);
        assert_eq!(cfg.optimizer.max_steps, 200);
    }

    #[test]
    fn bad_files_are_rejected() {
        for text in [
            "[weights]\nlambda_q = 1.0\n",
            "[weights]\nlambda_f = -1.0\n",
            "[optimizer]\nmax_steps = 0\n",
            "[quality.thresholds]\nmax_dip = 0.0\n",
            "[quality.wrench]\nf_max = -1.0\n",
            "[[scales]]\ncategory = \"mug\"\ns_low = 0.2\ns_high = 0.1\n",
            "[[scales]]\ncategory = \"mug\"\ns_low = 0.1\ns_high = 0.2\n[[scales]]\ncategory = \"mug\"\ns_low = 0.1\ns_high = 0.3\n",
            "not toml",
        ] {
            assert!(PipelineConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn fifteen_scales_by_default() {
        let cfg = PipelineConfig::default();
        let obj = fixture_object("cylinder");
        let s = cfg.scales_for(&obj, None).unwrap();
        assert_eq!(s.len(), 15);
        assert_eq!((s[0], s[14]), (0.16, 0.24));
        assert_eq!(cfg.scales_for(&obj, Some(2)).unwrap(), vec![0.16, 0.24]);
        assert!(cfg.scales_for(&obj, Some(0)).is_err());
    }

    #[test]
    fn unknown_category_falls_back_around_the_native_scale() {
        let cfg = PipelineConfig {
            scales: Vec::new(),
            ..Default::default()
        };
        let obj = fixture_object("spray_bottle");
        let r = cfg.scale_range_for(&obj);
        assert_eq!(r.n_scales, 15);
        assert!((r.s_low - obj.scale * 0.8).abs() < 1e-12);
        assert!((r.s_high - obj.scale * 1.2).abs() < 1e-12);
    }
}
