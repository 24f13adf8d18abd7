//! Human-readable pruning plan.
//!
//! A plan is a pretty-printed JSON document. Field order is fixed by the struct
//! definitions and maps are ordered, so identical plans serialize to identical
//! bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::SelectionMode;

pub const PLAN_FORMAT: &str = "acsp-plan/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub format: String,
    /// Effective run configuration, echoed for reproducibility.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    pub layers: Vec<PlanEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub layer_id: usize,
    /// Component count of the layer when the plan was made.
    pub n_components: usize,
    pub kept_indices: Vec<usize>,
    pub k_selected: usize,
    #[serde(default)]
    pub mss_curve_ref: Option<String>,
    pub selection_mode: SelectionMode,
    pub knee_degree: usize,
    #[serde(default)]
    pub knee: Option<KneeProvenance>,
    #[serde(default)]
    pub warning: Option<String>,
}

/// Knee diagnostics stored alongside a plan entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KneeProvenance {
    /// `None` when no knee was found and the layer was kept whole.
    pub k_prime: Option<usize>,
    pub degree: usize,
    pub fitted_coeffs: Vec<f64>,
    pub max_difference: f64,
    pub threshold: f64,
    pub curvature_at_knee: Option<f64>,
}

impl Default for PruningPlan {
    fn default() -> Self {
        PruningPlan {
            format: PLAN_FORMAT.to_string(),
            config: BTreeMap::new(),
            layers: Vec::new(),
        }
    }
}

impl PlanEntry {
    /// Entry that keeps exactly `kept_indices` of an `n_components` layer.
    pub fn new(layer_id: usize, n_components: usize, kept_indices: Vec<usize>) -> Self {
        PlanEntry {
            layer_id,
            n_components,
            k_selected: kept_indices.len(),
            kept_indices,
            mss_curve_ref: None,
            selection_mode: SelectionMode::Weighted,
            knee_degree: 2,
            knee: None,
            warning: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedPlan(format!("layer {}: {msg}", self.layer_id)));
        if self.k_selected != self.kept_indices.len() {
            return bad(format!(
                "k_selected = {} but {} indices are listed",
                self.k_selected,
                self.kept_indices.len()
            ));
        }
        if self.k_selected < 2 || self.k_selected > self.n_components {
            return bad(format!(
                "k_selected = {} outside [2, {}]",
                self.k_selected, self.n_components
            ));
        }
        if let Some(&i) = self.kept_indices.iter().find(|&&i| i >= self.n_components) {
            return bad(format!("kept index {i} >= N = {}", self.n_components));
        }
        if self.kept_indices.windows(2).any(|w| w[0] >= w[1]) {
            return bad("kept indices are not strictly increasing".into());
        }
        Ok(())
    }

    pub fn keeps_everything(&self) -> bool {
        self.kept_indices.len() == self.n_components
    }
}

impl PruningPlan {
    pub fn validate(&self) -> Result<()> {
        if self.format != PLAN_FORMAT {
            return Err(Error::MalformedPlan(format!(
                "unknown plan format {:?}",
                self.format
            )));
        }
        for e in &self.layers {
            e.validate()?;
        }
        if self.layers.windows(2).any(|w| w[0].layer_id >= w[1].layer_id) {
            return Err(Error::MalformedPlan(
                "layer entries must be in strictly increasing layer order".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: PruningPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }
}

pub fn write_plan(plan: &PruningPlan, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, plan.to_json()?)?;
    Ok(())
}

pub fn read_plan(path: impl AsRef<Path>) -> Result<PruningPlan> {
    PruningPlan::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan_with(entry: PlanEntry) -> PruningPlan {
        PruningPlan {
            layers: vec![entry],
            ..PruningPlan::default()
        }
    }

    #[test]
    fn simple_plan_round_trips() {
        let mut entry = PlanEntry::new(1, 6, vec![0, 2, 5]);
        entry.knee = Some(KneeProvenance {
            k_prime: Some(3),
            degree: 2,
            fitted_coeffs: vec![0.1, 0.25, -0.01],
            max_difference: 0.4,
            threshold: 0.25,
            curvature_at_knee: Some(1.5),
        });
        let mut plan = plan_with(entry);
        plan.config.insert("seed".into(), "7".into());
        let text = plan.to_json().unwrap();
        assert_eq!(PruningPlan::from_json(&text).unwrap(), plan);
        assert!(text.contains("\"kept_indices\""));
    }

    #[test]
    fn index_equal_to_n_is_malformed() {
        let plan = plan_with(PlanEntry::new(1, 6, vec![0, 6]));
        assert!(matches!(plan.validate(), Err(Error::MalformedPlan(_))));
    }

    #[test]
    fn unsorted_or_duplicate_indices_are_malformed() {
        for kept in [vec![3, 1], vec![2, 2, 4]] {
            let plan = plan_with(PlanEntry::new(1, 6, kept));
            assert!(matches!(plan.validate(), Err(Error::MalformedPlan(_))));
        }
    }

    #[test]
    fn k_below_two_is_malformed() {
        let plan = plan_with(PlanEntry::new(1, 6, vec![4]));
        assert!(matches!(plan.validate(), Err(Error::MalformedPlan(_))));
    }

    #[test]
    fn empty_plan_is_valid() {
        let plan = PruningPlan::default();
        plan.validate().unwrap();
        let text = plan.to_json().unwrap();
        assert_eq!(PruningPlan::from_json(&text).unwrap(), plan);
    }

    #[test]
    fn malformed_json_reports_plan_error() {
        let err = PruningPlan::from_json("{\"format\": 3}").unwrap_err();
        assert_eq!(err.kind(), "MalformedPlan");
        let edited = plan_with(PlanEntry::new(1, 6, vec![0, 2]))
            .to_json()
            .unwrap()
            .replace("\"k_selected\": 2", "\"k_selected\": 3");
        assert!(matches!(
            PruningPlan::from_json(&edited),
            Err(Error::MalformedPlan(_))
        ));
    }
}
