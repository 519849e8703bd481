//! Per-group aggregation and alignment between demographic groups and
//! targets (dataset labels or model predictions).

mod agreement;
mod correlation;

pub use agreement::{alpha_from_units, krippendorff_alpha, AlphaMetric};
pub use correlation::{bonferroni_adjust, pearson_p, pearson_r, per_test_threshold};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demographics::{groups_for_profile, CulturalSphereTable, DemographicGroup, DemographicProfile};
use crate::domain::{Annotation, PredictionRecord};
use crate::error::{Error, Result};
use crate::scale::LabelScale;

/// Participant id to the groups their annotations count toward.
pub type Grouping = BTreeMap<String, BTreeSet<DemographicGroup>>;

pub fn participant_groups(
    profiles: &BTreeMap<String, DemographicProfile>,
    table: &CulturalSphereTable,
) -> Grouping {
    profiles
        .iter()
        .map(|(id, p)| (id.clone(), groups_for_profile(p, table)))
        .collect()
}

/// Number of hypotheses used for the Bonferroni correction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum HypothesisCount {
    /// One hypothesis per group entering the analysis.
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for HypothesisCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HypothesisCount::Auto => s.serialize_str("auto"),
            HypothesisCount::Fixed(m) => s.serialize_u64(*m as u64),
        }
    }
}

impl<'de> Deserialize<'de> for HypothesisCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("m_hypotheses must be positive")),
            Raw::Count(m) => Ok(HypothesisCount::Fixed(m)),
            Raw::Word(w) if w == "auto" => Ok(HypothesisCount::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "m_hypotheses must be a positive integer or \"auto\", got {w:?}"
            ))),
        }
    }
}

fn default_family_alpha() -> f64 {
    0.001
}

fn default_min_instances() -> usize {
    2
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    #[serde(default = "default_family_alpha")]
    pub family_alpha: f64,
    #[serde(default)]
    pub m_hypotheses: HypothesisCount,
    #[serde(default = "default_min_instances")]
    pub min_instances: usize,
    #[serde(default)]
    pub alpha_metric: AlphaMetric,
    /// Reject the analysis when a target lacks a value for an annotated
    /// instance. When false, such instances are dropped from that target's
    /// vectors.
    #[serde(default = "default_true")]
    pub require_full_coverage: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            family_alpha: default_family_alpha(),
            m_hypotheses: HypothesisCount::Auto,
            min_instances: default_min_instances(),
            alpha_metric: AlphaMetric::Interval,
            require_full_coverage: true,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.family_alpha > 0.0 && self.family_alpha < 1.0) {
            return Err(Error::Invalid(format!(
                "family_alpha must lie in (0, 1), got {}",
                self.family_alpha
            )));
        }
        if self.min_instances == 0 {
            return Err(Error::Invalid("min_instances must be positive".into()));
        }
        Ok(())
    }
}

/// A group's aggregated score for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInstanceScore {
    pub group: DemographicGroup,
    pub instance_id: String,
    pub mean: f64,
    pub sample_variance: Option<f64>,
    pub n: usize,
}

fn check_participants(annotations: &[Annotation], grouping: &Grouping) -> Result<()> {
    let unknown: BTreeSet<&str> = annotations
        .iter()
        .filter(|a| !grouping.contains_key(&a.participant_id))
        .map(|a| a.participant_id.as_str())
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownParticipants(unknown.into_iter().map(String::from).collect()))
    }
}

/// Scores grouped by (group, instance), in that order.
fn collect_scores<'a>(
    annotations: &'a [Annotation],
    grouping: &'a Grouping,
) -> BTreeMap<&'a DemographicGroup, BTreeMap<&'a str, Vec<f64>>> {
    let mut by_group: BTreeMap<&DemographicGroup, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for a in annotations {
        for g in &grouping[&a.participant_id] {
            by_group
                .entry(g)
                .or_default()
                .entry(a.instance_id.as_str())
                .or_default()
                .push(a.score as f64);
        }
    }
    by_group
}

fn mean_and_variance(scores: &[f64]) -> (f64, Option<f64>) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let variance = (scores.len() >= 2)
        .then(|| scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0));
    (mean, variance)
}

/// Mean, sample variance, and count of each group's scores on each instance
/// it annotated. Pairs without annotations are absent.
pub fn aggregate_group_scores(
    annotations: &[Annotation],
    grouping: &Grouping,
) -> Result<Vec<GroupInstanceScore>> {
    check_participants(annotations, grouping)?;
    let mut out = Vec::new();
    for (group, instances) in collect_scores(annotations, grouping) {
        for (instance_id, scores) in instances {
            let (mean, sample_variance) = mean_and_variance(&scores);
            out.push(GroupInstanceScore {
                group: group.clone(),
                instance_id: instance_id.to_string(),
                mean,
                sample_variance,
                n: scores.len(),
            });
        }
    }
    Ok(out)
}

/// One (group, target) alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCell {
    pub group: DemographicGroup,
    pub target_id: String,
    pub r: f64,
    /// Unadjusted two-tailed p; absent below three instances.
    pub p_value: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub significant: bool,
    pub n_instances: usize,
}

/// Per-group row metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: DemographicGroup,
    pub annotation_count: usize,
    pub annotator_count: usize,
    pub instance_count: usize,
    pub alpha: Option<f64>,
    /// Whether the group met `min_instances` and produced alignment cells.
    pub analyzed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub config: AnalysisConfig,
    pub m_hypotheses: usize,
    pub per_test_threshold: f64,
    pub targets: Vec<String>,
    pub groups: Vec<GroupSummary>,
    pub cells: Vec<AlignmentCell>,
}

impl AnalysisOutput {
    pub fn cell(&self, group: &DemographicGroup, target_id: &str) -> Option<&AlignmentCell> {
        self.cells
            .iter()
            .find(|c| &c.group == group && c.target_id == target_id)
    }

    pub fn summary(&self, group: &DemographicGroup) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| &g.group == group)
    }
}

type TargetValues<'a> = BTreeMap<&'a str, BTreeMap<&'a str, f64>>;

fn index_predictions(predictions: &[PredictionRecord]) -> Result<TargetValues<'_>> {
    let mut targets: TargetValues = BTreeMap::new();
    for p in predictions {
        if !p.value.is_finite() {
            return Err(Error::NonFinite(p.value));
        }
        let prev = targets
            .entry(p.target_id.as_str())
            .or_default()
            .insert(p.instance_id.as_str(), p.value);
        if prev.is_some() {
            return Err(Error::Invalid(format!(
                "duplicate prediction for instance {:?} target {:?}",
                p.instance_id, p.target_id
            )));
        }
    }
    Ok(targets)
}

/// Alignment of every demographic group with every target.
///
/// A group enters the analysis when it has aggregated scores on at least
/// `config.min_instances` instances; all groups appear in the metadata rows.
/// Output ordering is deterministic: category order, then key, then target.
pub fn positionality_table(
    annotations: &[Annotation],
    grouping: &Grouping,
    predictions: &[PredictionRecord],
    scale: &LabelScale,
    config: &AnalysisConfig,
) -> Result<AnalysisOutput> {
    config.validate()?;
    check_participants(annotations, grouping)?;
    if let Some(a) = annotations.iter().find(|a| !scale.contains_score(a.score)) {
        return Err(Error::OffScale {
            scale: scale.name().to_string(),
            score: a.score as f64,
        });
    }
    let targets = index_predictions(predictions)?;

    if config.require_full_coverage {
        let annotated: BTreeSet<&str> = annotations.iter().map(|a| a.instance_id.as_str()).collect();
        for (target, values) in &targets {
            let missing: Vec<String> = annotated
                .iter()
                .filter(|i| !values.contains_key(*i))
                .map(|i| i.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(Error::MissingPredictions {
                    target: target.to_string(),
                    instances: missing,
                });
            }
        }
    }

    let by_group = collect_scores(annotations, grouping);
    let mut members: BTreeMap<&DemographicGroup, BTreeMap<&str, BTreeMap<&str, f64>>> =
        BTreeMap::new();
    for a in annotations {
        for g in &grouping[&a.participant_id] {
            members
                .entry(g)
                .or_default()
                .entry(a.instance_id.as_str())
                .or_default()
                .insert(a.participant_id.as_str(), a.score as f64);
        }
    }

    let entering = by_group
        .values()
        .filter(|instances| instances.len() >= config.min_instances)
        .count();
    let m = match config.m_hypotheses {
        HypothesisCount::Auto => entering.max(1),
        HypothesisCount::Fixed(m) => m,
    };

    let groups: Vec<(&DemographicGroup, &BTreeMap<&str, Vec<f64>>)> = by_group.iter().map(|(g, i)| (*g, i)).collect();
    let rows: Vec<(GroupSummary, Vec<AlignmentCell>)> = groups
        .par_iter()
        .map(|&(group, instances)| {
            let means: BTreeMap<&str, f64> = instances
                .iter()
                .map(|(id, scores)| (*id, mean_and_variance(scores).0))
                .collect();
            let units: Vec<Vec<f64>> = members[group]
                .values()
                .map(|by_participant| by_participant.values().copied().collect())
                .collect();
            let annotators: BTreeSet<&str> = members[group]
                .values()
                .flat_map(|by_participant| by_participant.keys().copied())
                .collect();
            let analyzed = instances.len() >= config.min_instances;
            let summary = GroupSummary {
                group: group.clone(),
                annotation_count: instances.values().map(Vec::len).sum(),
                annotator_count: annotators.len(),
                instance_count: instances.len(),
                alpha: alpha_from_units(&units, config.alpha_metric),
                analyzed,
            };
            let mut cells = Vec::new();
            if analyzed {
                for (target, values) in &targets {
                    let (xs, ys): (Vec<f64>, Vec<f64>) = means
                        .iter()
                        .filter_map(|(id, mean)| values.get(id).map(|v| (*mean, *v)))
                        .unzip();
                    if xs.len() < config.min_instances {
                        continue;
                    }
                    let Some(r) = pearson_r(&xs, &ys) else {
                        continue;
                    };
                    let p_value = pearson_p(r, xs.len());
                    let p_adjusted = p_value.map(|p| bonferroni_adjust(p, m));
                    cells.push(AlignmentCell {
                        group: group.clone(),
                        target_id: target.to_string(),
                        r,
                        p_value,
                        p_adjusted,
                        significant: p_adjusted.is_some_and(|p| p < config.family_alpha),
                        n_instances: xs.len(),
                    });
                }
            }
            (summary, cells)
        })
        .collect();

    let mut summaries = Vec::with_capacity(rows.len());
    let mut cells = Vec::new();
    for (summary, row_cells) in rows {
        summaries.push(summary);
        cells.extend(row_cells);
    }
    Ok(AnalysisOutput {
        config: config.clone(),
        m_hypotheses: m,
        per_test_threshold: per_test_threshold(config.family_alpha, m),
        targets: targets.keys().map(|t| t.to_string()).collect(),
        groups: summaries,
        cells,
    })
}
