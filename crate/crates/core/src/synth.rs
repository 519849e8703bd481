//! Synthetic annotator populations with planted labeling behavior.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::demographics::DemographicProfile;
use crate::domain::{Annotation, Instance, PredictionRecord};
use crate::error::{Error, Result};
use crate::scale::LabelScale;
use crate::storage::ProfileRow;
use crate::study::value_on_scale;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    /// Nearest scale point to the target's value plus Gaussian noise.
    Aligned { target_id: String, noise_sd: f64 },
    /// Uniform over scale points.
    UniformRandom,
    Constant { score: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationGroup {
    /// Prefix for generated participant ids.
    pub name: String,
    pub profile: DemographicProfile,
    pub n_annotators: usize,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub groups: Vec<PopulationGroup>,
    /// Instances each annotator labels, drawn at random; `None` means all.
    #[serde(default)]
    pub annotations_per_annotator: Option<usize>,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn validate(&self, scale: &LabelScale) -> Result<()> {
        for g in &self.groups {
            if g.n_annotators == 0 {
                return Err(Error::Invalid(format!("group {:?} has no annotators", g.name)));
            }
            g.profile.validate()?;
            match &g.behavior {
                Behavior::Aligned { noise_sd, .. } if !(noise_sd.is_finite() && *noise_sd >= 0.0) => {
                    return Err(Error::Invalid(format!("group {:?}: noise_sd must be >= 0", g.name)));
                }
                Behavior::Constant { score } if !scale.contains_score(*score) => {
                    return Err(Error::OffScale {
                        scale: scale.name().to_string(),
                        score: *score as f64,
                    });
                }
                _ => {}
            }
        }
        if self.annotations_per_annotator == Some(0) {
            return Err(Error::Invalid("annotations_per_annotator must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub profiles: Vec<ProfileRow>,
    pub annotations: Vec<Annotation>,
}

/// Generates profiles and annotations. Each annotator draws from its own
/// stream of the seeded generator, so adding a group leaves the others'
/// output unchanged.
pub fn generate_population(
    spec: &PopulationSpec,
    instances: &[Instance],
    targets: &[PredictionRecord],
    scale: &LabelScale,
) -> Result<Population> {
    spec.validate(scale)?;
    if instances.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut by_target: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for p in targets {
        by_target
            .entry(p.target_id.as_str())
            .or_default()
            .insert(p.instance_id.as_str(), value_on_scale(p, scale));
    }
    for g in &spec.groups {
        if let Behavior::Aligned { target_id, .. } = &g.behavior {
            let values = by_target
                .get(target_id.as_str())
                .ok_or_else(|| Error::UnknownTarget(target_id.clone()))?;
            let missing: Vec<String> = instances
                .iter()
                .filter(|i| !values.contains_key(i.id.as_str()))
                .map(|i| i.id.clone())
                .collect();
            if !missing.is_empty() {
                return Err(Error::MissingPredictions {
                    target: target_id.clone(),
                    instances: missing,
                });
            }
        }
    }

    let per_annotator = spec
        .annotations_per_annotator
        .unwrap_or(instances.len())
        .min(instances.len());
    let epoch: DateTime<Utc> = DateTime::from_timestamp(1_700_000_000, 0).expect("valid epoch");
    let scores: Vec<i64> = scale.points().iter().map(|p| p.score).collect();

    let mut profiles = Vec::new();
    let mut annotations = Vec::new();
    let mut stream = 0u64;
    for g in &spec.groups {
        let noise = match &g.behavior {
            Behavior::Aligned { noise_sd, .. } => {
                Some(Normal::new(0.0, *noise_sd).map_err(|e| Error::Invalid(e.to_string()))?)
            }
            _ => None,
        };
        for a in 0..g.n_annotators {
            let participant_id = format!("{}-{a:03}", g.name);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(stream);
            stream += 1;

            let mut chosen: Vec<&Instance> = instances.iter().collect();
            if per_annotator < instances.len() {
                chosen.shuffle(&mut rng);
                chosen.truncate(per_annotator);
                chosen.sort_by(|x, y| x.id.cmp(&y.id));
            }
            for inst in chosen {
                let score = match &g.behavior {
                    Behavior::Aligned { target_id, .. } => {
                        let base = by_target[target_id.as_str()][inst.id.as_str()];
                        let eps = noise.as_ref().expect("aligned has noise").sample(&mut rng);
                        scale.nearest_score(base + eps)?
                    }
                    Behavior::UniformRandom => *scores.choose(&mut rng).expect("scale has points"),
                    Behavior::Constant { score } => *score,
                };
                annotations.push(Annotation {
                    participant_id: participant_id.clone(),
                    instance_id: inst.id.clone(),
                    score,
                    rationale: None,
                    created_at: epoch + Duration::seconds(annotations.len() as i64),
                });
            }
            profiles.push(ProfileRow {
                participant_id,
                profile: g.profile.clone(),
            });
        }
    }
    Ok(Population {
        profiles,
        annotations,
    })
}
