//! Study state, the serving policy, per-instance feedback, and participant
//! results.
//!
//! [`StudyState`] changes only through [`StudyState::apply`], which folds one
//! [`StudyEvent`] into the state. The service appends every event to the
//! study log before applying it, so replaying the log reproduces the state.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demographics::{groups_for_profile, CulturalSphereTable, DemographicGroup, DemographicProfile};
use crate::domain::{Annotation, Instance, PredictionKind, PredictionRecord, Task};
use crate::error::{Error, Result};
use crate::sampling::allocate_quotas;
use crate::scale::LabelScale;
use crate::stats::{positionality_table, AnalysisConfig, AnalysisOutput, Grouping};

/// Everything fixed when a study is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDefinition {
    pub id: String,
    pub task: Task,
    pub seed: u64,
    /// Target whose category is shown to participants as "the AI".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_target: Option<String>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub predictions: Vec<PredictionRecord>,
}

impl StudyDefinition {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::Invalid(format!(
                "study id {:?} must be nonempty and use only [A-Za-z0-9_-]",
                self.id
            )));
        }
        self.task.validate()?;
        self.analysis.validate()?;
        let mut ids = BTreeSet::new();
        for inst in &self.instances {
            inst.validate(&self.task.scale)?;
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate instance id {:?}", inst.id)));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.predictions {
            p.validate(&self.task.scale)?;
            if !ids.contains(p.instance_id.as_str()) {
                return Err(Error::UnknownInstance(p.instance_id.clone()));
            }
            if !seen.insert((p.instance_id.as_str(), p.target_id.as_str())) {
                return Err(Error::Invalid(format!(
                    "duplicate prediction for instance {:?} target {:?}",
                    p.instance_id, p.target_id
                )));
            }
        }
        if let Some(target) = &self.primary_target {
            if !self.predictions.iter().any(|p| &p.target_id == target) {
                return Err(Error::UnknownTarget(target.clone()));
            }
        }
        Ok(())
    }
}

/// Which serving pool an instance was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    /// None of the participant's groups has annotated it.
    Unannotated,
    /// At least one of the participant's groups has annotated it.
    Annotated,
    /// Balanced across strata of the task's strata attribute.
    Strata,
    /// Filled from whatever remained because another pool ran dry.
    Backfill,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServedInstance {
    pub instance_id: String,
    pub pool: Pool,
}

/// One logged state change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum StudyEvent {
    ParticipantRegistered {
        participant_id: String,
        /// Hex SHA-256 of the participant's bearer token.
        token_sha256: String,
        profile: DemographicProfile,
    },
    AnnotationSubmitted {
        participant_id: String,
        instance_id: String,
        score: i64,
        label_text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rationale: Option<String>,
        created_at: DateTime<Utc>,
    },
    StudyFeedback {
        participant_id: String,
        text: String,
        technical_difficulties: bool,
        cheated: bool,
    },
    BatchServed {
        participant_id: String,
        instances: Vec<ServedInstance>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub profile: DemographicProfile,
    pub groups: BTreeSet<DemographicGroup>,
    pub token_sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSession {
    /// Every instance served, in serving order.
    pub served: Vec<String>,
    pub batches: Vec<Vec<ServedInstance>>,
    pub completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFeedbackEntry {
    pub participant_id: String,
    pub text: String,
    pub technical_difficulties: bool,
    pub cheated: bool,
}

/// Outcome of a batch request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDraw {
    pub instances: Vec<ServedInstance>,
    /// Set when the participant has nothing left to annotate.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFeedback {
    pub instance_id: String,
    /// The primary model's category; `None` when no prediction is available.
    pub model_category: Option<String>,
    /// Labels chosen by other participants living in the same country.
    pub country_distribution: BTreeMap<String, usize>,
}

/// Agreement counts with a derived percentage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub agreed: usize,
    pub total: usize,
    /// `None` when nothing was comparable.
    pub percent: Option<f64>,
}

impl Agreement {
    fn record(&mut self, agreed: bool) {
        self.total += 1;
        self.agreed += usize::from(agreed);
        self.percent = Some(100.0 * self.agreed as f64 / self.total as f64);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StratumAgreement {
    pub with_model: Agreement,
    pub with_same_demographic: Agreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalResults {
    pub participant_id: String,
    pub annotations: usize,
    pub agreement_with_model: Agreement,
    pub agreement_with_same_demographic: Agreement,
    pub per_stratum: BTreeMap<String, StratumAgreement>,
}

/// A submitted annotation with the label text the participant chose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotation: Annotation,
    pub label_text: String,
}

/// Places a prediction on the task scale: probabilities map linearly onto
/// `[min, max]`, other kinds pass through.
pub fn value_on_scale(record: &PredictionRecord, scale: &LabelScale) -> f64 {
    match record.kind {
        PredictionKind::Probability => {
            let (lo, hi) = (scale.min_score() as f64, scale.max_score() as f64);
            lo + record.value * (hi - lo)
        }
        PredictionKind::Categorical | PredictionKind::Scalar => record.value,
    }
}

pub fn hash_token(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Mutable {
    participants: BTreeMap<String, ParticipantRecord>,
    annotations: Vec<AnnotationRecord>,
    #[serde(serialize_with = "as_pairs")]
    annotations_by_group: BTreeMap<DemographicGroup, BTreeSet<String>>,
    sessions: BTreeMap<String, ParticipantSession>,
    study_feedback: Vec<StudyFeedbackEntry>,
    events_applied: u64,
}

#[derive(Debug, Clone)]
pub struct StudyState {
    definition: Arc<StudyDefinition>,
    spheres: Arc<CulturalSphereTable>,
    instance_index: BTreeMap<String, usize>,
    strata_values: Vec<String>,
    annotation_index: BTreeMap<(String, String), usize>,
    m: Mutable,
}

impl PartialEq for StudyState {
    fn eq(&self, other: &Self) -> bool {
        self.definition == other.definition && self.m == other.m
    }
}

impl StudyState {
    pub fn new(definition: StudyDefinition, spheres: Arc<CulturalSphereTable>) -> Result<Self> {
        definition.validate()?;
        let instance_index = definition
            .instances
            .iter()
            .enumerate()
            .map(|(i, inst)| (inst.id.clone(), i))
            .collect();
        let strata_values: BTreeSet<String> = definition
            .instances
            .iter()
            .map(|i| stratum_key(i, &definition.task.strata_attribute))
            .collect();
        Ok(Self {
            definition: Arc::new(definition),
            spheres,
            instance_index,
            strata_values: strata_values.into_iter().collect(),
            annotation_index: BTreeMap::new(),
            m: Mutable {
                participants: BTreeMap::new(),
                annotations: Vec::new(),
                annotations_by_group: BTreeMap::new(),
                sessions: BTreeMap::new(),
                study_feedback: Vec::new(),
                events_applied: 0,
            },
        })
    }

    /// Rebuilds state by folding `events` in order.
    pub fn replay<'a>(
        definition: StudyDefinition,
        spheres: Arc<CulturalSphereTable>,
        events: impl IntoIterator<Item = &'a StudyEvent>,
    ) -> Result<Self> {
        let mut state = Self::new(definition, spheres)?;
        for event in events {
            state.apply(event)?;
        }
        Ok(state)
    }

    pub fn definition(&self) -> &StudyDefinition {
        &self.definition
    }

    pub fn task(&self) -> &Task {
        &self.definition.task
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.instance_index.get(id).map(|&i| &self.definition.instances[i])
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantRecord> {
        self.m.participants.get(id)
    }

    pub fn participants(&self) -> &BTreeMap<String, ParticipantRecord> {
        &self.m.participants
    }

    pub fn session(&self, id: &str) -> Option<&ParticipantSession> {
        self.m.sessions.get(id)
    }

    pub fn annotations(&self) -> &[AnnotationRecord] {
        &self.m.annotations
    }

    pub fn annotations_by_group(&self) -> &BTreeMap<DemographicGroup, BTreeSet<String>> {
        &self.m.annotations_by_group
    }

    pub fn study_feedback(&self) -> &[StudyFeedbackEntry] {
        &self.m.study_feedback
    }

    pub fn events_applied(&self) -> u64 {
        self.m.events_applied
    }

    /// Participant whose token hashes to `token_sha256`.
    pub fn participant_for_token_hash(&self, token_sha256: &str) -> Option<&str> {
        self.m
            .participants
            .iter()
            .find(|(_, p)| p.token_sha256 == token_sha256)
            .map(|(id, _)| id.as_str())
    }

    /// SHA-256 over the canonical JSON of the definition and all mutable
    /// state.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&*self.definition).expect("definition serializes"));
        hasher.update(serde_json::to_vec(&self.m).expect("state serializes"));
        hex::encode(hasher.finalize())
    }

    fn is_annotated(&self, participant_id: &str, instance_id: &str) -> bool {
        self.annotation_index
            .contains_key(&(participant_id.to_string(), instance_id.to_string()))
    }

    fn require_participant(&self, participant_id: &str) -> Result<&ParticipantRecord> {
        self.m
            .participants
            .get(participant_id)
            .ok_or_else(|| Error::UnknownParticipant(participant_id.to_string()))
    }

    /// Validates a registration and returns its event.
    pub fn register(
        &self,
        participant_id: &str,
        token_sha256: &str,
        profile: DemographicProfile,
    ) -> Result<StudyEvent> {
        let event = StudyEvent::ParticipantRegistered {
            participant_id: participant_id.to_string(),
            token_sha256: token_sha256.to_string(),
            profile,
        };
        self.check(&event)?;
        Ok(event)
    }

    /// Validates a submission and returns its event.
    pub fn submit_annotation(
        &self,
        participant_id: &str,
        instance_id: &str,
        label_text: &str,
        rationale: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<StudyEvent> {
        let score = self.task().scale.map_label_to_score(label_text)?;
        let event = StudyEvent::AnnotationSubmitted {
            participant_id: participant_id.to_string(),
            instance_id: instance_id.to_string(),
            score,
            label_text: label_text.to_string(),
            rationale: rationale.filter(|r| !r.trim().is_empty()),
            created_at: now,
        };
        self.check(&event)?;
        Ok(event)
    }

    pub fn submit_study_feedback(
        &self,
        participant_id: &str,
        text: String,
        technical_difficulties: bool,
        cheated: bool,
    ) -> Result<StudyEvent> {
        let event = StudyEvent::StudyFeedback {
            participant_id: participant_id.to_string(),
            text,
            technical_difficulties,
            cheated,
        };
        self.check(&event)?;
        Ok(event)
    }

    /// Served instances the participant has not annotated yet.
    pub fn outstanding(&self, participant_id: &str) -> Vec<&Instance> {
        self.m
            .sessions
            .get(participant_id)
            .map(|s| {
                s.served
                    .iter()
                    .filter(|id| !self.is_annotated(participant_id, id))
                    .filter_map(|id| self.instance(id))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Draws the participant's next batch.
    ///
    /// With `k = batch_size`, a third (rounded down) comes from instances none
    /// of the participant's groups has annotated, a third from instances they
    /// have, and the rest is spread across strata. Pools that run dry are
    /// backfilled from what remains. Randomness is derived from `seed`, the
    /// participant id, and how many batches they have been served.
    pub fn next_batch(&self, participant_id: &str, seed: u64) -> Result<BatchDraw> {
        let participant = self.require_participant(participant_id)?;
        let session = self.m.sessions.get(participant_id);
        let batches_served = session.map_or(0, |s| s.batches.len());
        let served: BTreeSet<&str> = session
            .map(|s| s.served.iter().map(String::as_str).collect())
            .unwrap_or_default();

        let candidates: Vec<&Instance> = self
            .definition
            .instances
            .iter()
            .filter(|i| !served.contains(i.id.as_str()) && !self.is_annotated(participant_id, &i.id))
            .collect();
        if candidates.is_empty() || batches_served >= self.task().batches_per_participant as usize {
            return Ok(BatchDraw {
                instances: Vec::new(),
                complete: true,
            });
        }

        let mut rng = batch_rng(seed, participant_id, batches_served);
        let k = self.task().batch_size;
        let third = k / 3;
        let balanced = k - 2 * third;

        let group_annotated: BTreeSet<&str> = participant
            .groups
            .iter()
            .filter_map(|g| self.m.annotations_by_group.get(g))
            .flatten()
            .map(String::as_str)
            .collect();
        let (mut annotated, mut unannotated): (Vec<&Instance>, Vec<&Instance>) = candidates
            .iter()
            .partition(|i| group_annotated.contains(i.id.as_str()));
        unannotated.shuffle(&mut rng);
        annotated.shuffle(&mut rng);

        let mut picked: Vec<ServedInstance> = Vec::with_capacity(k);
        let mut taken: BTreeSet<&str> = BTreeSet::new();
        for (pool, members) in [(Pool::Unannotated, &unannotated), (Pool::Annotated, &annotated)] {
            for inst in members.iter().take(third) {
                taken.insert(inst.id.as_str());
                picked.push(ServedInstance {
                    instance_id: inst.id.clone(),
                    pool,
                });
            }
        }

        let attr = &self.task().strata_attribute;
        let mut by_stratum: BTreeMap<&str, Vec<&Instance>> =
            self.strata_values.iter().map(|s| (s.as_str(), Vec::new())).collect();
        for inst in &candidates {
            if !taken.contains(inst.id.as_str()) {
                by_stratum
                    .get_mut(stratum_key_ref(inst, attr))
                    .expect("strata values cover all instances")
                    .push(inst);
            }
        }
        let capacities: Vec<usize> = by_stratum.values().map(Vec::len).collect();
        let available: usize = capacities.iter().sum();
        let quotas = allocate_quotas(&capacities, balanced.min(available));
        for (members, quota) in by_stratum.values_mut().zip(quotas) {
            members.shuffle(&mut rng);
            for inst in members.iter().take(quota) {
                taken.insert(inst.id.as_str());
                picked.push(ServedInstance {
                    instance_id: inst.id.clone(),
                    pool: Pool::Strata,
                });
            }
        }

        if picked.len() < k {
            let mut rest: Vec<&Instance> = candidates
                .iter()
                .filter(|i| !taken.contains(i.id.as_str()))
                .copied()
                .collect();
            rest.shuffle(&mut rng);
            let need = k - picked.len();
            picked.extend(rest.into_iter().take(need).map(|inst| ServedInstance {
                instance_id: inst.id.clone(),
                pool: Pool::Backfill,
            }));
        }

        picked.shuffle(&mut rng);
        Ok(BatchDraw {
            instances: picked,
            complete: false,
        })
    }

    /// Event recording that `draw` was served to the participant.
    pub fn batch_served(&self, participant_id: &str, draw: &BatchDraw) -> Result<StudyEvent> {
        let event = StudyEvent::BatchServed {
            participant_id: participant_id.to_string(),
            instances: draw.instances.clone(),
        };
        self.check(&event)?;
        Ok(event)
    }

    fn primary_prediction(&self, instance_id: &str) -> Option<&PredictionRecord> {
        let target = self.definition.primary_target.as_deref()?;
        self.definition
            .predictions
            .iter()
            .find(|p| p.target_id == target && p.instance_id == instance_id)
    }

    fn model_category(&self, instance_id: &str) -> Option<String> {
        let scale = &self.task().scale;
        self.primary_prediction(instance_id)
            .and_then(|p| scale.nearest_category(value_on_scale(p, scale)).ok())
            .map(str::to_string)
    }

    /// Model category and compatriot label counts for an instance the
    /// participant has just annotated.
    pub fn instance_feedback(&self, participant_id: &str, instance_id: &str) -> Result<InstanceFeedback> {
        let participant = self.require_participant(participant_id)?;
        if self.instance(instance_id).is_none() {
            return Err(Error::UnknownInstance(instance_id.to_string()));
        }
        if !self.is_annotated(participant_id, instance_id) {
            return Err(Error::Conflict(format!(
                "participant has not annotated instance {instance_id:?}"
            )));
        }
        let mut country_distribution = BTreeMap::new();
        if let Some(home) = participant.profile.country_residence.as_deref().map(normalize) {
            for rec in &self.m.annotations {
                let a = &rec.annotation;
                if a.instance_id != instance_id || a.participant_id == participant_id {
                    continue;
                }
                let same_country = self.m.participants[&a.participant_id]
                    .profile
                    .country_residence
                    .as_deref()
                    .is_some_and(|c| normalize(c) == home);
                if same_country {
                    *country_distribution.entry(rec.label_text.clone()).or_insert(0) += 1;
                }
            }
        }
        Ok(InstanceFeedback {
            instance_id: instance_id.to_string(),
            model_category: self.model_category(instance_id),
            country_distribution,
        })
    }

    /// How often the participant agreed with the model and with others
    /// sharing any of their demographic groups, overall and per stratum.
    pub fn final_results(&self, participant_id: &str) -> Result<FinalResults> {
        let participant = self.require_participant(participant_id)?;
        let scale = &self.task().scale;
        let attr = &self.task().strata_attribute;
        let own: Vec<&AnnotationRecord> = self
            .m
            .annotations
            .iter()
            .filter(|r| r.annotation.participant_id == participant_id)
            .collect();
        if own.is_empty() {
            return Err(Error::Conflict("participant has no annotations yet".into()));
        }

        let mut overall_model = Agreement::default();
        let mut overall_demo = Agreement::default();
        let mut per_stratum: BTreeMap<String, StratumAgreement> = BTreeMap::new();
        for rec in &own {
            let instance_id = &rec.annotation.instance_id;
            let stratum = stratum_key(self.instance(instance_id).expect("annotated instance exists"), attr);
            let entry = per_stratum.entry(stratum).or_default();

            if let Some(model) = self.model_category(instance_id) {
                let agreed = model == rec.label_text;
                overall_model.record(agreed);
                entry.with_model.record(agreed);
            }

            let peers: Vec<f64> = self
                .m
                .annotations
                .iter()
                .filter(|r| {
                    r.annotation.instance_id == *instance_id
                        && r.annotation.participant_id != participant_id
                        && !self.m.participants[&r.annotation.participant_id]
                            .groups
                            .is_disjoint(&participant.groups)
                })
                .map(|r| r.annotation.score as f64)
                .collect();
            if !peers.is_empty() {
                let mean = peers.iter().sum::<f64>() / peers.len() as f64;
                let agreed = scale.nearest_category(mean)? == rec.label_text;
                overall_demo.record(agreed);
                entry.with_same_demographic.record(agreed);
            }
        }
        Ok(FinalResults {
            participant_id: participant_id.to_string(),
            annotations: own.len(),
            agreement_with_model: overall_model,
            agreement_with_same_demographic: overall_demo,
            per_stratum,
        })
    }

    /// Group membership of every registered participant.
    pub fn grouping(&self) -> Grouping {
        self.m
            .participants
            .iter()
            .map(|(id, p)| (id.clone(), p.groups.clone()))
            .collect()
    }

    /// Runs the alignment analysis over everything collected so far.
    pub fn analysis(&self) -> Result<AnalysisOutput> {
        let annotations: Vec<Annotation> = self.m.annotations.iter().map(|r| r.annotation.clone()).collect();
        positionality_table(
            &annotations,
            &self.grouping(),
            &self.definition.predictions,
            &self.task().scale,
            &self.definition.analysis,
        )
    }

    /// Checks that `event` can be applied to the current state.
    pub fn check(&self, event: &StudyEvent) -> Result<()> {
        match event {
            StudyEvent::ParticipantRegistered {
                participant_id,
                token_sha256,
                profile,
            } => {
                if participant_id.is_empty() {
                    return Err(Error::Invalid("participant id must be nonempty".into()));
                }
                if self.m.participants.contains_key(participant_id) {
                    return Err(Error::Conflict(format!("participant {participant_id:?} already registered")));
                }
                if self.participant_for_token_hash(token_sha256).is_some() {
                    return Err(Error::Conflict("token already in use".into()));
                }
                profile.validate()
            }
            StudyEvent::AnnotationSubmitted {
                participant_id,
                instance_id,
                score,
                label_text,
                ..
            } => {
                self.require_participant(participant_id)?;
                if self.instance(instance_id).is_none() {
                    return Err(Error::UnknownInstance(instance_id.clone()));
                }
                let scale = &self.task().scale;
                if scale.map_label_to_score(label_text)? != *score {
                    return Err(Error::Invalid(format!(
                        "label {label_text:?} does not carry score {score}"
                    )));
                }
                let served = self
                    .m
                    .sessions
                    .get(participant_id)
                    .is_some_and(|s| s.served.iter().any(|id| id == instance_id));
                if !served {
                    return Err(Error::Conflict(format!(
                        "instance {instance_id:?} was not served to this participant"
                    )));
                }
                if self.is_annotated(participant_id, instance_id) {
                    return Err(Error::Conflict(format!("instance {instance_id:?} already annotated")));
                }
                Ok(())
            }
            StudyEvent::StudyFeedback { participant_id, .. } => {
                self.require_participant(participant_id)?;
                Ok(())
            }
            StudyEvent::BatchServed {
                participant_id,
                instances,
            } => {
                self.require_participant(participant_id)?;
                let already: BTreeSet<&str> = self
                    .m
                    .sessions
                    .get(participant_id)
                    .map(|s| s.served.iter().map(String::as_str).collect())
                    .unwrap_or_default();
                let mut fresh = BTreeSet::new();
                for s in instances {
                    if self.instance(&s.instance_id).is_none() {
                        return Err(Error::UnknownInstance(s.instance_id.clone()));
                    }
                    if already.contains(s.instance_id.as_str()) || !fresh.insert(s.instance_id.as_str()) {
                        return Err(Error::Conflict(format!(
                            "instance {:?} served twice to {participant_id:?}",
                            s.instance_id
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Folds one event into the state after checking it.
    pub fn apply(&mut self, event: &StudyEvent) -> Result<()> {
        self.check(event)?;
        match event {
            StudyEvent::ParticipantRegistered {
                participant_id,
                token_sha256,
                profile,
            } => {
                let groups = groups_for_profile(profile, &self.spheres);
                self.m.participants.insert(
                    participant_id.clone(),
                    ParticipantRecord {
                        profile: profile.clone(),
                        groups,
                        token_sha256: token_sha256.clone(),
                    },
                );
                self.m.sessions.insert(participant_id.clone(), ParticipantSession::default());
            }
            StudyEvent::AnnotationSubmitted {
                participant_id,
                instance_id,
                score,
                label_text,
                rationale,
                created_at,
            } => {
                let groups = self.m.participants[participant_id].groups.clone();
                for g in groups {
                    self.m
                        .annotations_by_group
                        .entry(g)
                        .or_default()
                        .insert(instance_id.clone());
                }
                self.annotation_index
                    .insert((participant_id.clone(), instance_id.clone()), self.m.annotations.len());
                self.m.annotations.push(AnnotationRecord {
                    annotation: Annotation {
                        participant_id: participant_id.clone(),
                        instance_id: instance_id.clone(),
                        score: *score,
                        rationale: rationale.clone(),
                        created_at: *created_at,
                    },
                    label_text: label_text.clone(),
                });
                if let Some(s) = self.m.sessions.get_mut(participant_id) {
                    s.completed += 1;
                }
            }
            StudyEvent::StudyFeedback {
                participant_id,
                text,
                technical_difficulties,
                cheated,
            } => self.m.study_feedback.push(StudyFeedbackEntry {
                participant_id: participant_id.clone(),
                text: text.clone(),
                technical_difficulties: *technical_difficulties,
                cheated: *cheated,
            }),
            StudyEvent::BatchServed {
                participant_id,
                instances,
            } => {
                let session = self.m.sessions.entry(participant_id.clone()).or_default();
                session.served.extend(instances.iter().map(|s| s.instance_id.clone()));
                session.batches.push(instances.clone());
            }
        }
        self.m.events_applied += 1;
        Ok(())
    }
}

fn as_pairs<S: serde::Serializer>(
    map: &BTreeMap<DemographicGroup, BTreeSet<String>>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    serializer.collect_seq(map.iter())
}

fn normalize(country: &str) -> String {
    country.trim().to_lowercase()
}

fn stratum_key_ref<'a>(instance: &'a Instance, attr: &str) -> &'a str {
    instance.stratum(attr).unwrap_or("")
}

fn stratum_key(instance: &Instance, attr: &str) -> String {
    stratum_key_ref(instance, attr).to_string()
}

fn batch_rng(seed: u64, participant_id: &str, batch_index: usize) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(participant_id.as_bytes());
    hasher.update((batch_index as u64).to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
