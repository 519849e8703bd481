//! Ordered label scales and the mapping between label text and integer scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How to resolve a value that lies exactly between two scale points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    TowardZero,
}

/// One labelled point on a scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(String, i64)", into = "(String, i64)")]
pub struct ScalePoint {
    pub label: String,
    pub score: i64,
}

impl From<(String, i64)> for ScalePoint {
    fn from((label, score): (String, i64)) -> Self {
        Self { label, score }
    }
}

impl From<ScalePoint> for (String, i64) {
    fn from(p: ScalePoint) -> Self {
        (p.label, p.score)
    }
}

/// A validated ordinal scale. Points are stored in increasing score order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScale")]
pub struct LabelScale {
    name: String,
    points: Vec<ScalePoint>,
    #[serde(default)]
    tie_rule: TieRule,
}

#[derive(Deserialize)]
struct RawScale {
    name: String,
    points: Vec<ScalePoint>,
    #[serde(default)]
    tie_rule: TieRule,
}

impl TryFrom<RawScale> for LabelScale {
    type Error = Error;

    fn try_from(raw: RawScale) -> Result<Self> {
        LabelScale::with_tie_rule(raw.name, raw.points, raw.tie_rule)
    }
}

impl LabelScale {
    pub fn new<L: Into<String>>(
        name: impl Into<String>,
        points: impl IntoIterator<Item = (L, i64)>,
    ) -> Result<Self> {
        let points = points
            .into_iter()
            .map(|(label, score)| ScalePoint {
                label: label.into(),
                score,
            })
            .collect();
        Self::with_tie_rule(name.into(), points, TieRule::TowardZero)
    }

    fn with_tie_rule(name: String, points: Vec<ScalePoint>, tie_rule: TieRule) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidScale {
            name: name.clone(),
            reason: reason.to_string(),
        };
        if points.len() < 2 {
            return Err(invalid("a scale needs at least two points"));
        }
        if points.windows(2).any(|w| w[0].score >= w[1].score) {
            return Err(invalid("scores must be strictly increasing"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.label.is_empty() {
                return Err(invalid("labels must be nonempty"));
            }
            if points[..i].iter().any(|q| q.label == p.label) {
                return Err(invalid(&format!("duplicate label {:?}", p.label)));
            }
        }
        Ok(Self {
            name,
            points,
            tie_rule,
        })
    }

    /// Five-point social acceptability scale coded -2..=2.
    pub fn social_acceptability() -> Self {
        Self::new(
            "social_acceptability",
            [
                ("It's very bad", -2),
                ("It's bad", -1),
                ("It's okay", 0),
                ("It's good", 1),
                ("It's very good", 2),
            ],
        )
        .expect("built-in scale is valid")
    }

    /// Three-point hate speech scale coded -1..=1.
    pub fn hate_speech() -> Self {
        Self::new(
            "hate_speech",
            [("Not hate speech", -1), ("Not sure", 0), ("Hate speech", 1)],
        )
        .expect("built-in scale is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[ScalePoint] {
        &self.points
    }

    pub fn tie_rule(&self) -> TieRule {
        self.tie_rule
    }

    pub fn min_score(&self) -> i64 {
        self.points[0].score
    }

    pub fn max_score(&self) -> i64 {
        self.points[self.points.len() - 1].score
    }

    pub fn contains_score(&self, score: i64) -> bool {
        self.points.iter().any(|p| p.score == score)
    }

    /// True when `value` lies within `[min_score, max_score]`.
    pub fn in_range(&self, value: f64) -> bool {
        value >= self.min_score() as f64 && value <= self.max_score() as f64
    }

    pub fn map_label_to_score(&self, label: &str) -> Result<i64> {
        self.points
            .iter()
            .find(|p| p.label == label)
            .map(|p| p.score)
            .ok_or_else(|| Error::UnknownLabel {
                scale: self.name.clone(),
                label: label.to_string(),
            })
    }

    pub fn label_for_score(&self, score: i64) -> Result<&str> {
        self.points
            .iter()
            .find(|p| p.score == score)
            .map(|p| p.label.as_str())
            .ok_or(Error::OffScale {
                scale: self.name.clone(),
                score: score as f64,
            })
    }

    /// The scale point nearest to `value`. Out-of-range values clamp to the
    /// closest endpoint; exact midpoints go to the point nearer zero.
    pub fn nearest_point(&self, value: f64) -> Result<&ScalePoint> {
        if !value.is_finite() {
            return Err(Error::NonFinite(value));
        }
        let mut best = &self.points[0];
        let mut best_dist = (value - best.score as f64).abs();
        for p in &self.points[1..] {
            let dist = (value - p.score as f64).abs();
            let closer = dist < best_dist
                || (dist == best_dist && match self.tie_rule {
                    TieRule::TowardZero => p.score.abs() < best.score.abs(),
                });
            if closer {
                best = p;
                best_dist = dist;
            }
        }
        Ok(best)
    }

    pub fn nearest_category(&self, value: f64) -> Result<&str> {
        self.nearest_point(value).map(|p| p.label.as_str())
    }

    pub fn nearest_score(&self, value: f64) -> Result<i64> {
        self.nearest_point(value).map(|p| p.score)
    }
}
