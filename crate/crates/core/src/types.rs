//! Shared domain enums.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Target social group a comment refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Immigrants,
    Refugees,
    Muslims,
    Jews,
    Liberals,
    Conservatives,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::Immigrants,
        Group::Refugees,
        Group::Muslims,
        Group::Jews,
        Group::Liberals,
        Group::Conservatives,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Immigrants => "Immigrants",
            Group::Refugees => "Refugees",
            Group::Muslims => "Muslims",
            Group::Jews => "Jews",
            Group::Liberals => "Liberals",
            Group::Conservatives => "Conservatives",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "immigrants" | "immigrant" | "immigration" => Ok(Group::Immigrants),
            "refugees" | "refugee" => Ok(Group::Refugees),
            "muslims" | "muslim" => Ok(Group::Muslims),
            "jews" | "jew" | "jewish" => Ok(Group::Jews),
            "liberals" | "liberal" => Ok(Group::Liberals),
            "conservatives" | "conservative" => Ok(Group::Conservatives),
            other => Err(Error::Parse(format!("unknown group `{other}`"))),
        }
    }
}

/// Outlet-level political lean of the news source a comment replied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BiasLabel {
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "centre-left")]
    CentreLeft,
    #[serde(rename = "centre")]
    Centre,
    #[serde(rename = "centre-right")]
    CentreRight,
    #[serde(rename = "right")]
    Right,
}

impl BiasLabel {
    pub const ALL: [BiasLabel; 5] = [
        BiasLabel::Left,
        BiasLabel::CentreLeft,
        BiasLabel::Centre,
        BiasLabel::CentreRight,
        BiasLabel::Right,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiasLabel::Left => "left",
            BiasLabel::CentreLeft => "centre-left",
            BiasLabel::Centre => "centre",
            BiasLabel::CentreRight => "centre-right",
            BiasLabel::Right => "right",
        }
    }
}

impl fmt::Display for BiasLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        match norm.as_str() {
            "left" => Ok(BiasLabel::Left),
            "centre-left" | "center-left" | "lean-left" => Ok(BiasLabel::CentreLeft),
            "centre" | "center" => Ok(BiasLabel::Centre),
            "centre-right" | "center-right" | "lean-right" => Ok(BiasLabel::CentreRight),
            "right" => Ok(BiasLabel::Right),
            other => Err(Error::Parse(format!("unknown bias label `{other}`"))),
        }
    }
}

/// Answer options of the attitude question, in scale order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttitudeLabel {
    Supportive,
    Neutral,
    Critical,
    Discriminatory,
}

impl AttitudeLabel {
    pub const ALL: [AttitudeLabel; 4] = [
        AttitudeLabel::Supportive,
        AttitudeLabel::Neutral,
        AttitudeLabel::Critical,
        AttitudeLabel::Discriminatory,
    ];

    /// Position on the UsVsThem scale.
    pub fn weight(self) -> f64 {
        match self {
            AttitudeLabel::Supportive => 0.0,
            AttitudeLabel::Neutral => 1.0 / 3.0,
            AttitudeLabel::Critical => 2.0 / 3.0,
            AttitudeLabel::Discriminatory => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttitudeLabel::Supportive => "Supportive",
            AttitudeLabel::Neutral => "Neutral",
            AttitudeLabel::Critical => "Critical",
            AttitudeLabel::Discriminatory => "Discriminatory",
        }
    }
}

/// The twelve annotated emotions. Emotional neutrality is tracked separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Emotion {
    Anger,
    Contempt,
    Disgust,
    Fear,
    Gratitude,
    Guilt,
    Happiness,
    Hope,
    Pride,
    Relief,
    Sadness,
    Sympathy,
}

impl Emotion {
    pub const ALL: [Emotion; 12] = [
        Emotion::Anger,
        Emotion::Contempt,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Gratitude,
        Emotion::Guilt,
        Emotion::Happiness,
        Emotion::Hope,
        Emotion::Pride,
        Emotion::Relief,
        Emotion::Sadness,
        Emotion::Sympathy,
    ];

    /// Emotions used by the auxiliary emotion task; together with Neutral
    /// they form the 8 output dimensions.
    pub const AUXILIARY: [Emotion; 7] = [
        Emotion::Anger,
        Emotion::Contempt,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Hope,
        Emotion::Pride,
        Emotion::Sympathy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Anger => "Anger",
            Emotion::Contempt => "Contempt",
            Emotion::Disgust => "Disgust",
            Emotion::Fear => "Fear",
            Emotion::Gratitude => "Gratitude",
            Emotion::Guilt => "Guilt",
            Emotion::Happiness => "Happiness",
            Emotion::Hope => "Hope",
            Emotion::Pride => "Pride",
            Emotion::Relief => "Relief",
            Emotion::Sadness => "Sadness",
            Emotion::Sympathy => "Sympathy",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Emotion::ALL
            .iter()
            .copied()
            .find(|e| e.as_str().to_ascii_lowercase() == lower)
            .or(match lower.as_str() {
                "joy" => Some(Emotion::Happiness),
                "anxiety" => Some(Emotion::Fear),
                "shame" => Some(Emotion::Guilt),
                _ => None,
            })
            .ok_or_else(|| Error::Parse(format!("unknown emotion `{s}`")))
    }
}

/// Label names of the 13-dimensional emotion task: the twelve emotions
/// followed by `Neutral`.
pub fn emotion_task_labels() -> Vec<String> {
    Emotion::ALL
        .iter()
        .map(|e| e.as_str().to_string())
        .chain(std::iter::once("Neutral".to_string()))
        .collect()
}

/// Label names of the 4-way attitude task.
pub fn attitude_task_labels() -> Vec<String> {
    AttitudeLabel::ALL.iter().map(|l| l.as_str().to_string()).collect()
}
