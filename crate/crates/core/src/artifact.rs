//! Artifacts flowing between pipeline steps and the per-task modality table.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::task::{Family, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
    Video,
    #[serde(rename = "mesh3d")]
    Mesh3D,
    Mask,
    Boxes,
    Map,
}

impl Modality {
    pub const ALL: [Modality; 7] = [
        Modality::Text,
        Modality::Image,
        Modality::Video,
        Modality::Mesh3D,
        Modality::Mask,
        Modality::Boxes,
        Modality::Map,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Video => "video",
            Modality::Mesh3D => "mesh3d",
            Modality::Mask => "mask",
            Modality::Boxes => "boxes",
            Modality::Map => "map",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown modality `{s}`"))
    }
}

/// Which pipeline step created an artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Producer {
    pub step: usize,
    pub task: TaskKind,
}

/// A typed handle to some media. The toolkit never loads the bytes behind
/// `locator`; it only passes the string along.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub modality: Modality,
    pub locator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub producer: Option<Producer>,
}

impl Artifact {
    /// A user-supplied artifact (no producer).
    pub fn new(modality: Modality, locator: impl Into<String>) -> Self {
        Artifact { modality, locator: locator.into(), producer: None }
    }

    pub fn produced_by(mut self, step: usize, task: TaskKind) -> Self {
        self.producer = Some(Producer { step, task });
        self
    }
}

impl fmt::Display for Artifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.modality, self.locator)
    }
}

impl std::str::FromStr for Artifact {
    type Err = String;

    /// Parses `modality=locator`, the form used by `--attach`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (modality, locator) = s
            .split_once('=')
            .ok_or_else(|| format!("expected modality=locator, got `{s}`"))?;
        if locator.is_empty() {
            return Err("artifact locator must not be empty".into());
        }
        Ok(Artifact::new(modality.trim().parse()?, locator))
    }
}

/// Input and output modalities of a task. The text prompt is always an
/// implicit extra input and is not listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskIo {
    pub inputs: &'static [Modality],
    pub output: Modality,
}

/// Modality table for every routable task.
pub fn task_io(task: TaskKind) -> TaskIo {
    use Modality::*;
    let (inputs, output): (&'static [Modality], Modality) = match task.family() {
        Family::ImageGen => (&[], Image),
        Family::VideoGen => (&[], Video),
        Family::Text3D => (&[], Mesh3D),
        Family::ImageEdit => (&[Image], Image),
        Family::VideoEdit => (&[Video], Video),
        Family::Image3D => (&[Image], Mesh3D),
        Family::ImageDeblur | Family::ImageDerain | Family::ImageDenoise | Family::ImageSR => (&[Image], Image),
        Family::PoseEst | Family::NormalEst | Family::CannyEst | Family::DepthEst => (&[Image], Map),
        Family::ObjectDetect | Family::VisualGround => (&[Image], Boxes),
        Family::ObjectSegment => (&[Image], Mask),
        Family::VideoRefSeg => (&[Video], Mask),
        Family::ControllableImageGen => (&[Map], Image),
        Family::ControllableVideoGen => (&[Map], Video),
    };
    TaskIo { inputs, output }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modality_table_is_total_and_consistent() {
        for task in TaskKind::all() {
            let io = task_io(task);
            assert!(io.inputs.len() <= 1, "{task}");
            assert_ne!(io.output, Modality::Text);
        }
        assert_eq!(task_io(TaskKind::plain(Family::DepthEst)).output, Modality::Map);
        assert_eq!(task_io(TaskKind::plain(Family::ObjectDetect)).output, Modality::Boxes);
        assert_eq!(task_io(TaskKind::plain(Family::VideoRefSeg)).inputs, &[Modality::Video]);
    }

    #[test]
    fn attach_syntax() {
        let a: Artifact = "map=stub://pose1".parse().unwrap();
        assert_eq!(a, Artifact::new(Modality::Map, "stub://pose1"));
        assert!("map".parse::<Artifact>().is_err());
        assert!("map=".parse::<Artifact>().is_err());
        assert!("sound=x".parse::<Artifact>().is_err());
        assert_eq!("Image=a=b".parse::<Artifact>().unwrap().locator, "a=b");
    }
}
