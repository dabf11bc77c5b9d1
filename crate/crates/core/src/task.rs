//! Routable task vocabulary and the routing-token table.
//!
//! A [`TaskKind`] is a task family plus, for the two controllable-generation
//! families, the condition modality that drives generation. With conditions
//! expanded there are 30 routable tasks, each owning exactly one token name.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// The twenty task families a controller can route to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    ImageGen,
    VideoGen,
    ImageEdit,
    VideoEdit,
    Text3D,
    Image3D,
    ImageDeblur,
    ImageDerain,
    ImageDenoise,
    ImageSR,
    PoseEst,
    NormalEst,
    CannyEst,
    DepthEst,
    ObjectDetect,
    ObjectSegment,
    VisualGround,
    VideoRefSeg,
    ControllableImageGen,
    ControllableVideoGen,
}

impl Family {
    pub const ALL: [Family; 20] = [
        Family::ImageGen,
        Family::VideoGen,
        Family::ImageEdit,
        Family::VideoEdit,
        Family::Text3D,
        Family::Image3D,
        Family::ImageDeblur,
        Family::ImageDerain,
        Family::ImageDenoise,
        Family::ImageSR,
        Family::PoseEst,
        Family::NormalEst,
        Family::CannyEst,
        Family::DepthEst,
        Family::ObjectDetect,
        Family::ObjectSegment,
        Family::VisualGround,
        Family::VideoRefSeg,
        Family::ControllableImageGen,
        Family::ControllableVideoGen,
    ];

    pub fn is_controllable(self) -> bool {
        matches!(self, Family::ControllableImageGen | Family::ControllableVideoGen)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::ImageGen => "ImageGen",
            Family::VideoGen => "VideoGen",
            Family::ImageEdit => "ImageEdit",
            Family::VideoEdit => "VideoEdit",
            Family::Text3D => "Text3D",
            Family::Image3D => "Image3D",
            Family::ImageDeblur => "ImageDeblur",
            Family::ImageDerain => "ImageDerain",
            Family::ImageDenoise => "ImageDenoise",
            Family::ImageSR => "ImageSR",
            Family::PoseEst => "PoseEst",
            Family::NormalEst => "NormalEst",
            Family::CannyEst => "CannyEst",
            Family::DepthEst => "DepthEst",
            Family::ObjectDetect => "ObjectDetect",
            Family::ObjectSegment => "ObjectSegment",
            Family::VisualGround => "VisualGround",
            Family::VideoRefSeg => "VideoRefSeg",
            Family::ControllableImageGen => "ControllableImageGen",
            Family::ControllableVideoGen => "ControllableVideoGen",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(name))
    }

    /// Every routable task belonging to this family.
    pub fn tasks(self) -> Vec<TaskKind> {
        if self.is_controllable() {
            Condition::ALL
                .into_iter()
                .map(|c| TaskKind { family: self, condition: Some(c) })
                .collect()
        } else {
            vec![TaskKind { family: self, condition: None }]
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Condition modality for controllable image/video generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    Pose,
    Canny,
    Normal,
    Scribble,
    Segmentation,
    Depth,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::Pose,
        Condition::Canny,
        Condition::Normal,
        Condition::Scribble,
        Condition::Segmentation,
        Condition::Depth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Pose => "Pose",
            Condition::Canny => "Canny",
            Condition::Normal => "Normal",
            Condition::Scribble => "Scribble",
            Condition::Segmentation => "Segmentation",
            Condition::Depth => "Depth",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A routable task: a family and, for controllable generation only, a condition.
///
/// The fields are private so the "condition iff controllable" invariant
/// cannot be broken after construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskKind {
    family: Family,
    condition: Option<Condition>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("{0} requires a condition")]
    MissingCondition(Family),
    #[error("{0} does not take a condition")]
    UnexpectedCondition(Family),
    #[error("unknown task `{0}`")]
    Unknown(String),
}

impl TaskKind {
    pub fn new(family: Family, condition: Option<Condition>) -> Result<Self, TaskError> {
        match (family.is_controllable(), condition) {
            (true, None) => Err(TaskError::MissingCondition(family)),
            (false, Some(_)) => Err(TaskError::UnexpectedCondition(family)),
            _ => Ok(TaskKind { family, condition }),
        }
    }

    /// Shorthand for a non-controllable family.
    ///
    /// Panics if `family` is one of the controllable families.
    pub const fn plain(family: Family) -> Self {
        assert!(
            !matches!(family, Family::ControllableImageGen | Family::ControllableVideoGen),
            "controllable families need a condition"
        );
        TaskKind { family, condition: None }
    }

    pub const fn controllable_image(condition: Condition) -> Self {
        TaskKind { family: Family::ControllableImageGen, condition: Some(condition) }
    }

    pub const fn controllable_video(condition: Condition) -> Self {
        TaskKind { family: Family::ControllableVideoGen, condition: Some(condition) }
    }

    pub fn family(self) -> Family {
        self.family
    }

    pub fn condition(self) -> Option<Condition> {
        self.condition
    }

    /// All 30 routable tasks, in token-table order.
    pub fn all() -> impl Iterator<Item = TaskKind> {
        TOKEN_TABLE.iter().map(|(task, _)| *task)
    }

    /// Routing-token name (`image_gen`, `pose_to_image`, ...).
    pub fn token_name(self) -> &'static str {
        TOKEN_TABLE
            .iter()
            .find(|(task, _)| *task == self)
            .map(|(_, name)| *name)
            .expect("token table covers every task")
    }

    pub fn from_token_name(name: &str) -> Option<TaskKind> {
        name_index().get(name).copied()
    }

    pub fn spec(self) -> TokenSpec {
        TokenSpec { task: self, name: self.token_name() }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token_name())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::from_token_name(s).ok_or_else(|| TaskError::Unknown(s.to_string()))
    }
}

impl Serialize for TaskKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.token_name())
    }
}

impl<'de> Deserialize<'de> for TaskKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

/// One row of the routing-token table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpec {
    pub task: TaskKind,
    pub name: &'static str,
}

impl TokenSpec {
    pub fn open_tag(&self) -> String {
        format!("<{}>", self.name)
    }

    pub fn close_tag(&self) -> String {
        format!("</{}>", self.name)
    }
}

use Condition as C;
use Family as F;

// Single source of truth for token strings. Order is the public table order.
static TOKEN_TABLE: [(TaskKind, &str); 30] = [
    (TaskKind::plain(F::ImageGen), "image_gen"),
    (TaskKind::plain(F::VideoGen), "video_gen"),
    (TaskKind::plain(F::ImageEdit), "image_edit"),
    (TaskKind::plain(F::VideoEdit), "video_edit"),
    (TaskKind::plain(F::Text3D), "3D_gen_text"),
    (TaskKind::plain(F::Image3D), "3D_gen_image"),
    (TaskKind::plain(F::ImageDeblur), "image_deblur"),
    (TaskKind::plain(F::ImageDerain), "image_derain"),
    (TaskKind::plain(F::ImageDenoise), "image_denoise"),
    (TaskKind::plain(F::ImageSR), "image_sr"),
    (TaskKind::plain(F::PoseEst), "pose_est"),
    (TaskKind::plain(F::NormalEst), "normal_est"),
    (TaskKind::plain(F::CannyEst), "canny_est"),
    (TaskKind::plain(F::DepthEst), "depth_est"),
    (TaskKind::plain(F::ObjectDetect), "obj_det"),
    (TaskKind::plain(F::ObjectSegment), "obj_seg"),
    (TaskKind::plain(F::VisualGround), "visual_ground"),
    (TaskKind::plain(F::VideoRefSeg), "video_ref_seg"),
    (TaskKind::controllable_image(C::Pose), "pose_to_image"),
    (TaskKind::controllable_image(C::Canny), "canny_to_image"),
    (TaskKind::controllable_image(C::Normal), "normal_to_image"),
    (TaskKind::controllable_image(C::Scribble), "scribble_to_image"),
    (TaskKind::controllable_image(C::Segmentation), "seg_to_image"),
    (TaskKind::controllable_image(C::Depth), "depth_to_image"),
    (TaskKind::controllable_video(C::Pose), "pose_to_video"),
    (TaskKind::controllable_video(C::Canny), "canny_to_video"),
    (TaskKind::controllable_video(C::Normal), "normal_to_video"),
    (TaskKind::controllable_video(C::Scribble), "scribble_to_video"),
    (TaskKind::controllable_video(C::Segmentation), "seg_to_video"),
    (TaskKind::controllable_video(C::Depth), "depth_to_video"),
];

/// Longest token name in the table, used to bound tag scanning.
pub(crate) fn max_token_len() -> usize {
    static LEN: OnceLock<usize> = OnceLock::new();
    *LEN.get_or_init(|| TOKEN_TABLE.iter().map(|(_, n)| n.len()).max().unwrap_or(0))
}

fn name_index() -> &'static HashMap<&'static str, TaskKind> {
    static INDEX: OnceLock<HashMap<&'static str, TaskKind>> = OnceLock::new();
    INDEX.get_or_init(|| TOKEN_TABLE.iter().map(|(task, name)| (*name, *task)).collect())
}

/// The full routing-token table: 30 rows, stable order.
pub fn token_table() -> Vec<TokenSpec> {
    TOKEN_TABLE.iter().map(|(task, name)| TokenSpec { task: *task, name }).collect()
}
