//! The 40-class indoor taxonomy (NYUv2-40) plus id 0 for void.

use std::fmt;

use serde::{Deserialize, Serialize};

const NAMES: [&str; 41] = [
    "void",
    "wall",
    "floor",
    "cabinet",
    "bed",
    "chair",
    "sofa",
    "table",
    "door",
    "window",
    "bookshelf",
    "picture",
    "counter",
    "blinds",
    "desk",
    "shelves",
    "curtain",
    "dresser",
    "pillow",
    "mirror",
    "floor mat",
    "clothes",
    "ceiling",
    "books",
    "refridgerator",
    "television",
    "paper",
    "towel",
    "shower curtain",
    "box",
    "whiteboard",
    "person",
    "night stand",
    "toilet",
    "sink",
    "lamp",
    "bathtub",
    "bag",
    "otherstructure",
    "otherfurniture",
    "otherprop",
];

/// A semantic class id in `0..=40`; 0 is void (no hit / unobserved).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SemanticId(u8);

impl SemanticId {
    pub const VOID: SemanticId = SemanticId(0);
    pub const WALL: SemanticId = SemanticId(1);
    pub const FLOOR: SemanticId = SemanticId(2);
    pub const CABINET: SemanticId = SemanticId(3);
    pub const BED: SemanticId = SemanticId(4);
    pub const CHAIR: SemanticId = SemanticId(5);
    pub const SOFA: SemanticId = SemanticId(6);
    pub const TABLE: SemanticId = SemanticId(7);
    pub const DOOR: SemanticId = SemanticId(8);
    pub const WINDOW: SemanticId = SemanticId(9);
    pub const BOOKSHELF: SemanticId = SemanticId(10);
    pub const PICTURE: SemanticId = SemanticId(11);
    pub const DESK: SemanticId = SemanticId(14);
    pub const DRESSER: SemanticId = SemanticId(17);
    pub const MIRROR: SemanticId = SemanticId(19);
    pub const CEILING: SemanticId = SemanticId(22);
    pub const TELEVISION: SemanticId = SemanticId(25);
    pub const NIGHT_STAND: SemanticId = SemanticId(32);
    pub const LAMP: SemanticId = SemanticId(35);
    pub const OTHERFURNITURE: SemanticId = SemanticId(39);

    pub const MAX: u8 = 40;

    pub fn new(id: u8) -> Option<Self> {
        (id <= Self::MAX).then_some(SemanticId(id))
    }

    /// Look a class up by its taxonomy name.
    pub fn from_name(name: &str) -> Option<Self> {
        NAMES.iter().position(|n| *n == name).map(|i| SemanticId(i as u8))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        NAMES[self.0 as usize]
    }

    pub fn is_void(self) -> bool {
        self.0 == 0
    }

    /// Wall, floor, ceiling, window, door and mirror.
    pub fn is_structural(self) -> bool {
        matches!(self.0, 1 | 2 | 8 | 9 | 19 | 22)
    }

    /// Classes the generator hangs on walls instead of standing on the floor.
    pub fn is_wall_mounted(self) -> bool {
        matches!(self.0, 8 | 9 | 11 | 19)
    }

    /// Deterministic display color for paletted PNGs and uncolored point clouds.
    pub fn color(self) -> [u8; 3] {
        PALETTE[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = SemanticId> {
        (0..=Self::MAX).map(SemanticId)
    }
}

impl TryFrom<u32> for SemanticId {
    type Error = String;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        u8::try_from(value)
            .ok()
            .and_then(SemanticId::new)
            .ok_or_else(|| format!("semantic id {value} outside 0..=40"))
    }
}

impl From<SemanticId> for u32 {
    fn from(value: SemanticId) -> u32 {
        value.0 as u32
    }
}

impl fmt::Display for SemanticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.0, self.name())
    }
}

const PALETTE: [[u8; 3]; 41] = [
    [0, 0, 0],
    [174, 199, 232],
    [152, 223, 138],
    [31, 119, 180],
    [255, 187, 120],
    [188, 189, 34],
    [140, 86, 75],
    [255, 152, 150],
    [214, 39, 40],
    [197, 176, 213],
    [148, 103, 189],
    [196, 156, 148],
    [23, 190, 207],
    [178, 76, 76],
    [247, 182, 210],
    [66, 188, 102],
    [219, 219, 141],
    [140, 57, 197],
    [202, 185, 52],
    [51, 176, 203],
    [200, 54, 131],
    [92, 193, 61],
    [78, 71, 183],
    [172, 114, 82],
    [255, 127, 14],
    [91, 163, 138],
    [153, 98, 156],
    [140, 153, 101],
    [158, 218, 229],
    [100, 125, 154],
    [178, 127, 135],
    [120, 185, 128],
    [146, 111, 194],
    [44, 160, 44],
    [112, 128, 144],
    [96, 207, 209],
    [227, 119, 194],
    [213, 92, 176],
    [94, 106, 211],
    [82, 84, 163],
    [100, 85, 144],
];
