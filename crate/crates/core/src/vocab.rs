//! Structured language-goal tokens and the vocabulary they resolve against.
//!
//! Goals are ordered token lists covering four attribute groups: structure
//! shape, size class, anchor position bins (x and y), and rotation bin.
//! The vocabulary ships with every checkpoint as a text manifest, one token
//! per line in id order.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};

/// Structure classes the generator and models understand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    Line,
    Circle,
    Tower,
    Dinner,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 4] = [
        ShapeClass::Line,
        ShapeClass::Circle,
        ShapeClass::Tower,
        ShapeClass::Dinner,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeClass::Line => "line",
            ShapeClass::Circle => "circle",
            ShapeClass::Tower => "tower",
            ShapeClass::Dinner => "dinner",
        }
    }

    pub fn parse(s: &str) -> CoreResult<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| CoreError::UnknownToken(format!("shape:{s}")))
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn name(&self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }

    pub fn parse(s: &str) -> CoreResult<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| CoreError::UnknownToken(format!("size:{s}")))
    }
}

/// Number of position bins per axis and of rotation bins.
pub const BIN_COUNT: u8 = 4;

/// One structured goal token: an attribute group plus its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "group", content = "value", rename_all = "snake_case")]
pub enum GoalToken {
    Shape(ShapeClass),
    Size(SizeClass),
    /// Position bin along x, in `[0, BIN_COUNT)`.
    PosX(u8),
    /// Position bin along y, in `[0, BIN_COUNT)`.
    PosY(u8),
    /// Rotation bin, in `[0, BIN_COUNT)`.
    Rot(u8),
}

impl GoalToken {
    /// Canonical `group:value` text used in manifests and record files.
    pub fn text(&self) -> String {
        match self {
            GoalToken::Shape(s) => format!("shape:{}", s.name()),
            GoalToken::Size(s) => format!("size:{}", s.name()),
            GoalToken::PosX(b) => format!("posx:b{b}"),
            GoalToken::PosY(b) => format!("posy:b{b}"),
            GoalToken::Rot(b) => format!("rot:r{b}"),
        }
    }

    pub fn parse(s: &str) -> CoreResult<Self> {
        let (group, value) = s
            .split_once(':')
            .ok_or_else(|| CoreError::UnknownToken(s.to_string()))?;
        let bin = |v: &str, tag: char| -> CoreResult<u8> {
            let rest = v
                .strip_prefix(tag)
                .ok_or_else(|| CoreError::UnknownToken(s.to_string()))?;
            let b: u8 = rest
                .parse()
                .map_err(|_| CoreError::UnknownToken(s.to_string()))?;
            if b >= BIN_COUNT {
                return Err(CoreError::UnknownToken(s.to_string()));
            }
            Ok(b)
        };
        match group {
            "shape" => Ok(GoalToken::Shape(ShapeClass::parse(value)?)),
            "size" => Ok(GoalToken::Size(SizeClass::parse(value)?)),
            "posx" => Ok(GoalToken::PosX(bin(value, 'b')?)),
            "posy" => Ok(GoalToken::PosY(bin(value, 'b')?)),
            "rot" => Ok(GoalToken::Rot(bin(value, 'r')?)),
            _ => Err(CoreError::UnknownToken(s.to_string())),
        }
    }

    /// Local constraints describe the structure itself (shape, size); global
    /// ones place it on the table (position, rotation). The structure
    /// discriminator keeps only local tokens.
    pub fn is_local(&self) -> bool {
        matches!(self, GoalToken::Shape(_) | GoalToken::Size(_))
    }
}

/// Ordered token list conditioning the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LanguageGoal {
    pub tokens: Vec<GoalToken>,
}

impl LanguageGoal {
    pub fn new(tokens: Vec<GoalToken>) -> Self {
        LanguageGoal { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn shape(&self) -> Option<ShapeClass> {
        self.tokens.iter().find_map(|t| match t {
            GoalToken::Shape(s) => Some(*s),
            _ => None,
        })
    }

    pub fn size(&self) -> Option<SizeClass> {
        self.tokens.iter().find_map(|t| match t {
            GoalToken::Size(s) => Some(*s),
            _ => None,
        })
    }

    pub fn pos_bins(&self) -> Option<(u8, u8)> {
        let x = self.tokens.iter().find_map(|t| match t {
            GoalToken::PosX(b) => Some(*b),
            _ => None,
        })?;
        let y = self.tokens.iter().find_map(|t| match t {
            GoalToken::PosY(b) => Some(*b),
            _ => None,
        })?;
        Some((x, y))
    }

    pub fn rot_bin(&self) -> Option<u8> {
        self.tokens.iter().find_map(|t| match t {
            GoalToken::Rot(b) => Some(*b),
            _ => None,
        })
    }

    /// Keeps only shape/size tokens (drops global placement constraints).
    pub fn local_only(&self) -> LanguageGoal {
        LanguageGoal {
            tokens: self.tokens.iter().copied().filter(|t| t.is_local()).collect(),
        }
    }

    pub fn texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text()).collect()
    }

    pub fn from_texts(texts: &[String]) -> CoreResult<Self> {
        Ok(LanguageGoal {
            tokens: texts
                .iter()
                .map(|s| GoalToken::parse(s))
                .collect::<CoreResult<_>>()?,
        })
    }
}

/// Token inventory with dense ids and a reserved padding id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabSpec {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pad_id: usize,
}

pub const PAD_TOKEN: &str = "pad:<pad>";

impl VocabSpec {
    /// The fixed inventory: shapes, sizes, position bins per axis, rotation
    /// bins, then the padding token.
    pub fn standard() -> Self {
        let mut tokens = Vec::new();
        for s in ShapeClass::ALL {
            tokens.push(format!("shape:{}", s.name()));
        }
        for s in SizeClass::ALL {
            tokens.push(format!("size:{}", s.name()));
        }
        for b in 0..BIN_COUNT {
            tokens.push(format!("posx:b{b}"));
        }
        for b in 0..BIN_COUNT {
            tokens.push(format!("posy:b{b}"));
        }
        for b in 0..BIN_COUNT {
            tokens.push(format!("rot:r{b}"));
        }
        tokens.push(PAD_TOKEN.to_string());
        Self::from_tokens(tokens).expect("standard vocabulary is well formed")
    }

    pub fn from_tokens(tokens: Vec<String>) -> CoreResult<Self> {
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CoreError::UnknownToken(format!("duplicate token {t}")));
            }
        }
        let pad_id = *index
            .get(PAD_TOKEN)
            .ok_or_else(|| CoreError::UnknownToken("missing pad token".into()))?;
        Ok(VocabSpec {
            tokens,
            index,
            pad_id,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad_id(&self) -> usize {
        self.pad_id
    }

    pub fn id_of_text(&self, text: &str) -> CoreResult<usize> {
        self.index
            .get(text)
            .copied()
            .ok_or_else(|| CoreError::UnknownToken(text.to_string()))
    }

    pub fn id(&self, token: &GoalToken) -> CoreResult<usize> {
        self.id_of_text(&token.text())
    }

    /// Token ids for a goal, in order.
    pub fn encode(&self, goal: &LanguageGoal) -> CoreResult<Vec<usize>> {
        goal.tokens.iter().map(|t| self.id(t)).collect()
    }

    /// One token per line, id order.
    pub fn to_manifest(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_manifest(text: &str) -> CoreResult<Self> {
        let tokens: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Self::from_tokens(tokens)
    }
}
