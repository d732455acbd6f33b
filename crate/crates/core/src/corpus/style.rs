use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Caption style; the discriminant is the prompt bank index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Style {
    Coco = 0,
    Textcap = 1,
    Short = 2,
    Medium = 3,
    Long = 4,
    Positive = 5,
    Negative = 6,
}

impl Style {
    pub const ALL: [Style; 7] = [
        Style::Coco,
        Style::Textcap,
        Style::Short,
        Style::Medium,
        Style::Long,
        Style::Positive,
        Style::Negative,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Style> {
        Self::ALL.get(i).copied()
    }

    pub fn tag(self) -> &'static str {
        match self {
            Style::Coco => "coco",
            Style::Textcap => "textcap",
            Style::Short => "short",
            Style::Medium => "medium",
            Style::Long => "long",
            Style::Positive => "positive",
            Style::Negative => "negative",
        }
    }

    /// Hand-written prompt for this style.
    pub fn manual_prompt(self) -> &'static str {
        match self {
            Style::Coco => "a normal picture that shows",
            Style::Textcap => "a textual picture that shows",
            Style::Short => "a picture with a short caption that shows",
            Style::Medium => "a picture with a medium caption that shows",
            Style::Long => "a picture with a long caption that shows",
            Style::Positive => "a positive picture that shows",
            Style::Negative => "a negative picture that shows",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Style::Textcap => Domain::Textual,
            _ => Domain::Factual,
        }
    }

    /// Generation budget in tokens, EOS included.
    pub fn default_max_len(self) -> usize {
        match self {
            Style::Medium | Style::Long => 60,
            _ => 40,
        }
    }

    pub fn valid_tags() -> String {
        Self::ALL.iter().map(|s| s.tag()).collect::<Vec<_>>().join(", ")
    }
}

/// The single prompt used when every domain shares one prompt.
pub const SHARED_PROMPT: &str = "a picture of";

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Style {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|st| st.tag() == s)
            .ok_or_else(|| Error::UnknownStyle {
                given: s.to_string(),
                valid: Self::valid_tags(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Factual,
    Textual,
}

impl Domain {
    pub fn tag(self) -> &'static str {
        match self {
            Domain::Factual => "factual",
            Domain::Textual => "textual",
        }
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "factual" => Ok(Domain::Factual),
            "textual" => Ok(Domain::Textual),
            _ => Err(Error::InvalidArgument(format!("unknown domain `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LengthBucket {
    Short,
    Medium,
    Long,
}

impl LengthBucket {
    /// The length-controlled style that owns this bucket.
    pub fn style(self) -> Style {
        match self {
            LengthBucket::Short => Style::Short,
            LengthBucket::Medium => Style::Medium,
            LengthBucket::Long => Style::Long,
        }
    }

    pub fn of_style(style: Style) -> Option<LengthBucket> {
        match style {
            Style::Short => Some(LengthBucket::Short),
            Style::Medium => Some(LengthBucket::Medium),
            Style::Long => Some(LengthBucket::Long),
            _ => None,
        }
    }
}

/// Buckets a caption by content-token count: `[0,10)`, `[10,16)`, `[16,inf)`.
pub fn length_bucket(num_tokens: usize) -> LengthBucket {
    match num_tokens {
        0..=9 => LengthBucket::Short,
        10..=15 => LengthBucket::Medium,
        _ => LengthBucket::Long,
    }
}
