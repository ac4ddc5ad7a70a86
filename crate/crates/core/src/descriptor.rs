//! Structured rooftop PV descriptors and the interval-to-capacity mapping.
//!
//! A descriptor is the four-field record `[presence, quantity, location,
//! explanation]` produced for one rooftop image. Quantities are coarse
//! panel-count intervals rather than counts, and every downstream module
//! (retrieval prompts, evaluation, feeder simulation) exchanges them through
//! the canonical string forms defined here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by descriptor-level operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptorError {
    #[error("no representative count for NA")]
    NoRepresentativeCount,
    #[error("NA has no neighboring intervals")]
    NoNeighbors,
    #[error("per-panel rating must be positive, got {0}")]
    InvalidPanelRating(String),
    #[error("unknown {field} token {token:?}")]
    Vocabulary { field: &'static str, token: String },
}

/// Panel-count interval. The four non-NA values are totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuantityInterval {
    /// (0, 1]
    ZeroToOne,
    /// (1, 5]
    OneToFive,
    /// (5, 10]
    FiveToTen,
    /// (10, +inf)
    TenPlus,
    Na,
}

impl QuantityInterval {
    /// Non-NA intervals in ascending order.
    pub const ORDERED: [QuantityInterval; 4] = [
        QuantityInterval::ZeroToOne,
        QuantityInterval::OneToFive,
        QuantityInterval::FiveToTen,
        QuantityInterval::TenPlus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuantityInterval::ZeroToOne => "(0,1]",
            QuantityInterval::OneToFive => "(1,5]",
            QuantityInterval::FiveToTen => "(5,10]",
            QuantityInterval::TenPlus => "(10,inf)",
            QuantityInterval::Na => "NA",
        }
    }

    pub fn is_na(self) -> bool {
        self == QuantityInterval::Na
    }

    /// Position in the total order, `None` for NA.
    pub fn rank(self) -> Option<usize> {
        Self::ORDERED.iter().position(|&q| q == self)
    }

    /// Numeric bounds `(lower_exclusive, upper_inclusive)`; the last interval
    /// is open above.
    pub fn bounds(self) -> Option<(f64, f64)> {
        match self {
            QuantityInterval::ZeroToOne => Some((0.0, 1.0)),
            QuantityInterval::OneToFive => Some((1.0, 5.0)),
            QuantityInterval::FiveToTen => Some((5.0, 10.0)),
            QuantityInterval::TenPlus => Some((10.0, f64::INFINITY)),
            QuantityInterval::Na => None,
        }
    }

    /// Representative panel count used when converting an interval to a
    /// capacity: 0.5, 3, 7 and 12 for the four ordered intervals.
    pub fn representative_count(self) -> Result<f64, DescriptorError> {
        match self {
            QuantityInterval::ZeroToOne => Ok(0.5),
            QuantityInterval::OneToFive => Ok(3.0),
            QuantityInterval::FiveToTen => Ok(7.0),
            QuantityInterval::TenPlus => Ok(12.0),
            QuantityInterval::Na => Err(DescriptorError::NoRepresentativeCount),
        }
    }

    /// Installed capacity in kW for a site with this interval.
    pub fn site_capacity_kw(self, per_panel_kw: f64) -> Result<f64, DescriptorError> {
        if !(per_panel_kw > 0.0 && per_panel_kw.is_finite()) {
            return Err(DescriptorError::InvalidPanelRating(
                per_panel_kw.to_string(),
            ));
        }
        Ok(self.representative_count()? * per_panel_kw)
    }

    /// Adjacent intervals `(lower, upper)` in the total order.
    pub fn neighbors(self) -> Result<(Option<Self>, Option<Self>), DescriptorError> {
        let rank = self.rank().ok_or(DescriptorError::NoNeighbors)?;
        let lower = rank.checked_sub(1).map(|r| Self::ORDERED[r]);
        let upper = Self::ORDERED.get(rank + 1).copied();
        Ok((lower, upper))
    }
}

impl fmt::Display for QuantityInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuantityInterval {
    type Err = DescriptorError;

    /// Case-insensitive; internal whitespace and the usual spellings of
    /// infinity are accepted, nothing else.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_lowercase();
        let compact = compact.replace('∞', "inf").replace("+inf", "inf");
        match compact.as_str() {
            "(0,1]" => Ok(QuantityInterval::ZeroToOne),
            "(1,5]" => Ok(QuantityInterval::OneToFive),
            "(5,10]" => Ok(QuantityInterval::FiveToTen),
            "(10,inf)" => Ok(QuantityInterval::TenPlus),
            "na" => Ok(QuantityInterval::Na),
            _ => Err(DescriptorError::Vocabulary {
                field: "quantity",
                token: s.to_string(),
            }),
        }
    }
}

/// Coarse in-image array location on a nine-region grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocationLabel {
    Top,
    Bottom,
    Left,
    Right,
    Center,
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
    Na,
}

impl LocationLabel {
    pub const ALL: [LocationLabel; 10] = [
        LocationLabel::Top,
        LocationLabel::Bottom,
        LocationLabel::Left,
        LocationLabel::Right,
        LocationLabel::Center,
        LocationLabel::TopLeft,
        LocationLabel::TopRight,
        LocationLabel::BottomLeft,
        LocationLabel::BottomRight,
        LocationLabel::Na,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LocationLabel::Top => "top",
            LocationLabel::Bottom => "bottom",
            LocationLabel::Left => "left",
            LocationLabel::Right => "right",
            LocationLabel::Center => "center",
            LocationLabel::TopLeft => "top-left",
            LocationLabel::TopRight => "top-right",
            LocationLabel::BottomLeft => "bottom-left",
            LocationLabel::BottomRight => "bottom-right",
            LocationLabel::Na => "NA",
        }
    }

    pub fn is_na(self) -> bool {
        self == LocationLabel::Na
    }
}

impl fmt::Display for LocationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LocationLabel {
    type Err = DescriptorError;

    /// Case-insensitive; `_` and single spaces are accepted as separators.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        LocationLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| DescriptorError::Vocabulary {
                field: "location",
                token: s.to_string(),
            })
    }
}

/// Parses the canonical presence strings `"true"` / `"false"`.
pub fn parse_presence(s: &str) -> Result<bool, DescriptorError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(DescriptorError::Vocabulary {
            field: "presence",
            token: s.to_string(),
        }),
    }
}

pub fn presence_str(presence: bool) -> &'static str {
    if presence {
        "true"
    } else {
        "false"
    }
}

/// Structured PV descriptor for one rooftop image.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PvDescriptor {
    pub presence: bool,
    pub quantity: QuantityInterval,
    pub location: LocationLabel,
    pub explanation: String,
}

/// A named descriptor invariant that failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("quantity must be non-NA when present")]
    QuantityMissing,
    #[error("location must be non-NA when present")]
    LocationMissing,
    #[error("quantity must be NA when absent")]
    QuantityUnexpected,
    #[error("location must be NA when absent")]
    LocationUnexpected,
    #[error("explanation must be non-empty")]
    EmptyExplanation,
}

impl PvDescriptor {
    /// The canonical negative descriptor.
    pub fn absent(explanation: impl Into<String>) -> Self {
        PvDescriptor {
            presence: false,
            quantity: QuantityInterval::Na,
            location: LocationLabel::Na,
            explanation: explanation.into(),
        }
    }

    pub fn present(
        quantity: QuantityInterval,
        location: LocationLabel,
        explanation: impl Into<String>,
    ) -> Self {
        PvDescriptor {
            presence: true,
            quantity,
            location,
            explanation: explanation.into(),
        }
    }

    /// Checks `presence = false <=> quantity = NA <=> location = NA`.
    /// Ground-truth labels may carry an empty explanation.
    pub fn validate(&self) -> Result<(), Violation> {
        if self.presence {
            if self.quantity.is_na() {
                return Err(Violation::QuantityMissing);
            }
            if self.location.is_na() {
                return Err(Violation::LocationMissing);
            }
        } else {
            if !self.quantity.is_na() {
                return Err(Violation::QuantityUnexpected);
            }
            if !self.location.is_na() {
                return Err(Violation::LocationUnexpected);
            }
        }
        Ok(())
    }

    /// Stricter check for backend-produced descriptors.
    pub fn validate_backend_output(&self) -> Result<(), Violation> {
        self.validate()?;
        if self.explanation.trim().is_empty() {
            return Err(Violation::EmptyExplanation);
        }
        Ok(())
    }

    /// Builds a descriptor from its four canonical strings and validates it.
    pub fn from_canonical(
        presence: &str,
        quantity: &str,
        location: &str,
        explanation: &str,
    ) -> Result<Self, CanonicalError> {
        let d = PvDescriptor {
            presence: parse_presence(presence)?,
            quantity: quantity.parse()?,
            location: location.parse()?,
            explanation: explanation.to_string(),
        };
        d.validate()?;
        Ok(d)
    }
}

/// Failure to build a descriptor from strings.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonicalError {
    #[error(transparent)]
    Vocabulary(#[from] DescriptorError),
    #[error("inconsistent descriptor: {0}")]
    Consistency(#[from] Violation),
}
