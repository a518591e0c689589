use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::HarError;

/// The four recorded activities, in the fixed order used for confusion-matrix
/// axes, one-vs-one pairings and vote tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLabel {
    Walk,
    Run,
    BikeLow,
    BikeHigh,
}

impl ActivityLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [ActivityLabel; 4] = [
        ActivityLabel::Walk,
        ActivityLabel::Run,
        ActivityLabel::BikeLow,
        ActivityLabel::BikeHigh,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityLabel::Walk => "walk",
            ActivityLabel::Run => "run",
            ActivityLabel::BikeLow => "bike_low",
            ActivityLabel::BikeHigh => "bike_high",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityLabel {
    type Err = HarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walk" => Ok(ActivityLabel::Walk),
            "run" => Ok(ActivityLabel::Run),
            "bike_low" | "low" | "low_resistance_bike" => Ok(ActivityLabel::BikeLow),
            "bike_high" | "high" | "high_resistance_bike" => Ok(ActivityLabel::BikeHigh),
            other => Err(HarError::config(format!("unknown activity label '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_fixed() {
        let idx: Vec<usize> = ActivityLabel::ALL.iter().map(|l| l.index()).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert!(ActivityLabel::Walk < ActivityLabel::BikeHigh);
    }

    #[test]
    fn parse_round_trip() {
        for l in ActivityLabel::ALL {
            assert_eq!(l.as_str().parse::<ActivityLabel>().unwrap(), l);
        }
        assert!("swim".parse::<ActivityLabel>().is_err());
    }
}
