//! Static header tokens and SOFA quantiles.

use serde::{Deserialize, Serialize};

pub const DEFAULT_AGE_BUCKETS: usize = 20;
pub const AGE_BUCKET_YEARS: f64 = 5.0;
pub const SOFA_MAX: u8 = 23;

/// Five-year bucket label shared by age and years-since-1970 tokens.
/// Values at or beyond the top bucket clamp to it.
pub fn encode_age_bucket(years: f64, n_buckets: usize) -> String {
    let n = n_buckets.max(1);
    let idx = if years.is_finite() && years > 0.0 {
        ((years / AGE_BUCKET_YEARS).floor() as usize).min(n - 1)
    } else {
        0
    };
    bucket_label(idx)
}

pub fn bucket_label(index: usize) -> String {
    let lo = index * AGE_BUCKET_YEARS as usize;
    format!("{}_{} years", lo, lo + AGE_BUCKET_YEARS as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::Female, Sex::Male];

    pub fn parse(s: &str) -> Option<Sex> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F" | "FEMALE" => Some(Sex::Female),
            "M" | "MALE" => Some(Sex::Male),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Sex::Female => "SEX_F",
            Sex::Male => "SEX_M",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Race {
    White,
    Black,
    Hispanic,
    Asian,
    Other,
    Unknown,
}

impl Race {
    pub const ALL: [Race; 6] =
        [Race::White, Race::Black, Race::Hispanic, Race::Asian, Race::Other, Race::Unknown];

    /// Collapses free-text race descriptions by prefix.
    pub fn parse(s: &str) -> Race {
        let s = s.trim().to_ascii_uppercase();
        if s.is_empty()
            || s.starts_with("UNKNOWN")
            || s.starts_with("UNABLE")
            || s.starts_with("PATIENT DECLINED")
        {
            Race::Unknown
        } else if s.starts_with("WHITE") || s.starts_with("PORTUGUESE") {
            Race::White
        } else if s.starts_with("BLACK") {
            Race::Black
        } else if s.starts_with("HISPANIC") || s.starts_with("SOUTH AMERICAN") {
            Race::Hispanic
        } else if s.starts_with("ASIAN") {
            Race::Asian
        } else {
            Race::Other
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Race::White => "RACE_WHITE",
            Race::Black => "RACE_BLACK",
            Race::Hispanic => "RACE_HISPANIC",
            Race::Asian => "RACE_ASIAN",
            Race::Other => "RACE_OTHER",
            Race::Unknown => "RACE_UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Marital {
    Unknown,
    Married,
    Single,
    Widowed,
    Divorced,
}

impl Marital {
    pub const ALL: [Marital; 5] =
        [Marital::Unknown, Marital::Married, Marital::Single, Marital::Widowed, Marital::Divorced];

    pub fn parse(s: &str) -> Marital {
        match s.trim().to_ascii_uppercase().as_str() {
            "MARRIED" => Marital::Married,
            "SINGLE" => Marital::Single,
            "WIDOWED" => Marital::Widowed,
            "DIVORCED" => Marital::Divorced,
            _ => Marital::Unknown,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Marital::Unknown => "MARITAL_UNKNOWN",
            Marital::Married => "MARITAL_MARRIED",
            Marital::Single => "MARITAL_SINGLE",
            Marital::Widowed => "MARITAL_WIDOWED",
            Marital::Divorced => "MARITAL_DIVORCED",
        }
    }
}

/// SOFA score to quantile: scores 0..=23 spread uniformly over ten bins.
pub fn sofa_quantile(score: u8) -> Option<u8> {
    (score <= SOFA_MAX).then(|| 1 + (score as u32 * 10 / 24) as u8)
}

/// Mean of the integer scores that map to `quantile`.
pub fn sofa_quantile_mean(quantile: u8) -> f64 {
    let scores: Vec<u8> = (0..=SOFA_MAX).filter(|&s| sofa_quantile(s) == Some(quantile)).collect();
    if scores.is_empty() {
        return f64::NAN;
    }
    scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len() as f64
}

/// `(quantile, mean of its bin)` for a score.
pub fn encode_sofa(score: u8) -> Option<(u8, f64)> {
    sofa_quantile(score).map(|q| (q, sofa_quantile_mean(q)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn age_buckets() {
        assert_eq!(encode_age_bucket(46.0, 20), "45_50 years");
        assert_eq!(encode_age_bucket(0.0, 20), "0_5 years");
        assert_eq!(encode_age_bucket(12.0, 20), "10_15 years");
        assert_eq!(encode_age_bucket(61.2, 20), "60_65 years");
        assert_eq!(encode_age_bucket(250.0, 20), "95_100 years");
        assert_eq!(encode_age_bucket(-3.0, 20), "0_5 years");
    }

    #[test]
    fn sofa_examples() {
        for s in 0..=2 {
            assert_eq!(sofa_quantile(s), Some(1));
        }
        assert_eq!(sofa_quantile(3), Some(2));
        assert_eq!(sofa_quantile(4), Some(2));
        assert_eq!(sofa_quantile(23), Some(10));
        assert_eq!(sofa_quantile(24), None);
        assert_eq!(sofa_quantile_mean(1), 1.0);
        assert_eq!(sofa_quantile_mean(2), 3.5);
        assert_eq!(encode_sofa(4), Some((2, 3.5)));
        for q in 1..=10 {
            assert!(sofa_quantile_mean(q).is_finite());
        }
    }

    #[test]
    fn race_prefixes() {
        assert_eq!(Race::parse("WHITE - RUSSIAN"), Race::White);
        assert_eq!(Race::parse("BLACK/AFRICAN AMERICAN"), Race::Black);
        assert_eq!(Race::parse("UNABLE TO OBTAIN"), Race::Unknown);
        assert_eq!(Race::parse("AMERICAN INDIAN/ALASKA NATIVE"), Race::Other);
    }
}
