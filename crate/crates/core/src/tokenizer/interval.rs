//! Time-interval tokens.
//!
//! Gaps between consecutive events are written as one of 13 bucket tokens.
//! Gaps under five minutes produce no token, and gaps of six months or more
//! become a run of `_=6mt` tokens whose length approximates the gap.

use serde::{Deserialize, Serialize};

pub const MINUTES_PER_HOUR: f64 = 60.0;
pub const MINUTES_PER_DAY: f64 = 1440.0;
pub const DAYS_PER_YEAR: f64 = 365.25;
pub const MINUTES_PER_YEAR: f64 = DAYS_PER_YEAR * MINUTES_PER_DAY;

/// Smallest gap that is represented by a token.
pub const MIN_GAP_MINUTES: f64 = 5.0;
/// Length represented by one `_=6mt` token.
pub const SIX_MONTHS_DAYS: f64 = 182.5;

const MONTH_MINUTES: f64 = SIX_MONTHS_DAYS / 6.0 * MINUTES_PER_DAY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBucket {
    pub name: String,
    pub lower_minutes: f64,
    /// `None` for the open-ended six-month bucket.
    pub upper_minutes: Option<f64>,
    pub representative_minutes: f64,
}

impl IntervalBucket {
    fn bounded(name: &str, lower: f64, upper: f64) -> Self {
        IntervalBucket {
            name: name.to_string(),
            lower_minutes: lower,
            upper_minutes: Some(upper),
            representative_minutes: 0.5 * (lower + upper),
        }
    }

    pub fn representative_days(&self) -> f64 {
        self.representative_minutes / MINUTES_PER_DAY
    }

    pub fn contains(&self, minutes: f64) -> bool {
        minutes >= self.lower_minutes && self.upper_minutes.map_or(true, |u| minutes < u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeIntervalScheme {
    buckets: Vec<IntervalBucket>,
}

impl Default for TimeIntervalScheme {
    fn default() -> Self {
        Self::standard()
    }
}

impl TimeIntervalScheme {
    /// The fixed 13-bucket scheme.
    pub fn standard() -> Self {
        let h = MINUTES_PER_HOUR;
        let d = MINUTES_PER_DAY;
        let buckets = vec![
            IntervalBucket::bounded("_5m-15m", 5.0, 15.0),
            IntervalBucket::bounded("_15m-1h", 15.0, h),
            IntervalBucket::bounded("_1h-2h", h, 2.0 * h),
            IntervalBucket::bounded("_2h-6h", 2.0 * h, 6.0 * h),
            IntervalBucket::bounded("_6h-12h", 6.0 * h, 12.0 * h),
            IntervalBucket::bounded("_12h-1d", 12.0 * h, d),
            IntervalBucket::bounded("_1d-3d", d, 3.0 * d),
            IntervalBucket::bounded("_3d-1w", 3.0 * d, 7.0 * d),
            IntervalBucket::bounded("_1w-2w", 7.0 * d, 14.0 * d),
            IntervalBucket::bounded("_2w-1mt", 14.0 * d, MONTH_MINUTES),
            IntervalBucket::bounded("_1mt-3mt", MONTH_MINUTES, 3.0 * MONTH_MINUTES),
            IntervalBucket::bounded("_3mt-6mt", 3.0 * MONTH_MINUTES, 6.0 * MONTH_MINUTES),
            IntervalBucket {
                name: "_=6mt".to_string(),
                lower_minutes: 6.0 * MONTH_MINUTES,
                upper_minutes: None,
                representative_minutes: SIX_MONTHS_DAYS * d,
            },
        ];
        TimeIntervalScheme { buckets }
    }

    pub fn buckets(&self) -> &[IntervalBucket] {
        &self.buckets
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn six_month_index(&self) -> usize {
        self.buckets.len() - 1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.buckets.iter().position(|b| b.name == name)
    }

    pub fn bucket(&self, index: usize) -> &IntervalBucket {
        &self.buckets[index]
    }

    /// Bucket indices for a gap. Negative gaps are treated as zero.
    pub fn encode(&self, gap_minutes: f64) -> Vec<usize> {
        let gap = if gap_minutes.is_finite() { gap_minutes.max(0.0) } else { 0.0 };
        if gap < MIN_GAP_MINUTES {
            return Vec::new();
        }
        let six = self.six_month_index();
        if gap >= self.buckets[six].lower_minutes {
            let runs = (gap / self.buckets[six].representative_minutes).round().max(1.0) as usize;
            return vec![six; runs];
        }
        let idx = self
            .buckets
            .iter()
            .position(|b| b.contains(gap))
            .expect("buckets cover [5 min, 6 months)");
        vec![idx]
    }

    /// Bucket names for a gap; see [`TimeIntervalScheme::encode`].
    pub fn encode_names(&self, gap_minutes: f64) -> Vec<&str> {
        self.encode(gap_minutes)
            .into_iter()
            .map(|i| self.buckets[i].name.as_str())
            .collect()
    }
}
