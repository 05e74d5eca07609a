//! Decile binning of numeric values, fitted per category on training data.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TokenizerError;

pub const N_QUANTILES: usize = 10;

const BINNER_FORMAT: &str = "ethos-binner";
const BINNER_VERSION: u32 = 1;

/// Cutpoints and per-bin means for one numeric category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryBins {
    /// Nine non-decreasing interior cutpoints.
    pub cutpoints: Vec<f64>,
    /// Mean training value for each of the ten bins.
    pub means: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl CategoryBins {
    /// Fits bins so that no distinct value is split across two bins.
    ///
    /// Cutpoint `k` sits between the two distinct values whose cumulative
    /// count is closest to `k * n / 10`, so values tied at one level always
    /// share a bin.
    pub fn fit(values: &[f64]) -> Option<CategoryBins> {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.is_empty() {
            return None;
        }
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();

        let mut levels: Vec<f64> = Vec::new();
        let mut cumulative: Vec<usize> = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            if levels.last() != Some(&v) {
                levels.push(v);
                cumulative.push(0);
            }
            *cumulative.last_mut().unwrap() = i + 1;
        }

        let m = levels.len();
        let mut cutpoints = Vec::with_capacity(N_QUANTILES - 1);
        let mut j = 0usize;
        for k in 1..N_QUANTILES {
            let target = (k * n) as f64 / N_QUANTILES as f64;
            // cumulative is increasing in j and targets increase in k, so the
            // closest level can be found by walking forward
            while j + 1 < m
                && (cumulative[j + 1] as f64 - target).abs() < (cumulative[j] as f64 - target).abs()
            {
                j += 1;
            }
            let cut = if j + 1 < m { 0.5 * (levels[j] + levels[j + 1]) } else { levels[m - 1] };
            cutpoints.push(cut);
        }

        let min = sorted[0];
        let max = sorted[n - 1];
        let mut sums = [0.0f64; N_QUANTILES];
        let mut counts = [0usize; N_QUANTILES];
        for &v in &sorted {
            let b = bin_index(&cutpoints, v);
            sums[b] += v;
            counts[b] += 1;
        }
        let means = (0..N_QUANTILES)
            .map(|b| {
                if counts[b] > 0 {
                    sums[b] / counts[b] as f64
                } else {
                    let lo = if b == 0 { min } else { cutpoints[b - 1] };
                    let hi = if b == N_QUANTILES - 1 { max } else { cutpoints[b] };
                    0.5 * (lo + hi)
                }
            })
            .collect();

        Some(CategoryBins { cutpoints, means, min, max, count: n })
    }

    /// Quantile 1..=10 for a value: one plus the number of cutpoints strictly
    /// below it. Values outside the fitted range land in the extreme bins.
    pub fn bin(&self, value: f64) -> u8 {
        bin_index(&self.cutpoints, value) as u8 + 1
    }

    pub fn mean(&self, quantile: u8) -> f64 {
        self.means[quantile as usize - 1]
    }
}

fn bin_index(cutpoints: &[f64], value: f64) -> usize {
    cutpoints.iter().filter(|&&c| c < value).count()
}

/// Collects training values per category before fitting.
#[derive(Debug, Default, Clone)]
pub struct QuantileFitter {
    values: BTreeMap<String, Vec<f64>>,
}

impl QuantileFitter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a category and, if finite, one of its values.
    pub fn observe(&mut self, category: &str, value: f64) {
        let entry = self.values.entry(category.to_string()).or_default();
        if value.is_finite() {
            entry.push(value);
        }
    }

    pub fn fit(self) -> Result<QuantileBinner, TokenizerError> {
        let empty: Vec<String> = self
            .values
            .iter()
            .filter(|(_, v)| v.is_empty())
            .map(|(k, _)| k.clone())
            .collect();
        if !empty.is_empty() {
            return Err(TokenizerError::EmptyCategories(empty));
        }
        let categories = self
            .values
            .into_iter()
            .map(|(k, v)| {
                let bins = CategoryBins::fit(&v).expect("non-empty");
                (k, bins)
            })
            .collect();
        Ok(QuantileBinner { categories })
    }
}

/// Fits decile bins for every category in `samples`.
pub fn fit_quantiles<'a, I>(samples: I) -> Result<QuantileBinner, TokenizerError>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let mut fitter = QuantileFitter::new();
    for (category, value) in samples {
        fitter.observe(category, value);
    }
    fitter.fit()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantileBinner {
    categories: BTreeMap<String, CategoryBins>,
}

#[derive(Serialize, Deserialize)]
struct BinnerFile {
    format: String,
    version: u32,
    categories: BTreeMap<String, CategoryBins>,
}

impl QuantileBinner {
    pub fn category(&self, category: &str) -> Option<&CategoryBins> {
        self.categories.get(category)
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &CategoryBins)> {
        self.categories.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn contains(&self, category: &str) -> bool {
        self.categories.contains_key(category)
    }

    pub fn bin_value(&self, category: &str, value: f64) -> Result<u8, TokenizerError> {
        self.categories
            .get(category)
            .map(|b| b.bin(value))
            .ok_or_else(|| TokenizerError::UnknownCategory(category.to_string()))
    }

    pub fn to_json(&self) -> String {
        let file = BinnerFile {
            format: BINNER_FORMAT.to_string(),
            version: BINNER_VERSION,
            categories: self.categories.clone(),
        };
        serde_json::to_string_pretty(&file).expect("binner serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TokenizerError> {
        let file: BinnerFile = serde_json::from_str(text)?;
        if file.format != BINNER_FORMAT || file.version != BINNER_VERSION {
            return Err(TokenizerError::Format(format!(
                "unsupported binner {} v{}",
                file.format, file.version
            )));
        }
        Ok(QuantileBinner { categories: file.categories })
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
