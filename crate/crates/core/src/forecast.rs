//! The shared forecasting contract and the recursive multi-step strategy.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::SeriesPanel;
use crate::error::{Error, Result};

/// Registered model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Ar,
    Rw,
    Rf,
    Gbt,
    Fc,
    #[serde(rename = "deepnn")]
    DeepNn,
    Sgru,
    Igru,
    #[serde(rename = "knngru")]
    KnnGru,
    Hrnn,
    #[serde(rename = "bihrnn")]
    BiHrnn,
}

impl ModelTag {
    pub const ALL: [ModelTag; 11] = [
        ModelTag::Ar,
        ModelTag::Rw,
        ModelTag::Rf,
        ModelTag::Gbt,
        ModelTag::Fc,
        ModelTag::DeepNn,
        ModelTag::Sgru,
        ModelTag::Igru,
        ModelTag::KnnGru,
        ModelTag::Hrnn,
        ModelTag::BiHrnn,
    ];

    /// Lower-case config key.
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Ar => "ar",
            ModelTag::Rw => "rw",
            ModelTag::Rf => "rf",
            ModelTag::Gbt => "gbt",
            ModelTag::Fc => "fc",
            ModelTag::DeepNn => "deepnn",
            ModelTag::Sgru => "sgru",
            ModelTag::Igru => "igru",
            ModelTag::KnnGru => "knngru",
            ModelTag::Hrnn => "hrnn",
            ModelTag::BiHrnn => "bihrnn",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelTag::Ar => "AR",
            ModelTag::Rw => "RW",
            ModelTag::Rf => "RF",
            ModelTag::Gbt => "GBT",
            ModelTag::Fc => "FC",
            ModelTag::DeepNn => "Deep-NN",
            ModelTag::Sgru => "S-GRU",
            ModelTag::Igru => "I-GRU",
            ModelTag::KnnGru => "KNN-GRU",
            ModelTag::Hrnn => "HRNN",
            ModelTag::BiHrnn => "BiHRNN",
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(
            self,
            ModelTag::Sgru | ModelTag::Igru | ModelTag::KnnGru | ModelTag::Hrnn | ModelTag::BiHrnn
        )
    }

    /// Report label such as `HRNN(4)`.
    pub fn label(self, rho: usize) -> String {
        format!("{}({})", self.display_name(), rho)
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model tag {s:?}")))
    }
}

/// Anything that can produce multi-step forecasts for a node of a panel.
pub trait Forecaster: Sync {
    fn label(&self) -> String;

    fn lookback(&self) -> usize;

    /// Forecasts positions `origin, origin + 1, ..., origin + horizon` of
    /// `node` using only observations before `origin`. Entry 0 is the
    /// one-step-ahead prediction.
    fn forecast(
        &self,
        panel: &SeriesPanel,
        node: &str,
        origin: usize,
        horizon: usize,
    ) -> Result<Vec<f64>>;
}

/// Feeds each one-step prediction back into the lookback window.
pub fn recursive_forecast<F>(
    rates: &[f64],
    node: &str,
    origin: usize,
    rho: usize,
    horizon: usize,
    mut predict: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if rho == 0 || origin < rho || origin > rates.len() {
        return Err(Error::InsufficientHistory {
            node: node.into(),
            origin,
            rho,
        });
    }
    let mut window: Vec<f64> = rates[origin - rho..origin].to_vec();
    let mut out = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let y = predict(&window)?;
        out.push(y);
        window.remove(0);
        window.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tags_round_trip() {
        for t in ModelTag::ALL {
            assert_eq!(t.as_str().parse::<ModelTag>().unwrap(), t);
        }
        assert!("svr".parse::<ModelTag>().is_err());
        assert_eq!(ModelTag::Hrnn.label(4), "HRNN(4)");
    }

    #[test]
    fn recursion_feeds_predictions_back() {
        // predict = sum of the window
        let out =
            recursive_forecast(&[1.0, 2.0, 3.0], "n", 3, 2, 2, |w| Ok(w.iter().sum())).unwrap();
        assert_eq!(out, vec![5.0, 8.0, 13.0]);
        assert!(recursive_forecast(&[1.0], "n", 0, 1, 0, |_| Ok(0.0)).is_err());
    }
}
