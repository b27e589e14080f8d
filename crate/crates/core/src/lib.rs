//! Anomaly detection and quantification for regional panel data.
//!
//! Two conditional-quantile models are fitted under a leave-one-region-out protocol:
//! linear quantile regression ([`qr`]) and quantile regression forests ([`forest`]).
//! Their lower and upper quantile predictions form a prediction interval per
//! `(region, year)`; observations outside it are flagged and quantified by the upper and
//! lower anomaly ratios ([`interval`]). [`metrics`] scores point and interval accuracy and
//! [`report`] aggregates the records into annual series and writes report files.

pub mod error;
pub mod forest;
pub mod interval;
pub mod metrics;
pub mod panel;
pub mod qr;
pub mod report;
pub mod stats;

pub use error::{Error, PanelErrors, PanelIssue, Result};
pub use forest::{ForestConfig, QuantileForest, RegressionTree};
pub use interval::{
    AnomalyClass, AnomalyRecord, Method, MethodConfig, PredictionInterval, TauPair,
};


pub use metrics::{IntervalMetrics, PointMetrics};
pub use panel::{DescriptiveStats, PanelDataset, PanelObservation};
pub use qr::{pinball_loss, QrModel, TauLevel};
pub use report::{AnnualAggregate, RegionClass, RegionClassification};
