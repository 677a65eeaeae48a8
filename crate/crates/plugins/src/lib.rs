//! Application plug-ins and their server-side coordinators.
//!
//! Two workloads exercise the task framework end to end:
//!
//! - `ft_news`: federated tuning of a news-personalization scorer via
//!   on-device randomized grid search, server-side distance-weighted
//!   cluster scoring and iterative search-space refinement.
//! - `fe_asr`: federated evaluation of ASR accuracy via estimated word
//!   error rate from word confidences, with exact-WER oracle and global
//!   calibration.

pub mod fe_asr;
pub mod ft_news;
