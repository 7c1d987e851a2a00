//! Continuous ECG-based user verification.
//!
//! Single-lead ECG is segmented into beats around detected R-peaks, screened
//! against the owner's template, weighted-averaged over a short FIFO buffer,
//! compressed to leading DCT coefficients and classified by a per-subject
//! linear SVM. A login state is held while enough recent beats verify.

pub mod beatmath;
pub mod ecgio;
pub mod enroll;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod qrs;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
