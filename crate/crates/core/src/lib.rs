//! Rule extraction from binarized CNN kernel activations.
//!
//! The crate covers the whole path from feature-map norms to a labelled
//! stratified rule program: [`quantize`] turns norms into bits, [`induction`]
//! learns a default-with-exceptions decision list, [`inference`] runs it,
//! and [`labeller`] names the kernels it uses from segmentation masks.

pub mod error;
pub mod induction;
pub mod inference;
pub mod interchange;
pub mod labeller;
pub mod pipeline;
pub mod quantize;
pub mod ruleset;

pub use error::{Error, Result};
