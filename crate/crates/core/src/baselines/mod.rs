//! Comparison augmenters: mask-and-reconstruct and rule-based edits.

pub mod eda;
pub mod masking;

pub use eda::{eda_augment, EdaOp};
pub use masking::{
    mask_positions, mask_tokens, reconstruct, ssmba_augment, AugmentedExample, BuiltinLexical, FillMask,
    FillMaskProvider, HttpFillMask, Masked, MaskingConfig,
};
