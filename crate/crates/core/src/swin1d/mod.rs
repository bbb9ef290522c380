//! One-dimensional shifted-window transformer layers.

mod attention;
mod block;
mod patch;
mod windows;

pub use attention::{relative_index, WindowAttention};
pub use block::{SwinBlock, SwinStage, MLP_RATIO};
pub use patch::{FinalPatchExpand, PatchEmbed, PatchExpand, PatchMerge};
pub use windows::{
    attention_mask, cyclic_shift, segment_ids, window_partition, window_reverse, WindowMask, MASK_VALUE,
};

/// Heads for a stage of width `dim`: `dim / head_dim`, at least one, reduced
/// until it divides `dim`.
pub fn heads_for(dim: usize, head_dim: usize) -> usize {
    let mut h = (dim / head_dim.max(1)).max(1);
    while !dim.is_multiple_of(h) {
        h -= 1;
    }
    h
}
