//! State carried between domains: handles, policy transfer tokens and
//! their wire encoding.

mod handle;
mod merge;
mod wire;

pub use handle::{AugmentedHeader, Handle, IntegrityError, KeyRing, PolicyTransferToken, TAG_LEN};
pub use merge::{merge_constraints, Merged, Unsatisfiable};
pub use wire::{decode_augmented, encode_augmented, WireError, WIRE_MAGIC};
