//! State-space recurrence: the selective scan, its four-directional 2-D
//! extension, and the VSS block built from them.

mod block;
mod cross;
mod scan;

pub use block::{
    block_perms, vss_block_forward, vss_block_graph, ScanPerms, VssBlockCfg, VssBlockIdx,
    VssBlockParams, NORM_EPS,
};
pub use cross::{cross_merge, cross_scan, scan_order, token_perm};
pub use scan::{
    scan_graph, selective_scan, selective_scan_f32, selective_scan_sequential,
    selective_scan_sequential_from, ScanInput, SsmParams,
};
