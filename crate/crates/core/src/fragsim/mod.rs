//! Event-driven simulation of the whole fragmentation, the record process
//! `m_t`, the many-to-one cross-check, and the Crump–Mode–Jagers projection.

mod cmj;
mod engine;
mod mto;

pub use cmj::{
    cmj_project, count_heights, extract_antichain, is_prefix_free, malthusian_root, CmjMode, CmjNode, CmjOptions,
    CmjTree,
};
pub use engine::{
    record_m, run_finite_activity, run_infinite_activity, simulate, Fragment, FragmentPopulation, PruneMode,
    SimulationSpec, TruncationBias, DEFAULT_MAX_EVENTS,
};
pub use mto::{count_large, empirical_e, spine_e, spine_weight};
