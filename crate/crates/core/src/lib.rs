//! Exact enumeration engine for disjoint-occurrence (BK-type) inequalities.
//!
//! Everything here works on explicit finite configuration spaces `S^n`:
//! events are bitsets over the mixed-radix configuration index, measures
//! are weight tables, and every inequality is checked by full enumeration.
//!
//! Module map:
//!
//! - [`config_space`]: spaces, configurations, events, cylinders, flips and
//!   increasing events.
//! - [`box_ops`]: the disjoint-occurrence operator, witness pairs, selection
//!   rules and the restricted operator.
//! - [`measures`]: measure families, lattice conditions and BK/FKG pair checks.
//! - [`gibbs_potential`]: hyperedge potentials, inefficient edges and clusters.
//! - [`folding`]: folded measures and folded potentials.
//! - [`rcr`]: generalized random-cluster representations and the hypothesis
//!   checks that feed the general inequality.
//! - [`perm_solver`]: the permutation-invariant triangular system and the
//!   matching base.
//!
//! Sites are numbered from 0 throughout.

pub mod bitset;
pub mod box_ops;
pub mod config_space;
pub mod error;
pub mod folding;
pub mod gibbs_potential;
pub mod measures;
pub mod partition;
pub mod perm_solver;
pub mod rcr;

pub use bitset::Bitset;
pub use box_ops::{
    box_op, boxminus, minimal_witnesses, reimer_gap, PreparedRule, SelectionRule, WitnessPair,
    WitnessTable,
};
pub use config_space::{
    cylinder, enumerate_increasing, flip_all, flip_configuration, flip_event, is_increasing,
    Configuration, Event, SitePairing, SiteSet, SpaceSpec,
};
pub use error::{Error, Result};
pub use folding::{
    cw_fold_parameter, cw_fold_parameter_of, enumerate_layouts, fold, fold_binary, fold_with,
    folded_potential, folded_potential_with, FoldLayout, Folding, Lock,
};
pub use gibbs_potential::{
    canonical_potential, efficient_cluster, is_inefficient, specialized_cluster,
    specialized_partition, ClusterKind, InteractionGraph, Potential, PotentialSpec,
    PreparedPotential,
};
pub use measures::{
    build_exact_measure, build_measure, check_bk_exact, check_bk_pair, check_bk_prepared,
    check_fkg_pair, check_lattice_condition, gibbs_measure, BkReport, Couplings, ExactFamily,
    ExactMeasure, FamilySpec, LatticeSign, Measure,
};
pub use partition::Partition;
pub use perm_solver::{
    akj, count_matchings, matching_base, matching_base_on, solve_xi, solve_xi_exact, solve_xi_x,
    solve_xi_x_exact, XiSolution,
};
pub use rcr::{
    check_cardinality_lemma, check_condition_i, check_condition_ii, check_condition_ii_prepared,
    compatible, eta_clusters, gibbs_base, validate_rcr, EtaConfig, RcrBase, SeparationView,
};
