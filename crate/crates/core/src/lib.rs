//! Resilience and causal responsibility of Boolean conjunctive queries.
//!
//! Exact solvers (ILP, min-cut flow), LP/MILP relaxations, approximation
//! algorithms, structural complexity classification, and Independent Join
//! Path hardness certificates, over set- or bag-semantics databases.

pub mod analysis;
pub mod approx;
pub mod bench;
pub mod flow;
pub mod gen;
pub mod ijp;
pub mod lp;
pub mod model;
pub mod resilience;
pub mod responsibility;
pub mod witness;

pub use model::{
    canonical_database, load_database, parse_query, save_database, tuple_sets_isomorphic, Atom,
    Database, ModelError, Query, Semantics, TupleKey, TupleRecord,
};
pub use witness::{compute_witnesses, has_p4_pattern, query_holds, Witness, WitnessSet};
