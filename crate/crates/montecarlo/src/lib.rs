//! Monte Carlo experiments for the `ivtest` procedures: six mean-zero error
//! distributions, null and power designs for linear IV models with normal
//! instruments, a deterministic parallel replication engine, and CSV output
//! of rejection rates.
//!
//! Every replication `r` of a cell with base seed `s` draws its data from
//! `derive_seed(derive_seed(s, r), 0)` and seeds its tests with
//! `derive_seed(derive_seed(s, r), 1)`, so results do not depend on how
//! replications are scheduled across threads.

pub mod design;
pub mod dist;
pub mod engine;
pub mod error;
pub mod output;

pub use design::{
    gen_composite_power_data, gen_null_data, gen_simple_power_data, table_designs, CompositeData, DesignKind,
    ExperimentDesign, TABLE_IDS,
};
pub use dist::{draw_error, ErrorDist};
pub use engine::{paired_composite_size, replicate_table, run_cell, CellResult, PairedSize, TestKind, TestRate};
pub use error::{McError, Result};
pub use output::{records, write_csv, CsvRecord};
