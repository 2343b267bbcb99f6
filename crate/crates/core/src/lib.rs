pub mod checkpoint;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod es;
pub mod executor;
pub mod features;
pub mod field;
pub mod metrics;
pub mod policy;
pub mod primitives;
pub mod reference;
pub mod spectral;
pub(crate) mod swe;
pub mod system;
pub(crate) mod timestep;
pub mod training;

pub use error::{Error, Result};
pub use field::{Boundary, Field, Grid};
pub use primitives::{apply_primitive, default_dictionary, Mechanism, PrimitiveSpec, SubstepPolicy, Substeps};
pub use system::{PdeParams, Query, System};
