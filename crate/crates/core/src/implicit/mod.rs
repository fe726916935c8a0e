//! Implicit contacts: agents meet co-members of shared contexts (home
//! cell, household, workplace, school) plus occasional long-range partners
//! drawn through origin-destination matrices over a nested tessellation.

pub mod od;
pub mod population;
pub mod synthetic;
pub mod tessellation;

pub use od::{sample_longrange_region, OdMatrix, OdMatrixSet};
pub use population::{
    load_population, resolve_activity, sample_implicit_contacts, ActivityRule, Agent,
    ImplicitOptions, ImplicitSample, ImplicitWorld,
};
pub use synthetic::{default_activity_rules, synthetic_population, write_dataset, SyntheticConfig};
pub use tessellation::Tessellation;
