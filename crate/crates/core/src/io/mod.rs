pub mod artifact;
pub mod csv;
pub mod store;

pub use artifact::{read_run, write_run, ArtifactError, RunArtifact, SCHEMA_VERSION};
pub use csv::{parse_deaths_csv, parse_mobility_csv, CsvError, DeathsData, MobilityData};
pub use store::{ArtifactStore, StoreError};
