//! Composite likelihood evidence for correlated binary traits in families.

pub mod dataset;
pub mod error;
pub mod evidence;
pub mod likelihood;
pub mod misleading;
pub mod model;
pub mod normal;
pub mod output;
pub mod pedigree;
pub mod plackett;
pub mod scan;
pub mod simulate;
pub mod study;

pub use dataset::{Dataset, DatasetFamily};
pub use error::{Error, Result};
pub use evidence::{InformationEstimates, SupportInterval};
pub use likelihood::{CLEvaluation, CLKind, CompositeLikelihood, Param, ParamLayout, ProfileCurve};
pub use misleading::{BumpCurve, FwerRecord, MisleadingEstimate};
pub use model::{DependenceOdds, FamilyData, Genotype, ModelParams, PairClasses, RelationshipClass};
pub use output::OutputFormat;
pub use pedigree::{PedigreeMember, PedigreeTemplate};
pub use plackett::{PairJoint, PairMargins};
pub use scan::{ScanFlag, ScanOptions, ScanRecord};
pub use simulate::{LatentGaussianSpec, PhenotypeSampler, SimConfig};
pub use study::ReplicateSummary;
