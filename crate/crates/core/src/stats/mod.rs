//! Statistical battery used to profile the finished dataset.

pub mod chisq;
pub mod ks;
pub mod linalg;
pub mod nb;
pub mod profile;
pub mod special;
pub mod vif;

pub use chisq::{chi_square_gof, chi_square_independence, ChiSquareError, ChiSquareMode, ChiSquareResult};
pub use ks::{ks_two_sample, KsError, KsMethod, KsResult};
pub use linalg::Matrix;
pub use nb::{nb_regression, NbError, NbFit, NbOptions};
pub use profile::{combination_profile, engagement_profile, CombinationStats, EngagementReport, Pattern, ProfileError};
pub use vif::{vif, VifError};
