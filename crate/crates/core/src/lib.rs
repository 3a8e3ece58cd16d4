//! Construction and evaluation of similarity networks from spatio-temporal
//! fields sampled on the sphere.

pub mod bundles;
pub mod data_io;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod lab;
pub mod linalg;
pub mod netbuild;
pub mod netmeasure;
pub mod random_field;
pub mod seeds;
pub mod similarity;
pub mod sphere_grid;
pub mod surrogates;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use sphere_grid::SphereGrid;
