//! Geodesics, hinged energy and small-time heat kernel asymptotics on
//! sub-Riemannian model spaces.

pub mod asymfit;
pub mod error;
pub mod flow;
pub mod heat;
pub mod hinged;
pub mod io;
pub mod laplace;
pub mod models;
pub mod quad;
pub mod shoot;

pub use error::{Error, Result};
pub use models::{make_model, ModelId, SrModel};
