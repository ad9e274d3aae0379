//! Nonexpansivity certificates and omega-limit set classification for
//! autonomous ODEs `dx/dt = f(x)`.

pub mod catalog;
pub mod contraction;
pub mod document;
pub mod error;
pub mod expr;
pub mod limitset;
pub mod linear;
pub mod norms;
pub mod odeint;
pub mod reproduce;

pub use error::{Error, Result};
pub use expr::{parse_field, Expr, VectorFieldDef};
pub use norms::{NormSpec, SupportingNormalSet};
