//! Reference elements, quadrature and continuous Lagrange spaces.

pub mod quadrature;
pub mod reference;
pub mod space;

pub use quadrature::{quadrature_rule, CellKind, QuadratureRule};
pub use reference::ReferenceElement;
pub use space::{CellMap, FeSpace, ShapeTable, SpaceRole};
