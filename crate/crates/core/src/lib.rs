pub mod credit;
pub mod dejd;
pub mod error;
pub mod estimation;
pub mod laplace;
pub mod loss;
pub mod mc;
pub mod capital;
