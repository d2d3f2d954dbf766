pub mod cli;
pub mod lp;
pub mod mat;
pub mod estimation;
pub mod qp;
pub mod scenario;
pub mod sets;
pub mod sim;
pub mod smpc;
