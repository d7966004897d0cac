pub mod el;
pub mod facts;
pub mod generate;
pub mod interpret;
pub mod pack;
pub mod planner;
pub mod schema;
pub mod session;
pub mod transduction;
