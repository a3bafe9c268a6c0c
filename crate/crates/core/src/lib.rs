pub mod chr;
pub mod cli;
pub mod confluence;
pub mod desugar;
pub mod herbrand;
pub mod inference;
pub mod pretty;
pub mod syntax;
