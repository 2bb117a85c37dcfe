pub mod code_model;
pub mod mcts;
pub mod pipeline;
pub mod refiner;
pub mod safety;
pub mod validation;
