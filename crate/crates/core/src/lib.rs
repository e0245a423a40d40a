pub mod blocks;
pub mod corpus;
pub mod features;
pub mod partition;
pub mod synthetic;
pub mod tensor;
pub mod textprep;
pub mod trainer;
