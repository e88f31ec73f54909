pub mod coupling;
pub mod evaluate;
pub mod gen_data;
pub mod simulate;
pub mod train;
