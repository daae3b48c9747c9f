pub mod fkpp;
