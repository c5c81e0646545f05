pub mod algebra;
pub mod lexer;
pub mod rules;
pub mod schema;
pub mod shell;
pub mod store;
