pub mod kn_oracle;
pub mod synthetic;
