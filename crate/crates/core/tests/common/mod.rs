//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod mapper_oracle;
