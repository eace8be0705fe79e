// SPDX-License-Identifier: Apache-2.0

//! tesserflow: an embeddable spatiotemporal query engine.

pub mod codec;
pub mod demo;
pub mod engine;
pub mod fdb;
pub mod geo;
pub mod model;
pub mod schema;
pub mod testkit;
pub mod value;
pub mod wfl;
