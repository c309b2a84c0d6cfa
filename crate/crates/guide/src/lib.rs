// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! The tiltrio guide. Each module holds one chapter of the book so that its
//! code samples run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/conventions.md")]
pub mod conventions {}

#[doc = include_str!("../../../book/src/frontend.md")]
pub mod frontend {}

#[doc = include_str!("../../../book/src/attitude.md")]
pub mod attitude {}

#[doc = include_str!("../../../book/src/tilt-gate.md")]
pub mod tilt_gate {}

#[doc = include_str!("../../../book/src/registration.md")]
pub mod registration {}

#[doc = include_str!("../../../book/src/submaps.md")]
pub mod submaps {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
