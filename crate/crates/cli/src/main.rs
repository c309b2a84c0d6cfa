// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    std::process::exit(tiltrio_cli::cli_main(std::env::args_os()));
}
