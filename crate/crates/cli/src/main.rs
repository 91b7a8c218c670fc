// SPDX-License-Identifier: MIT OR Apache-2.0

use clap::Parser;

fn main() {
    let cli = sncp_cli::Cli::parse();
    std::process::exit(sncp_cli::run(&cli));
}
