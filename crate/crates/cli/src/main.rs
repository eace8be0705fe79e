// SPDX-License-Identifier: Apache-2.0

use clap::Parser;
use tesserflow_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr().lock());
    if let Err(e) = run(cli, &mut out, &mut err) {
        drop(out);
        eprintln!("error: {}", e.msg);
        std::process::exit(e.code);
    }
}
