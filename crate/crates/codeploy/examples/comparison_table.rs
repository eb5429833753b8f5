//! Compares the four methods on the two-subsystem case across scenario counts.

use codeploy::bundled;
use codeploy::pipeline::{table, write_text, Method, RunOptions};

fn main() -> codeploy::Result<()> {
    let methods = [Method::Deterministic, Method::Full, Method::Approach1, Method::Approach2];
    let rows = table(&bundled::case2(), &[2, 4, 8, 16], &methods, &RunOptions::default())?;
    write_text(&rows, std::io::stdout().lock())
}
