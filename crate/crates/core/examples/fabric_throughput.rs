//! Measure how many messages per second the simulated fabric routes.
//!
//! ```text
//! cargo run --release --example fabric_throughput -- [messages]
//! ```

use lightpath::simnet::throughput_probe;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    println!("{n} messages: {:.0} msg/s", throughput_probe(n));
}
