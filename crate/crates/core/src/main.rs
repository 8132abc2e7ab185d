use clap::Parser;
use lightpath::cli::run::{main_with, RunArgs};

fn main() {
    std::process::exit(main_with(RunArgs::parse()));
}
