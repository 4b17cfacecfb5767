use clap::Parser;

fn main() {
    std::process::exit(specradius_cli::run(specradius_cli::Cli::parse()));
}
