use clap::Parser;

fn main() {
    let cli = geoflow::cli::Cli::parse();
    std::process::exit(geoflow::cli::run(cli));
}
