use clap::Parser;

fn main() {
    let cli = relaynet_cli::Cli::parse();
    std::process::exit(relaynet_cli::run(cli));
}
