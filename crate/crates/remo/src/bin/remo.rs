use clap::Parser;

fn main() {
    let cli = remo::cli::Cli::parse();
    if let Err(err) = remo::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
