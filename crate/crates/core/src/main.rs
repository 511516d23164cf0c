use clap::Parser;

fn main() {
    let cli = mnar_bounds::cli::Cli::parse();
    if let Err(e) = mnar_bounds::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
