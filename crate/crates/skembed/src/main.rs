use clap::Parser;

fn main() {
    let cli = skembed::cli::Cli::parse();
    std::process::exit(skembed::cli::run(&cli));
}
