use clap::Parser;

fn main() {
    let args = sddpde::cli::Args::parse();
    std::process::exit(sddpde::cli::main_with_args(args));
}
