use std::process::exit;

fn main() {
    exit(pachinko::cli::run(std::env::args_os()));
}
