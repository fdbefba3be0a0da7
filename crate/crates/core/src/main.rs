use std::io;
use std::process::exit;

fn main() {
    let code = speccontrol::cli::main_with(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    exit(code);
}
