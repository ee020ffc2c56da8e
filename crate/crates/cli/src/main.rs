fn main() {
    std::process::exit(gaitway_cli::main_with(std::env::args_os()));
}
