fn main() {
    std::process::exit(inertia_cli::main_with(std::env::args_os()));
}
