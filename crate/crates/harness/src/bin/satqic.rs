fn main() {
    std::process::exit(satqic::cli::main_with(std::env::args_os()));
}
