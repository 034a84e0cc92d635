fn main() {
    std::process::exit(ltpinn::cli::main_with(std::env::args_os()));
}
