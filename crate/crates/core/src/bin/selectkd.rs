fn main() {
    std::process::exit(selectkd::cli::main_from_env());
}
