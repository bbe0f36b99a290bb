fn main() {
    std::process::exit(viewplan::cli::main_with_std());
}
