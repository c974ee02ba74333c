fn main() {
    std::process::exit(isowatt::cli::main());
}
