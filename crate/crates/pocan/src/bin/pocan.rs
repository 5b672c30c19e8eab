fn main() {
    std::process::exit(pocan::cli::main());
}
