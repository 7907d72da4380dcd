fn main() {
    std::process::exit(corrwalk::cli::main());
}
