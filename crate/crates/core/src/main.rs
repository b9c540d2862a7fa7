fn main() {
    std::process::exit(treetrust::cli::main());
}
