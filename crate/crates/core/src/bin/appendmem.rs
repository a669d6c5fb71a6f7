fn main() {
    std::process::exit(appendable_memory::cli::main());
}
