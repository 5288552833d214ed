fn main() {
    std::process::exit(nrq_core::cli::main_entry());
}
