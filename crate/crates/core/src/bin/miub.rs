fn main() { std::process::exit(miub::cli::main_entry()); }
