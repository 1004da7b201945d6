fn main() {
    std::process::exit(quantrank::commands::main_entry());
}
