fn main() -> std::process::ExitCode {
    attnblend_cli::main_entry()
}
