fn main() -> std::process::ExitCode {
    qrefresh::cli::main_entry()
}
