fn main() -> std::process::ExitCode {
    fieldxfer::cli::main()
}
