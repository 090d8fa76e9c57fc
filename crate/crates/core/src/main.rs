fn main() -> std::process::ExitCode {
    yearshift::cli::main()
}
