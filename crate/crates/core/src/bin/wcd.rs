fn main() -> std::process::ExitCode {
    wcd::cli::main()
}
