fn main() -> std::process::ExitCode {
    ehcpool::cli::main()
}
