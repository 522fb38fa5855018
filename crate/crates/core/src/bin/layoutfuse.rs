fn main() -> std::process::ExitCode {
    layoutfuse::cli::main()
}
