fn main() -> std::process::ExitCode {
    evlm::cli::main()
}
