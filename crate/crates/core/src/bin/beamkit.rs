fn main() -> std::process::ExitCode {
    beamkit::cli::main()
}
