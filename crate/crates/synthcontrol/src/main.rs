fn main() {
    std::process::exit(synthcontrol::cli::main());
}
