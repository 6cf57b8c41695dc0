fn main() {
    std::process::exit(arnold_gas::cli::run(std::env::args_os()));
}
