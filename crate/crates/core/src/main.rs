fn main() {
    std::process::exit(subharnack::cli::main_with_args(std::env::args_os()));
}
