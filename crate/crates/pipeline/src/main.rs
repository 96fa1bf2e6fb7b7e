fn main() {
    std::process::exit(neopain_pipeline::cli::main_with(std::env::args_os()));
}
