fn main() {
    std::process::exit(lakeclean_service::cli::main_with(std::env::args_os()));
}
