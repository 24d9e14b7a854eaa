fn main() {
    std::process::exit(hullpaint_service::cli::run(std::env::args_os()));
}
