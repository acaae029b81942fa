fn main() {
    std::process::exit(sxf::pipeline::cli::run(std::env::args_os()));
}
