fn main() {
    std::process::exit(worldprobe_cli::run(std::env::args_os()));
}
