fn main() {
    std::process::exit(qpsh_extend::cli::run(std::env::args_os()));
}
