fn main() {
    std::process::exit(dialogue_curricula::cli::run(std::env::args_os()));
}
