fn main() {
    std::process::exit(birthday_census::cli::main_with_args(std::env::args_os()));
}
