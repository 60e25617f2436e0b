fn main() {
    std::process::exit(shocklab::lab::cli(std::env::args_os()));
}
