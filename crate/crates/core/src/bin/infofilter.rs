fn main() {
    std::process::exit(infofilter::cli::run());
}
