fn main() {
    std::process::exit(seqrd::cli::run());
}
