fn main() {
    std::process::exit(gridsynth::cli::dispatch(std::env::args_os()));
}
