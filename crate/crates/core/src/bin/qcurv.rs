fn main() {
    std::process::exit(qcurv::cli::run_from_env());
}
