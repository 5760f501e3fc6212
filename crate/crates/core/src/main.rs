fn main() {
    std::process::exit(curvreg::evalcli::cli::run(std::env::args_os()));
}
