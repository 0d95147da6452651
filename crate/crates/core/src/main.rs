fn main() {
    std::process::exit(vanet_safety::harness::cli_dispatch(std::env::args_os()));
}
