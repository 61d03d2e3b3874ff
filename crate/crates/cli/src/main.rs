fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(harnack_cli::run(&argv));
}
