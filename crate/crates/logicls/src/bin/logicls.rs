fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(logicls::cli::run(&argv));
}
