fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(ivelox_cli::dispatch(&argv));
}
