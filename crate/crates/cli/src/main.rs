fn main() {
    if let Err(e) = hiervec_cli::run(std::env::args_os()) {
        let (line, code) = hiervec_cli::error_line(&e);
        eprintln!("{line}");
        std::process::exit(code);
    }
}
