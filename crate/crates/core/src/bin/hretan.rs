fn main() {
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    let code = hretan_core::cli::run(std::env::args_os(), &mut out, &mut err);
    std::process::exit(code);
}
