use clap::Parser;

fn main() {
    let cli = certabs_cli::Cli::parse();
    let code = match certabs_cli::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}
