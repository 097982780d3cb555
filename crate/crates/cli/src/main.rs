use clap::Parser;

fn main() {
    let cli = franson_cli::Cli::parse();
    match franson_cli::run(cli) {
        Ok(msg) => println!("{msg}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
