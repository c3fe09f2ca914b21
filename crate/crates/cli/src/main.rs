use clap::Parser;
use dqpe_cli::args::Cli;
use dqpe_cli::run::run;

fn main() {
    let cli = Cli::parse();
    match cli.into_config().and_then(|c| run(&c)) {
        Ok(summary) => println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        ),
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
}
