use clap::Parser;
use sdfwarp::cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    let result = run(cli.command, &cli.flags);
    match &result {
        Ok(o) => println!("{}", serde_json::to_string_pretty(&o.summary).expect("summary serializes")),
        Err(e) => eprintln!("error: {e}"),
    }
    std::process::exit(exit_code(&result));
}
