use clap::Parser;

fn main() {
    let cli = reposer_cli::Cli::parse();
    if let Err(e) = reposer_cli::run(cli) {
        // Print the cause chain once, skipping causes already in the message.
        let mut msg = e.to_string();
        for cause in e.chain().skip(1) {
            let c = cause.to_string();
            if !msg.ends_with(&c) {
                msg = format!("{msg}: {c}");
            }
        }
        eprintln!("error: {msg}");
        std::process::exit(reposer_cli::exit_code(&e));
    }
}
