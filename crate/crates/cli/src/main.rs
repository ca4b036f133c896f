use clap::Parser;
use powrl_cli::cli::Cli;
use powrl_cli::CliError;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { CliError::Usage(String::new()).exit_code() } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if let Some(level) = &cli.log_level {
        logger.parse_filters(level);
    }
    logger.init();
    if let Err(e) = powrl_cli::commands::run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
