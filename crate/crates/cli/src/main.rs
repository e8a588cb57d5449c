use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEE_OPT_LOG", "warn")).init();
    let cli = match see_opt_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are errors (1); exit code 2 means a flagged run
            std::process::exit(if e.use_stderr() { see_opt_cli::EXIT_ERROR } else { see_opt_cli::EXIT_OK });
        }
    };
    std::process::exit(see_opt_cli::execute(cli));
}
