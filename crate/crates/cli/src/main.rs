use clap::Parser;
use tiersim_cli::{dispatch, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIERSIM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli) {
        eprintln!("tiersim: {e}");
        std::process::exit(e.exit_code());
    }
}
