use std::collections::HashMap;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let env: HashMap<String, String> = std::env::vars().collect();
    std::process::exit(ensemblekit::cli::dispatch(std::env::args_os(), &env));
}
