fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(anicap::cli::LOG_ENV, "warn"))
        .format_timestamp(None)
        .init();
    std::process::exit(anicap::cli::dispatch(std::env::args_os()));
}
