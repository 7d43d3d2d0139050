use std::io::{self, Write};
use std::process::ExitCode;

use pacloud_core::client::transport::UnixSocketTransport;
use pacloud_core::client::{
    cli_parse, config_path, load_config, store_for_url, transport_for_url, ClientError, Command, Session,
    SystemTimer, Transport,
};
use pacloud_core::client::config::CONFIG_ENV;
use pacloud_core::store::RemoteStore;

fn run() -> Result<(), ClientError> {
    let invocation = cli_parse(std::env::args_os().skip(1))?;
    if invocation.command == Command::Help {
        println!("{}", pacloud_core::client::USAGE);
        return Ok(());
    }
    let env = std::env::var(CONFIG_ENV).ok();
    let path = config_path(invocation.config.as_deref(), env.as_deref());
    log::debug!("using configuration {}", path.display());
    let config = load_config(&path)?;

    let needs_farm = matches!(invocation.command, Command::Install(_) | Command::Upgrade(_));
    let needs_store = needs_farm || invocation.command == Command::Update;
    let transport: Option<UnixSocketTransport> =
        if needs_farm { Some(transport_for_url(config.api_url()?)?) } else { None };
    let store: Option<Box<dyn RemoteStore>> =
        if needs_store { Some(store_for_url(config.store_url()?)?) } else { None };

    let timer = SystemTimer::default();
    let session = Session::new(
        config,
        transport.as_ref().map(|t| t as &dyn Transport),
        store.as_deref(),
        &timer,
    );
    let stdout = io::stdout();
    let mut out = stdout.lock();
    session.execute(&invocation.command, &mut out)?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pacloud: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
