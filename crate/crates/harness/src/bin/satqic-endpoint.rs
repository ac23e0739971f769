//! Reference endpoint speaking the harness's directory contract.
//!
//! Server: `ROLE=server WWW_DIR=.. BIND_ADDR=host:port`, serves until killed.
//! Client: `ROLE=client REQUESTS="a b" SERVER_ADDR=host:port DOWNLOADS_DIR=..`,
//! exits 0 once every file is downloaded.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::Parser;
use satqic::refendpoint;
use satqic_core::cc::Algorithm;

#[derive(Parser)]
#[command(
    version,
    about = "Reference transfer endpoint configured through the environment"
)]
struct Args {
    /// Congestion controller used when serving.
    #[arg(long, default_value = "cubic")]
    cca: Algorithm,
    /// Give up on each download after this many seconds.
    #[arg(long, default_value_t = 3600.0)]
    timeout_s: f64,
}

fn var(name: &str) -> Result<String, String> {
    std::env::var(name).map_err(|_| format!("{name} is not set"))
}

fn addr(name: &str) -> Result<SocketAddr, String> {
    let v = var(name)?;
    v.parse().map_err(|_| format!("{name}: bad address {v:?}"))
}

fn run(args: &Args) -> Result<(), String> {
    match var("ROLE")?.as_str() {
        "server" => {
            let www = PathBuf::from(var("WWW_DIR")?);
            let socket =
                std::net::UdpSocket::bind(addr("BIND_ADDR")?).map_err(|e| e.to_string())?;
            let stop = AtomicBool::new(false);
            refendpoint::serve_on(socket, &www, args.cca, &stop).map_err(|e| e.to_string())
        }
        "client" => {
            let server = addr("SERVER_ADDR")?;
            let downloads = PathBuf::from(var("DOWNLOADS_DIR")?);
            let timeout = Duration::from_secs_f64(args.timeout_s);
            for (i, name) in var("REQUESTS")?.split_whitespace().enumerate() {
                let conn_id = std::process::id().wrapping_mul(31).wrapping_add(i as u32);
                let r = refendpoint::fetch(server, name, &downloads, timeout, conn_id)
                    .map_err(|e| format!("{name}: {e}"))?;
                eprintln!("{name}: {} bytes in {:.3} s", r.bytes, r.time_to_completion);
            }
            Ok(())
        }
        other => Err(format!("ROLE must be client or server, got {other:?}")),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("satqic-endpoint: {e}");
            ExitCode::FAILURE
        }
    }
}
