//! Runs with external endpoint processes over real sockets and the relay.

use std::path::Path;
use std::process::Command;

use satqic::results::load_results;
use satqic_core::analysis::Status;
use satqic_core::results::ResultMatrix;

fn run(
    out: &Path,
    clients: &str,
    servers: &str,
    externals: &[String],
    timeout: &str,
) -> ResultMatrix {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_satqic"));
    cmd.args([
        "run",
        "--scenario",
        "TERR",
        "--iterations",
        "1",
        "--file-size",
        "200000",
    ])
    .args([
        "--timeout-s",
        timeout,
        "--clients",
        clients,
        "--servers",
        servers,
        "--quiet",
    ])
    .arg("--out")
    .arg(out);
    for e in externals {
        cmd.arg("--external").arg(e);
    }
    let o = cmd.output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    load_results(out).unwrap()
}

fn status(m: &ResultMatrix, client: &str, server: &str) -> Status {
    m.scenarios[0].cell(client, server).unwrap().runs[0]
        .outcome
        .status
}

#[test]
fn reference_endpoint_process_through_relay() {
    let d = tempfile::tempdir().unwrap();
    let ep = format!(
        "ref={} --cca newreno",
        env!("CARGO_BIN_EXE_satqic-endpoint")
    );
    let m = run(d.path(), "ref,cubic", "ref", &[ep], "20");
    assert_eq!(status(&m, "ref", "ref"), Status::Success);
    assert_eq!(status(&m, "cubic", "ref"), Status::Success);
    let o = &m.scenarios[0].cell("ref", "ref").unwrap().runs[0].outcome;
    assert!(o.redundancy_factor.unwrap() >= 1.0);
    assert!(d
        .path()
        .join("work/TERR/ref--ref/iter-00/logs/server.log")
        .is_file());
}

#[test]
fn crashing_server_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let m = run(d.path(), "cubic", "crash", &["crash=exit 3".into()], "10");
    assert_eq!(status(&m, "cubic", "crash"), Status::Error);
}

#[test]
fn failing_client_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let m = run(
        d.path(),
        "broken",
        "cubic",
        &["broken=echo no >&2; exit 1".into()],
        "10",
    );
    assert_eq!(status(&m, "broken", "cubic"), Status::Error);
}

#[test]
fn silent_client_times_out() {
    let d = tempfile::tempdir().unwrap();
    let m = run(
        d.path(),
        "idle",
        "cubic",
        &["idle=exec sleep 30".into()],
        "2",
    );
    assert_eq!(status(&m, "idle", "cubic"), Status::Timeout);
}
