//! Timeline JSON snapshots of the shipped sequences. Set `QMEMSIM_BLESS=1`
//! to rewrite them after an intended change.

use std::path::PathBuf;

use qmemsim::cli::{memory_timeline, MemoryRequest, Protocol};
use qmemsim::config::Config;
use qmemsim::sequences::Timeline;

fn check(name: &str, tl: &Timeline) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let text = tl.to_json().unwrap() + "\n";
    if std::env::var_os("QMEMSIM_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
    assert_eq!(text, golden, "{name} drifted");
    assert_eq!(&Timeline::from_json(&golden).unwrap(), tl);
}

fn timeline(protocol: Protocol, n_pulses: Option<usize>) -> Timeline {
    let mut req = MemoryRequest::new(protocol, 1);
    req.n_pulses = n_pulses;
    memory_timeline(&Config::shipped(), &req).unwrap()
}

#[test]
fn nlpe_timeline() {
    check("nlpe.json", &timeline(Protocol::Nlpe, None));
}

#[test]
fn nlpe_dd_timeline() {
    check("nlpe_dd.json", &timeline(Protocol::NlpeDd, None));
}

#[test]
fn nlpe_dd_without_pulses_timeline() {
    check("nlpe_dd_empty.json", &timeline(Protocol::NlpeDd, Some(0)));
}
