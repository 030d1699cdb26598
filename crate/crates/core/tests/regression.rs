use std::path::PathBuf;

use vrsched::baselines::PolicyKind;
use vrsched::metrics::write_metrics_csv;
use vrsched::sim::{run, SimConfig};
use vrsched::traffic::{generate_trace, TraceParams};
use vrsched::video::FlowTrace;
use vrsched::Micros;

fn metrics_csv(cfg: &SimConfig, policy: PolicyKind, seed: u64) -> String {
    let out = run(cfg, policy, seed).unwrap();
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &out.metrics).unwrap();
    String::from_utf8(buf).unwrap()
}

/// Set `VRSCHED_BLESS=1` to rewrite the file after an intended change.
#[test]
fn golden_metrics_ten_flows_25_mbps() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/metrics_proposed_25mbps_s42.csv");
    let got = metrics_csv(&SimConfig::default(), PolicyKind::Proposed, 42);
    if std::env::var_os("VRSCHED_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert!(got == want, "metrics differ from {}", path.display());
}

#[test]
fn same_seed_same_bytes_other_seed_other_bytes() {
    let mut cfg = SimConfig {
        flows: 4,
        bottleneck_mbps: 9.0,
        ..SimConfig::default()
    };
    cfg.traffic.chunks = 10;
    for policy in PolicyKind::ALL {
        let a = metrics_csv(&cfg, policy, 7);
        assert_eq!(a, metrics_csv(&cfg, policy, 7), "{policy}");
        assert_ne!(a, metrics_csv(&cfg, policy, 8), "{policy}");
    }
}

#[test]
fn imported_traces_reproduce_generated_runs() {
    let dir = tempfile_dir();
    let mut cfg = SimConfig {
        flows: 3,
        bottleneck_mbps: 7.0,
        ..SimConfig::default()
    };
    cfg.traffic.chunks = 6;
    let seed = 21;
    let mut paths = Vec::new();
    for flow in 0..cfg.flows {
        let params = TraceParams {
            traffic: cfg.traffic.clone(),
            flow,
            request_delay: Micros::from_ms_f64(cfg.request_delay_ms),
        };
        let trace = generate_trace(&params, seed).unwrap();
        let path = dir.join(format!("flow{flow}.csv"));
        trace.write_to(std::fs::File::create(&path).unwrap()).unwrap();
        let back = FlowTrace::read_from(std::io::BufReader::new(std::fs::File::open(&path).unwrap()), trace.chunk_duration).unwrap();
        assert_eq!(back.frames.len(), trace.frames.len());
        paths.push(path);
    }
    let generated = metrics_csv(&cfg, PolicyKind::Proposed, seed);
    cfg.traces = paths;
    assert_eq!(metrics_csv(&cfg, PolicyKind::Proposed, seed), generated);
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vrsched-regression-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
