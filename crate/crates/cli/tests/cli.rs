mod common;

use common::{Sandbox, DEMO_DATE};
use serde_json::Value;

#[test]
fn demo_prints_six_rows_in_fixture_order() {
    let sb = Sandbox::new();
    let out = sb.ok(&["demo"]);
    let rows: Vec<Vec<&str>> = out.lines().skip(2).map(|l| l.split_whitespace().collect()).collect();
    let ids: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(ids, ["ebook-reader", "smartphone", "smart-kettle", "cctv", "nas", "printer"]);
    assert!(out.starts_with(&format!("Demo assessment as of {DEMO_DATE}")));
    for (row, light) in rows.iter().zip(["GREEN", "YELLOW", "RED", "GREEN", "YELLOW", "RED"]) {
        assert!(row.contains(&light), "{row:?}");
    }
}

#[test]
fn piped_output_has_no_escape_codes() {
    let sb = Sandbox::new();
    let out = sb.ok(&["view", "--device", "smart-kettle", "--as-of", DEMO_DATE]);
    assert!(!out.contains('\x1b'));
    assert!(out.starts_with("RED"));
    assert!(out.contains("This Smart Kettle poses a high risk for the infrastructure."));
    assert!(out.contains("cryptographic key material within the identified firmware"));
}

#[test]
fn assess_json_is_an_assessment_document() {
    let sb = Sandbox::new();
    let out = sb.ok(&["assess", "--device", "printer", "--as-of", DEMO_DATE]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["device_id"], "printer");
    assert_eq!(v["current_risk"], "high");
    assert_eq!(v["future_risk"], "high");
    assert!(out.ends_with("}\n"));
}

#[test]
fn rich_view_lists_the_cve_table() {
    let sb = Sandbox::new();
    let out = sb.ok(&["view", "--device", "printer", "--version", "rich", "--as-of", DEMO_DATE]);
    assert!(out.contains("== Device Risk Score: RED"));
    assert!(out.contains("== Future Risk Estimation: high"));
    assert_eq!(out.lines().filter(|l| l.trim_start().starts_with("CVE-")).count(), 3);
}

#[test]
fn compare_orders_best_first() {
    let sb = Sandbox::new();
    let out = sb.ok(&["compare", "--category", "smartphone", "--as-of", DEMO_DATE, "--format", "json"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    let colors: Vec<&str> = v["cards"].as_array().unwrap().iter().map(|c| c["color"].as_str().unwrap()).collect();
    assert_eq!(colors, ["green", "yellow", "red"]);
}

#[test]
fn identify_decides_kettle_from_corpus_and_trace() {
    let sb = Sandbox::new();
    let data = sb.data();
    let corpus = data.join("corpora/smart-kettle.json");
    let trace = data.join("traces/smart-kettle.json");
    let out = sb.ok(&["identify", "--corpus", corpus.to_str().unwrap(), "--trace", trace.to_str().unwrap(), "--format", "json"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["decision"]["identity"]["model"], "SmartKettle 2");
    assert_eq!(v["observed_firmware"], "1.3.1");
}

#[test]
fn exit_codes_separate_usage_data_and_success() {
    let sb = Sandbox::new();
    assert_eq!(sb.run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sb.run(&["assess"]).status.code(), Some(1));
    assert_eq!(sb.run(&["--help"]).status.code(), Some(0));
    let unknown = sb.run(&["assess", "--device", "no-such-device"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("no-such-device"));
    let missing = sb.run(&["ingest", "feed", "/nonexistent/feed.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn ingest_commands_accept_fixture_files() {
    let sb = Sandbox::new();
    let data = sb.data();
    let path = |p: &str| data.join(p).to_str().unwrap().to_string();
    let out = sb.ok(&["ingest", "feed", &path("feed.json")]);
    assert!(out.starts_with("feed: 28 entries read"), "{out}");
    let out = sb.ok(&["ingest", "manifests", &path("manifests")]);
    assert!(out.starts_with("manifests: 30 ingested"), "{out}");
    let out = sb.ok(&[
        "ingest",
        "manifests",
        &path("manifests/Brewlux_SmartKettle-2_1.3.1.json"),
        "--blob",
        &path("blobs/brewlux-smartkettle2-1.3.1.bin"),
    ]);
    assert!(out.starts_with("manifests: 1 ingested"), "{out}");
    assert!(sb.ok(&["ingest", "signatures", &path("signatures.json")]).starts_with("signatures:"));
    assert!(sb.ok(&["ingest", "profiles", &path("profiles.json")]).starts_with("profiles:"));
    // the knowledge base still assesses the same way afterwards
    let v: Value = serde_json::from_str(&sb.ok(&["assess", "--device", "smart-kettle", "--as-of", DEMO_DATE])).unwrap();
    assert_eq!(v["current_risk"], "high");
}
