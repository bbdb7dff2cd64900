mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use common::Sandbox;
use http_body_util::BodyExt;
use iotrisk_service::api::{router, AppState};
use iotrisk_service::schema::schemas;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Client {
    app: Router,
    schemas: BTreeMap<&'static str, jsonschema::Validator>,
}

struct Reply {
    status: StatusCode,
    text: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }
}

impl Client {
    fn new(sandbox: &Sandbox) -> Self {
        let app = router(AppState::new(sandbox.open()));
        let schemas = schemas()
            .into_iter()
            .map(|(name, schema)| (name, jsonschema::validator_for(&serde_json::to_value(schema).unwrap()).unwrap()))
            .collect();
        Self { app, schemas }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<String>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Reply { status, text: String::from_utf8(bytes.to_vec()).unwrap() }
    }

    /// Calls the endpoint and checks status and schema validity.
    async fn expect(&self, method: Method, uri: &str, body: Option<Value>, status: StatusCode, schema: &str) -> Reply {
        let reply = self.call(method.clone(), uri, body.map(|b| b.to_string())).await;
        assert_eq!(reply.status, status, "{method} {uri}: {}", reply.text);
        if !reply.text.is_empty() {
            self.check(schema, &reply.json(), uri);
        }
        reply
    }

    fn check(&self, schema: &str, value: &Value, context: &str) {
        let validator = &self.schemas[schema];
        let errors: Vec<String> = validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
        assert!(errors.is_empty(), "{context} does not match schema {schema}: {errors:#?}");
    }
}

async fn assessed_client(sandbox: &Sandbox) -> Client {
    let client = Client::new(sandbox);
    let demo: Value = serde_json::from_str(&std::fs::read_to_string(common::fixture_root().join("demo.json")).unwrap()).unwrap();
    for device in demo["devices"].as_array().unwrap() {
        client.expect(Method::POST, "/devices", Some(device.clone()), StatusCode::CREATED, "registration").await;
        let id = device["device_id"].as_str().unwrap();
        let uri = format!("/devices/{id}/assess?as_of=2021-06-01");
        client.expect(Method::POST, &uri, None, StatusCode::OK, "risk_assessment").await;
    }
    client
}

#[tokio::test]
async fn every_endpoint_returns_schema_valid_bodies() {
    let sandbox = Sandbox::new();
    let client = assessed_client(&sandbox).await;

    client.expect(Method::GET, "/healthz", None, StatusCode::OK, "health").await;
    let list = client.expect(Method::GET, "/devices", None, StatusCode::OK, "device_list").await.json();
    assert_eq!(list.as_array().unwrap().len(), 6);
    client.expect(Method::GET, "/devices?owner=demo&category=business", None, StatusCode::OK, "device_list").await;

    for id in ["ebook-reader", "smartphone", "smart-kettle", "cctv", "nas", "printer"] {
        client.expect(Method::GET, &format!("/devices/{id}"), None, StatusCode::OK, "device_detail").await;
        client.expect(Method::GET, &format!("/devices/{id}/assessment"), None, StatusCode::OK, "risk_assessment").await;
        for version in ["guided", "rich"] {
            let uri = format!("/devices/{id}/view?version={version}");
            let view = client.expect(Method::GET, &uri, None, StatusCode::OK, "view").await.json();
            assert_eq!(view["version"], version);
        }
    }
    for label in ["smartphone", "nas", "printer"] {
        let uri = format!("/categories/{label}/compare?as_of=2021-06-01");
        client.expect(Method::GET, &uri, None, StatusCode::OK, "category_comparison").await;
    }

    let sub = client
        .expect(
            Method::POST,
            "/subscriptions",
            Some(json!({"target": {"kind": "device", "device_id": "nas"}, "sink": {"kind": "log"}})),
            StatusCode::CREATED,
            "subscription",
        )
        .await
        .json();
    client.expect(Method::GET, "/subscriptions", None, StatusCode::OK, "subscription_list").await;
    let uri = format!("/subscriptions/{}", sub["subscription_id"].as_str().unwrap());
    let deleted = client.call(Method::DELETE, &uri, None).await;
    assert_eq!(deleted.status, StatusCode::NO_CONTENT);
    client.expect(Method::GET, "/notifications", None, StatusCode::OK, "notification_list").await;

    let schemas = client.call(Method::GET, "/schemas", None).await;
    assert_eq!(schemas.status, StatusCode::OK);
    assert!(schemas.json().get("risk_assessment").is_some());
}

#[tokio::test]
async fn errors_are_json_with_stable_codes() {
    let sandbox = Sandbox::new();
    let client = assessed_client(&sandbox).await;
    let cases = [
        (Method::GET, "/devices/ghost", None, StatusCode::NOT_FOUND, "unknown_device"),
        (Method::POST, "/devices/ghost/assess", None, StatusCode::NOT_FOUND, "unknown_device"),
        (Method::GET, "/devices/nas/view?version=fancy", None, StatusCode::BAD_REQUEST, "bad_request"),
        (Method::GET, "/devices/nas/assess?as_of=yesterday", None, StatusCode::METHOD_NOT_ALLOWED, ""),
        (Method::POST, "/devices/nas/assess?as_of=yesterday", None, StatusCode::BAD_REQUEST, "bad_request"),
        (Method::GET, "/categories/toaster/compare", None, StatusCode::NOT_FOUND, "unknown_category"),
        (Method::DELETE, "/subscriptions/nope", None, StatusCode::NOT_FOUND, "unknown_subscription"),
        (
            Method::POST,
            "/devices",
            Some(json!({"network_address": "10.1.1.1", "category": "private", "device_type": "Phone", "owner": ""})),
            StatusCode::BAD_REQUEST,
            "validation",
        ),
        (Method::POST, "/devices", Some(json!({"owner": "x"})), StatusCode::BAD_REQUEST, "bad_request"),
        (
            Method::POST,
            "/subscriptions",
            Some(json!({"target": {"kind": "device", "device_id": "ghost"}, "sink": {"kind": "log"}})),
            StatusCode::NOT_FOUND,
            "unknown_target",
        ),
        (
            Method::POST,
            "/subscriptions",
            Some(json!({"target": {"kind": "device", "device_id": "nas"}, "sink": {"kind": "webhook", "url": ""}})),
            StatusCode::BAD_REQUEST,
            "validation",
        ),
    ];
    for (method, uri, body, status, code) in cases {
        let reply = client.call(method.clone(), uri, body.map(|b: Value| b.to_string())).await;
        assert_eq!(reply.status, status, "{method} {uri}: {}", reply.text);
        if !code.is_empty() {
            client.check("error", &reply.json(), uri);
            assert_eq!(reply.json()["error"], code, "{uri}");
        }
    }
}

#[tokio::test]
async fn unidentified_device_reports_failure_and_keeps_no_risk() {
    let sandbox = Sandbox::new();
    let client = Client::new(&sandbox);
    let body = json!({"device_id": "toaster", "network_address": "10.0.20.99", "category": "private",
                      "device_type": "Toaster", "owner": "demo"});
    client.expect(Method::POST, "/devices", Some(body), StatusCode::CREATED, "registration").await;
    let reply = client.expect(Method::POST, "/devices/toaster/assess", None, StatusCode::UNPROCESSABLE_ENTITY, "error").await;
    assert_eq!(reply.json()["error"], "identification_failed");
    let detail = client.expect(Method::GET, "/devices/toaster", None, StatusCode::OK, "device_detail").await.json();
    assert_eq!(detail["assessment"]["status"], "unidentified");
    assert!(detail["assessment"].get("current_risk").is_none());
    client.expect(Method::GET, "/devices/toaster/assessment", None, StatusCode::NOT_FOUND, "error").await;
}

#[tokio::test]
async fn repeated_registration_returns_existing_id() {
    let sandbox = Sandbox::new();
    let client = Client::new(&sandbox);
    let body = json!({"network_address": "10.9.9.9", "category": "business", "device_type": "Printer", "owner": "ops"});
    let first = client.expect(Method::POST, "/devices", Some(body.clone()), StatusCode::CREATED, "registration").await;
    let second = client.expect(Method::POST, "/devices", Some(body), StatusCode::OK, "registration").await;
    assert_eq!(first.json()["device_id"], second.json()["device_id"]);
}

#[tokio::test]
async fn assess_body_equals_stored_assessment_body() {
    let sandbox = Sandbox::new();
    let client = Client::new(&sandbox);
    let body = json!({"device_id": "printer", "network_address": "10.0.10.40", "category": "business",
                      "device_type": "Printer", "owner": "demo"});
    client.expect(Method::POST, "/devices", Some(body), StatusCode::CREATED, "registration").await;
    let assessed = client.call(Method::POST, "/devices/printer/assess?as_of=2021-06-01", None).await;
    let stored = client.call(Method::GET, "/devices/printer/assessment", None).await;
    assert_eq!(assessed.text, stored.text);
    assert!(stored.text.ends_with("}\n"));
}

#[tokio::test]
async fn state_survives_restart() {
    let sandbox = Sandbox::new();
    let before = {
        let client = assessed_client(&sandbox).await;
        let list = client.call(Method::GET, "/devices", None).await.text;
        let kettle = client.call(Method::GET, "/devices/smart-kettle/assessment", None).await.text;
        (list, kettle)
    };
    let client = Client::new(&sandbox);
    assert_eq!(client.call(Method::GET, "/devices", None).await.text, before.0);
    assert_eq!(client.call(Method::GET, "/devices/smart-kettle/assessment", None).await.text, before.1);
    client.expect(Method::GET, "/devices/smart-kettle/view?version=rich", None, StatusCode::OK, "view").await;
}

#[tokio::test]
async fn ingest_endpoints_accept_fixture_documents() {
    let sandbox = Sandbox::new();
    let client = Client::new(&sandbox);
    let root = common::fixture_root();
    let feed = std::fs::read_to_string(root.join("feed.json")).unwrap();
    let reply = client.call(Method::POST, "/admin/ingest/feed", Some(feed)).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text);
    client.check("ingest_report", &reply.json(), "feed");
    let entries: Value = serde_json::from_str(&std::fs::read_to_string(root.join("feed.json")).unwrap()).unwrap();
    let reply = client.call(Method::POST, "/admin/ingest/feed", Some(entries[0].to_string())).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text);
    assert_eq!(reply.json()["accepted"], 1);

    let manifest = std::fs::read_to_string(root.join("manifests/Zephyr_Z3_5.1.0.json")).unwrap();
    let reply = client.call(Method::POST, "/admin/ingest/manifests", Some(manifest)).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text);
    client.check("ingest_report", &reply.json(), "manifests");

    for (uri, file) in [("/admin/ingest/signatures", "signatures.json"), ("/admin/ingest/profiles", "profiles.json")] {
        let text = std::fs::read_to_string(root.join(file)).unwrap();
        let reply = client.call(Method::POST, uri, Some(text)).await;
        assert_eq!(reply.status, StatusCode::OK, "{uri}: {}", reply.text);
        client.check("ingest_report", &reply.json(), uri);
    }

    let bad = client.call(Method::POST, "/admin/ingest/feed", Some("[{\"id\": 3}]".into())).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert_eq!(bad.json()["error"], "ingest");
}

#[tokio::test]
async fn webhook_receives_change_notification() {
    let received: Arc<Mutex<Vec<Value>>> = Arc::default();
    let sink = {
        let received = received.clone();
        Router::new().route(
            "/hook",
            post(move |Json(body): Json<Value>| {
                let received = received.clone();
                async move {
                    received.lock().unwrap().push(body);
                    "ok"
                }
            }),
        )
    };
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, sink).await.unwrap() });

    let sandbox = Sandbox::new();
    let client = assessed_client(&sandbox).await;
    let sub = json!({"target": {"kind": "device", "device_id": "ebook-reader"},
                     "sink": {"kind": "webhook", "url": format!("http://{addr}/hook")}});
    client.expect(Method::POST, "/subscriptions", Some(sub), StatusCode::CREATED, "subscription").await;
    client.expect(Method::POST, "/devices/ebook-reader/assess?as_of=2021-06-01", None, StatusCode::OK, "risk_assessment").await;
    client.expect(Method::POST, "/devices/ebook-reader/assess?as_of=2021-09-01", None, StatusCode::OK, "risk_assessment").await;

    for _ in 0..100 {
        if !received.lock().unwrap().is_empty() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let got = received.lock().unwrap().clone();
    assert_eq!(got.len(), 1, "{got:?}");
    assert_eq!(got[0]["device_id"], "ebook-reader");
    assert_eq!(got[0]["delta"]["added_cves"], json!(["CVE-2021-90801"]));
    assert_eq!(got[0]["delta"]["new_current_risk"], "high");
    let stored = client.expect(Method::GET, "/notifications", None, StatusCode::OK, "notification_list").await.json();
    assert_eq!(stored.as_array().unwrap().len(), 1);
}
