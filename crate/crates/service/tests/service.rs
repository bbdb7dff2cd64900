mod common;

use std::sync::Arc;
use std::thread;

use chrono::NaiveDate;
use common::{demo_date, Sandbox};
use iotrisk_core::{Color, DeviceCategory, DeviceId, ExceptionalRiskKind, RiskLevel};
use iotrisk_service::notify::{Sink, SubscriptionRequest, SubscriptionTarget};
use iotrisk_service::service::{AssessmentStatus, ListFilter, RegisterRequest};
use iotrisk_service::store::AssessmentState;
use iotrisk_service::views::{IconKind, ViewPayload, ViewVersion};
use iotrisk_service::ServiceError;

fn request(address: &str, owner: &str) -> RegisterRequest {
    RegisterRequest {
        device_id: None,
        network_address: address.into(),
        category: DeviceCategory::Private,
        device_type: "Smartphone".into(),
        owner: owner.into(),
    }
}

#[test]
fn registration_is_idempotent_per_address_and_owner() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    let first = service.register(request("192.168.1.7", "alice")).unwrap();
    let second = service.register(request("192.168.1.7", "alice")).unwrap();
    assert!(first.created);
    assert!(!second.created);
    assert_eq!(first.device_id, second.device_id);
    let other_owner = service.register(request("192.168.1.7", "bob")).unwrap();
    assert_ne!(other_owner.device_id, first.device_id);
}

#[test]
fn invalid_registrations_are_rejected() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    assert!(matches!(service.register(request("192.168.1.7", " ")), Err(ServiceError::Validation(_))));
    assert!(matches!(service.register(request("not an address!", "alice")), Err(ServiceError::Validation(_))));
    assert!(service.list_devices(&ListFilter::default()).is_empty());
}

#[test]
fn kettle_assessment_is_high_with_key_material() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    service.register_demo().unwrap();
    let run = service.run_assessment(&DeviceId::new("smart-kettle"), demo_date()).unwrap();
    assert_eq!(run.assessment.current_risk, RiskLevel::High);
    assert!(run.assessment.exceptional_risks.iter().any(|r| r.kind == ExceptionalRiskKind::PrivateKeyMaterial));
    let detail = service.get_device(&DeviceId::new("smart-kettle")).unwrap();
    assert_eq!(detail.device.identity.unwrap().identity.model, "SmartKettle 2");
}

#[test]
fn device_without_evidence_is_recorded_unidentified() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    let reg = service.register(request("192.168.1.50", "alice")).unwrap();
    let err = service.run_assessment(&reg.device_id, demo_date()).unwrap_err();
    assert!(matches!(err, ServiceError::IdentificationFailed { .. }));
    let detail = service.get_device(&reg.device_id).unwrap();
    assert!(matches!(detail.assessment, Some(AssessmentState::Unidentified { .. })));
    assert!(matches!(service.get_view(&reg.device_id, ViewVersion::Guided), Err(ServiceError::NoAssessment(_))));
    let rows = service.list_devices(&ListFilter::default());
    assert_eq!(rows[0].status, AssessmentStatus::Unidentified);
    assert_eq!(rows[0].current_risk, None);
}

#[test]
fn unknown_device_is_reported() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    assert!(matches!(
        service.run_assessment(&DeviceId::new("nope"), demo_date()),
        Err(ServiceError::UnknownDevice(_))
    ));
}

#[test]
fn reassessment_with_same_inputs_is_equal() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    service.register_demo().unwrap();
    let id = DeviceId::new("printer");
    let a = service.run_assessment(&id, demo_date()).unwrap();
    let b = service.run_assessment(&id, demo_date()).unwrap();
    assert_eq!(a.assessment, b.assessment);
    assert!(b.outbound.is_empty());
}

#[test]
fn list_is_sorted_by_risk_then_name_and_filters() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    for id in service.register_demo().unwrap() {
        service.run_assessment(&id, demo_date()).unwrap();
    }
    let rows = service.list_devices(&ListFilter::default());
    let order: Vec<_> = rows.iter().map(|r| r.device_id.as_str()).collect();
    assert_eq!(order, ["printer", "smart-kettle", "nas", "smartphone", "cctv", "ebook-reader"]);
    let business = service.list_devices(&ListFilter { owner: None, category: Some(DeviceCategory::Business) });
    assert_eq!(business.len(), 3);
    assert!(business.iter().all(|r| r.category == DeviceCategory::Business));
    let demo_owner = service.list_devices(&ListFilter { owner: Some("demo".into()), category: None });
    assert_eq!(demo_owner.len(), 6);
    assert!(demo_owner.iter().all(|r| r.color.is_some()));
    assert!(service.list_devices(&ListFilter { owner: Some("mallory".into()), category: None }).is_empty());
}

#[test]
fn concurrent_assessments_of_one_device_share_a_run() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    service.register_demo().unwrap();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let service = Arc::clone(&service);
            thread::spawn(move || service.run_assessment(&DeviceId::new("smartphone"), demo_date()).unwrap())
        })
        .collect();
    let runs: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(runs.windows(2).all(|w| w[0].assessment == w[1].assessment));
}

#[test]
fn category_comparison_has_one_card_per_color() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    for label in ["smartphone", "NAS"] {
        let cmp = service.compare_category(label, demo_date()).unwrap();
        let colors: Vec<_> = cmp.cards.iter().map(|c| c.color).collect();
        assert_eq!(colors, [Color::Green, Color::Yellow, Color::Red], "{label}");
    }
    assert!(matches!(service.compare_category("toaster", demo_date()), Err(ServiceError::UnknownCategory(_))));
}

#[test]
fn comparison_lists_registered_devices_of_a_model() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    service.register_demo().unwrap();
    service.run_assessment(&DeviceId::new("smartphone"), demo_date()).unwrap();
    let cmp = service.compare_category("smartphone", demo_date()).unwrap();
    let nimbus = cmp.cards.iter().find(|c| c.vendor == "Nimbus").unwrap();
    assert_eq!(nimbus.registered_devices, [DeviceId::new("smartphone")]);
}

#[test]
fn views_agree_for_every_demo_device() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    for id in service.register_demo().unwrap() {
        service.run_assessment(&id, demo_date()).unwrap();
        let ViewPayload::Guided(guided) = service.get_view(&id, ViewVersion::Guided).unwrap() else { panic!() };
        let ViewPayload::Rich(rich) = service.get_view(&id, ViewVersion::Rich).unwrap() else { panic!() };
        assert_eq!(guided.key_information(), rich.key_information(), "{id}");
    }
}

#[test]
fn kettle_guided_icons_name_affected_releases() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    service.register_demo().unwrap();
    let id = DeviceId::new("smart-kettle");
    service.run_assessment(&id, demo_date()).unwrap();
    let ViewPayload::Guided(view) = service.get_view(&id, ViewVersion::Guided).unwrap() else { panic!() };
    let unpatched = view.indicator_icons.iter().find(|i| i.kind == IconKind::UnpatchedVulnerabilities).unwrap();
    assert_eq!(unpatched.color, Color::Red);
    assert!(!unpatched.tooltip.contains("affecting 1 firmware"), "{}", unpatched.tooltip);
}

#[test]
fn subscription_targets_must_exist() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    let missing_device = SubscriptionRequest {
        target: SubscriptionTarget::Device { device_id: DeviceId::new("ghost") },
        sink: Sink::Log,
    };
    assert!(matches!(service.subscribe(missing_device), Err(ServiceError::UnknownTarget(_))));
    let missing_model = SubscriptionRequest {
        target: SubscriptionTarget::Model { vendor: "Acme".into(), model: "X".into() },
        sink: Sink::Log,
    };
    assert!(matches!(service.subscribe(missing_model), Err(ServiceError::UnknownTarget(_))));
    let model = SubscriptionRequest {
        target: SubscriptionTarget::Model { vendor: "Inkwell".into(), model: "Folio 6".into() },
        sink: Sink::Log,
    };
    let sub = service.subscribe(model).unwrap();
    service.unsubscribe(&sub.subscription_id).unwrap();
    assert!(matches!(service.unsubscribe(&sub.subscription_id), Err(ServiceError::UnknownSubscription(_))));
}

#[test]
fn new_cve_notifies_model_subscribers() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    service.register_demo().unwrap();
    let id = DeviceId::new("ebook-reader");
    service
        .subscribe(SubscriptionRequest {
            target: SubscriptionTarget::Model { vendor: "Inkwell".into(), model: "Folio 6".into() },
            sink: Sink::Log,
        })
        .unwrap();
    assert!(service.run_assessment(&id, demo_date()).unwrap().outbound.is_empty());
    let later = NaiveDate::from_ymd_opt(2021, 9, 1).unwrap();
    let run = service.run_assessment(&id, later).unwrap();
    assert_eq!(run.outbound.len(), 1);
    let delta = &run.outbound[0].notification.delta;
    assert_eq!(delta.added_cves, ["CVE-2021-90801"]);
    assert_eq!((delta.old_current_risk, delta.new_current_risk), (RiskLevel::Low, RiskLevel::High));
    assert_eq!(service.notifications().len(), 1);
    assert!(service.run_assessment(&id, later).unwrap().outbound.is_empty());
}

#[test]
fn ingested_feed_entries_reach_the_next_assessment() {
    let sandbox = Sandbox::new();
    let service = sandbox.open();
    service.register_demo().unwrap();
    let id = DeviceId::new("cctv");
    assert!(service.run_assessment(&id, demo_date()).unwrap().assessment.cve_table.is_empty());
    let feed = r#"[{"cve_id": "CVE-2021-99999", "cvss_score": 9.1, "published": "2021-05-20",
        "affects": [{"kind": "model", "vendor": "Vigilant", "model": "VC-420"}]}]"#;
    let report = service.ingest_feed_text(feed, "test").unwrap();
    assert_eq!(report.accepted, 1);
    let after = service.run_assessment(&id, demo_date()).unwrap().assessment;
    assert_eq!(after.current_risk, RiskLevel::High);
    assert!(service.ingest_feed_text("[{\"cve_id\": \"bogus\"}]", "test").is_err());
}
