use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{NaiveDate, Utc};
use iotrisk_core::enrich::{extract_components, ingest_feed, FirmwareSource};
use iotrisk_core::identify::{identify, FingerprintSignature, SkewProfile, TimestampTrace, WebCorpus, WebPage};
use iotrisk_core::kb::KnowledgeBase;
use iotrisk_core::DeviceId;
use iotrisk_service::service::RegisterRequest;
use iotrisk_service::views::{ViewPayload, ViewVersion};
use iotrisk_service::{render_assessment_json, Service, ServiceConfig};
use serde_json::Value;

use crate::render::{self, Style};
use crate::{Cli, CliError, Command, Format, GlobalArgs, IdentifyArgs, IngestKind, ViewArg};

/// Paths probed by `identify --live`.
const LIVE_PATHS: [&str; 6] = ["/", "/index.html", "/login.html", "/cgi-bin/luci", "/api/system/info", "/favicon.ico"];

pub fn run(cli: Cli) -> Result<(), CliError> {
    let style = Style { ansi: io::stdout().is_terminal() && std::env::var_os("NO_COLOR").is_none() };
    let out = match cli.command {
        Command::Ingest { what } => ingest(&cli.global, what)?,
        Command::Identify(args) => identify_cmd(&cli.global, args, style)?,
        Command::Assess { device, as_of, format } => {
            let service = open_service(&cli.global)?;
            let id = ensure_registered(&service, &device)?;
            let as_of = as_of.unwrap_or_else(|| service.default_as_of());
            let run = service.run_assessment(&id, as_of)?;
            match format {
                Format::Json => render_assessment_json(&run.assessment),
                Format::Table => render::assessment_table(&run.assessment, style),
            }
        }
        Command::View { device, version, as_of, format } => {
            let service = open_service(&cli.global)?;
            let id = ensure_registered(&service, &device)?;
            let has_assessment = service.get_assessment(&id).is_ok();
            if !has_assessment || as_of.is_some() {
                service.run_assessment(&id, as_of.unwrap_or_else(|| service.default_as_of()))?;
            }
            let version = match version {
                ViewArg::Guided => ViewVersion::Guided,
                ViewArg::Rich => ViewVersion::Rich,
            };
            let payload = service.get_view(&id, version)?;
            match (format, &payload) {
                (Format::Json, _) => to_json(&payload),
                (Format::Table, ViewPayload::Guided(v)) => render::guided(v, style),
                (Format::Table, ViewPayload::Rich(v)) => render::rich(v, style),
            }
        }
        Command::Compare { category, as_of, format } => {
            let service = open_service(&cli.global)?;
            let cmp = service.compare_category(&category, as_of.unwrap_or_else(|| service.default_as_of()))?;
            match format {
                Format::Json => to_json(&cmp),
                Format::Table => render::comparison(&cmp, style),
            }
        }
        Command::Serve { listen } => {
            let mut config = service_config(&cli.global)?;
            if let Some(listen) = listen {
                config.listen = listen;
            }
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            runtime.block_on(iotrisk_service::api::serve(config))?;
            String::new()
        }
        Command::Demo { as_of, format } => demo(&cli.global, as_of, format, style)?,
    };
    let mut stdout = io::stdout().lock();
    stdout.write_all(out.as_bytes()).and_then(|()| stdout.flush()).map_err(|e| CliError::Internal(e.to_string()))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("payload serializes");
    s.push('\n');
    s
}

/// Config file, then `IOTRISK_*` environment, then command-line flags.
fn service_config(global: &GlobalArgs) -> Result<ServiceConfig, CliError> {
    let base = match &global.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    let mut config = base.with_env()?;
    if let Some(dir) = &global.data_dir {
        config.data_dir = dir.clone();
        if global.store.is_none() && global.config.is_none() && std::env::var_os(iotrisk_service::config::ENV_STORE).is_none() {
            config.store_path = dir.join("state/store.json");
        }
    }
    if let Some(store) = &global.store {
        config.store_path = store.clone();
    }
    Ok(config)
}

fn open_service(global: &GlobalArgs) -> Result<Service, CliError> {
    Ok(Service::open(service_config(global)?)?)
}

fn data_dir(global: &GlobalArgs) -> Result<PathBuf, CliError> {
    Ok(service_config(global)?.data_dir)
}

/// Returns the device id, registering demo devices on first use.
fn ensure_registered(service: &Service, device: &str) -> Result<DeviceId, CliError> {
    let id = DeviceId::new(device);
    if service.get_device(&id).is_ok() {
        return Ok(id);
    }
    let demo = service.kb().demo().and_then(|d| d.devices.iter().find(|x| x.device_id == id).cloned());
    let Some(d) = demo else {
        return Err(CliError::Data(format!("unknown device {device}")));
    };
    service.register(RegisterRequest {
        device_id: Some(d.device_id),
        network_address: d.network_address,
        category: d.category,
        device_type: d.device_type,
        owner: d.owner,
    })?;
    Ok(id)
}

fn read_json_array<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let value = if value.is_array() { value } else { Value::Array(vec![value]) };
    serde_json::from_value(value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn ingest(global: &GlobalArgs, what: IngestKind) -> Result<String, CliError> {
    let mut kb = KnowledgeBase::load(&data_dir(global)?)?;
    let line = match what {
        IngestKind::Feed { path } => {
            let entries = ingest_feed(&path)?;
            let accepted = entries.len();
            let total = kb.ingest_feed(entries)?;
            format!("feed: {accepted} entries read, {total} in knowledge base")
        }
        IngestKind::Manifests { path, blob } => {
            let manifests = match (&blob, path.is_dir()) {
                (Some(blob), _) => vec![extract_components(FirmwareSource::Blob { blob, sidecar: &path })?],
                (None, true) => {
                    let mut files: Vec<PathBuf> = fs::read_dir(&path)
                        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x == "json"))
                        .collect();
                    files.sort();
                    files
                        .iter()
                        .map(|f| extract_components(FirmwareSource::Manifest(f)))
                        .collect::<Result<Vec<_>, _>>()?
                }
                (None, false) => vec![extract_components(FirmwareSource::Manifest(&path))?],
            };
            let count = kb.ingest_manifests(manifests)?;
            format!("manifests: {count} ingested")
        }
        IngestKind::Signatures { path } => {
            let signatures: Vec<FingerprintSignature> = read_json_array(&path)?;
            let accepted = signatures.len();
            let total = kb.ingest_signatures(signatures)?;
            format!("signatures: {accepted} read, {total} in knowledge base")
        }
        IngestKind::Profiles { path } => {
            let profiles: Vec<SkewProfile> = read_json_array(&path)?;
            let accepted = profiles.len();
            let total = kb.ingest_profiles(profiles)?;
            format!("profiles: {accepted} read, {total} in knowledge base")
        }
    };
    Ok(line + "\n")
}

fn identify_cmd(global: &GlobalArgs, args: IdentifyArgs, style: Style) -> Result<String, CliError> {
    let config = service_config(global)?;
    let kb = KnowledgeBase::load(&config.data_dir)?;
    let corpus = match (&args.corpus, &args.live) {
        (Some(path), _) => Some(WebCorpus::load(path)?),
        (None, Some(base)) => Some(fetch_live(base)?),
        (None, None) => None,
    };
    let trace = args.trace.as_deref().map(TimestampTrace::load).transpose()?;
    let report = identify(corpus.as_ref(), trace.as_ref(), kb.signature_db(), kb.profiles(), &config.identify)?;
    Ok(match args.format {
        Format::Json => to_json(&report),
        Format::Table => render::identification(&report, style),
    })
}

/// Fetches a handful of common device pages. Failed paths are skipped.
fn fetch_live(base: &str) -> Result<WebCorpus, CliError> {
    let base_url = reqwest::Url::parse(base).map_err(|e| CliError::Usage(format!("--live {base}: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(5))
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let pages = runtime.block_on(async {
        let mut pages = Vec::new();
        for path in LIVE_PATHS {
            let Ok(url) = base_url.join(path) else { continue };
            let resp = match client.get(url.clone()).send().await {
                Ok(r) => r,
                Err(e) => {
                    tracing::debug!(%url, error = %e, "fetch failed");
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let headers = resp
                .headers()
                .iter()
                .filter_map(|(k, v)| v.to_str().ok().map(|v| (k.to_string(), v.to_string())))
                .collect();
            let body = resp.text().await.unwrap_or_default();
            pages.push(WebPage { url: url.to_string(), status, headers, body });
        }
        pages
    });
    if pages.is_empty() {
        return Err(CliError::Data(format!("no page could be fetched from {base}")));
    }
    let device = base_url.host_str().unwrap_or(base).to_string();
    Ok(WebCorpus { device_id: DeviceId::new(device), pages })
}

fn demo(global: &GlobalArgs, as_of: Option<NaiveDate>, format: Format, style: Style) -> Result<String, CliError> {
    let service = open_service(global)?;
    let ids = service.register_demo()?;
    let as_of = match as_of {
        Some(d) => d,
        None => service.kb().demo().map(|d| d.as_of).unwrap_or_else(|| Utc::now().date_naive()),
    };
    let mut rows = Vec::with_capacity(ids.len());
    for id in &ids {
        let run = service.run_assessment(id, as_of)?;
        let device = service.get_device(id)?.device;
        rows.push((device, run.assessment));
    }
    Ok(match format {
        Format::Json => to_json(&rows.iter().map(|(_, a)| a).collect::<Vec<_>>()),
        Format::Table => render::demo_table(as_of, &rows, style),
    })
}
