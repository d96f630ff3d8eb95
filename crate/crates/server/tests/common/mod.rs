#![allow(dead_code)]

use std::sync::Arc;

use chrono::NaiveDate;
use gridcast_core::series::CarbonSeries;
use gridcast_server::{Service, ServiceConfig};
use tempfile::TempDir;

pub fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// A service over a fresh datastore in a temp dir.
pub fn service_with(config: ServiceConfig) -> (TempDir, Service) {
    let dir = TempDir::new().unwrap();
    let config = ServiceConfig {
        data_root: dir.path().join("store"),
        ..config
    };
    let svc = Service::open(config).unwrap();
    (dir, svc)
}

pub fn ingest(svc: &Service, series: &CarbonSeries) {
    svc.store().store_actuals(series, false).unwrap();
}

/// Serves `service` on an ephemeral port and returns the base URL.
pub fn spawn(service: Arc<Service>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, gridcast_server::api::router(service))
                .await
                .unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn get(url: &str) -> (u16, String) {
    let mut resp = agent().get(url).call().unwrap();
    (
        resp.status().as_u16(),
        resp.body_mut().read_to_string().unwrap(),
    )
}

pub fn post(url: &str, body: &str) -> (u16, String) {
    let mut resp = agent()
        .post(url)
        .header("Content-Type", "application/json")
        .send(body)
        .unwrap();
    (
        resp.status().as_u16(),
        resp.body_mut().read_to_string().unwrap(),
    )
}

pub fn json(body: &str) -> serde_json::Value {
    serde_json::from_str(body).unwrap_or_else(|e| panic!("not JSON ({e}): {body}"))
}

pub fn code(body: &str) -> String {
    json(body)["code"].as_str().unwrap().to_string()
}
