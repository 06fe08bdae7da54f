//! The HTTP engine client against an in-process fake engine daemon.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use vmrank_core::orchestrator::docker::DockerEngine;
use vmrank_core::orchestrator::engine::{
    ContainerEngine, CreateRequest, DefaultEngineFactory, ExecutorBinding,
};
use vmrank_core::orchestrator::simulated::{simulated_execute, SimProfile};
use vmrank_core::{
    default_taxonomy, CampaignHost, CampaignRequest, ContainerSpec, CpuMode, FileStore, HostStatus,
    Orchestrator, OrchestratorConfig, ToolOutputParser, VmDescriptor,
};

#[derive(Default)]
struct Daemon {
    creates: Vec<Value>,
    live: BTreeSet<String>,
    pulls: Vec<String>,
    reject_create: bool,
    next: u32,
}

type Shared = Arc<Mutex<Daemon>>;

fn vm() -> VmDescriptor {
    VmDescriptor {
        id: "m3.xlarge".into(),
        vm_type: "m3.xlarge".into(),
        vcpus: 4,
        memory_gib: 15.0,
        endpoint: String::new(),
        tags: Default::default(),
    }
}

fn framed_logs() -> Vec<u8> {
    let spec = ContainerSpec::new(100, CpuMode::AllCores).unwrap();
    let out = simulated_execute(&vm(), &spec, &SimProfile::default());
    let mut bytes = Vec::new();
    for line in out.lines {
        let payload = format!("{line}\n");
        bytes.extend_from_slice(&[1, 0, 0, 0]);
        bytes.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        bytes.extend_from_slice(payload.as_bytes());
    }
    bytes
}

fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1.41/_ping", get(|| async { "OK" }))
        .route(
            "/v1.41/images/{name}/json",
            get(|| async { StatusCode::NOT_FOUND }),
        )
        .route(
            "/v1.41/images/create",
            post(
                |State(s): State<Shared>, Query(q): Query<Vec<(String, String)>>| async move {
                    s.lock().unwrap().pulls.push(format!("{q:?}"));
                    StatusCode::OK
                },
            ),
        )
        .route(
            "/v1.41/containers/create",
            post(
                |State(s): State<Shared>, Json(body): Json<Value>| async move {
                    let mut d = s.lock().unwrap();
                    d.creates.push(body);
                    if d.reject_create {
                        return (
                            StatusCode::INTERNAL_SERVER_ERROR,
                            Json(json!({"message": "no space left"})),
                        )
                            .into_response();
                    }
                    d.next += 1;
                    let id = format!("c{}", d.next);
                    d.live.insert(id.clone());
                    (StatusCode::CREATED, Json(json!({"Id": id}))).into_response()
                },
            ),
        )
        .route(
            "/v1.41/containers/{id}/start",
            post(|| async { StatusCode::NO_CONTENT }),
        )
        .route(
            "/v1.41/containers/{id}/wait",
            post(|| async { Json(json!({"StatusCode": 0})) }),
        )
        .route(
            "/v1.41/containers/{id}/logs",
            get(|| async { Response::new(Body::from(framed_logs())) }),
        )
        .route(
            "/v1.41/containers/{id}",
            delete(
                |State(s): State<Shared>, Path(id): Path<String>| async move {
                    if s.lock().unwrap().live.remove(&id) {
                        StatusCode::NO_CONTENT
                    } else {
                        StatusCode::NOT_FOUND
                    }
                },
            ),
        )
        .with_state(state)
}

async fn spawn_tcp(state: Shared) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    format!("tcp://{addr}")
}

fn orchestrator(dir: &std::path::Path) -> Orchestrator {
    Orchestrator::new(
        Arc::new(FileStore::open(dir).unwrap()),
        Arc::new(DefaultEngineFactory),
        ToolOutputParser::new(default_taxonomy()),
        OrchestratorConfig::default(),
    )
}

#[tokio::test]
async fn campaign_over_http_applies_caps_and_cleans_up() {
    let state = Shared::default();
    let endpoint = spawn_tcp(state.clone()).await;
    let dir = tempfile::tempdir().unwrap();
    let orch = orchestrator(dir.path());
    let spec = ContainerSpec::new(100, CpuMode::AllCores)
        .unwrap()
        .with_image("bench:1.0");
    let req = CampaignRequest::new(
        vec![CampaignHost {
            vm: vm(),
            binding: ExecutorBinding::EngineApi { endpoint },
        }],
        spec,
    );
    let out = orch.run_campaign(req).await.unwrap();
    assert_eq!(out.record.hosts[0].status, HostStatus::Done);
    assert_eq!(out.dataset.unwrap().len(), default_taxonomy().len());

    let d = state.lock().unwrap();
    assert_eq!(d.creates.len(), 1);
    let body = &d.creates[0];
    assert_eq!(body["Image"], "bench:1.0");
    assert_eq!(body["HostConfig"]["Memory"], 100u64 * 1024 * 1024);
    assert_eq!(body["HostConfig"]["CpusetCpus"], "0-3");
    assert_eq!(body["Labels"]["vmrank.host"], "m3.xlarge");
    assert_eq!(d.pulls.len(), 1);
    assert!(d.pulls[0].contains("\"bench\"") && d.pulls[0].contains("\"1.0\""));
    assert!(d.live.is_empty());
}

#[tokio::test]
async fn rejected_create_fails_host_without_leaks() {
    let state = Shared::default();
    state.lock().unwrap().reject_create = true;
    let endpoint = spawn_tcp(state.clone()).await;
    let dir = tempfile::tempdir().unwrap();
    let orch = orchestrator(dir.path());
    let req = CampaignRequest::new(
        vec![CampaignHost {
            vm: vm(),
            binding: ExecutorBinding::EngineApi { endpoint },
        }],
        ContainerSpec::new(500, CpuMode::SingleCore).unwrap(),
    );
    let out = orch.run_campaign(req).await.unwrap();
    match &out.record.hosts[0].status {
        HostStatus::Failed(reason) => {
            assert!(reason.starts_with("container create failed"), "{reason}");
            assert!(reason.contains("no space left"), "{reason}");
        }
        other => panic!("{other:?}"),
    }
    assert!(out.dataset.is_none());
    assert!(state.lock().unwrap().live.is_empty());
}

#[tokio::test]
async fn unreachable_endpoint_fails_host() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let dir = tempfile::tempdir().unwrap();
    let orch = orchestrator(dir.path());
    let req = CampaignRequest::new(
        vec![CampaignHost {
            vm: vm(),
            binding: ExecutorBinding::EngineApi {
                endpoint: format!("tcp://{addr}"),
            },
        }],
        ContainerSpec::new(100, CpuMode::SingleCore).unwrap(),
    );
    let out = orch.run_campaign(req).await.unwrap();
    assert!(matches!(
        &out.record.hosts[0].status,
        HostStatus::Failed(r) if r.starts_with("host unreachable")
    ));
}

#[cfg(unix)]
#[tokio::test]
async fn unix_socket_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let sock = dir.path().join("engine.sock");
    let listener = tokio::net::UnixListener::bind(&sock).unwrap();
    let state = Shared::default();
    let app = router(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });

    let engine = DockerEngine::new(&format!("unix://{}", sock.display())).unwrap();
    engine.ping().await.unwrap();
    let spec = ContainerSpec::new(1000, CpuMode::SingleCore).unwrap();
    let req = CreateRequest::for_host(&vm(), &spec, "bench:1.0", &"run-u".into());
    let id = engine.create(&req).await.unwrap();
    engine.start(&id).await.unwrap();
    assert_eq!(engine.wait(&id).await.unwrap(), 0);
    assert!(engine.logs(&id).await.unwrap().len() > 30);
    engine.remove(&id).await.unwrap();
    let err = engine.remove(&id).await.unwrap_err();
    assert!(err.to_string().contains("404"), "{err}");
    assert_eq!(
        state.lock().unwrap().creates[0]["HostConfig"]["Memory"],
        1000u64 << 20
    );
}
