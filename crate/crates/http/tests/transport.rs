use std::sync::Arc;

use reqgate_core::generator::{run_collection_to, ApiSchema, GeneratorConfig, RequestGenerator};
use reqgate_core::registry::{
    ApiRequest, Endpoint, RegistryService, ServiceConfig, Transport, LOGIN_PATH, STATUS_REDIRECT,
};
use reqgate_core::rules::{Catalog, Environment, VersionId};
use reqgate_http::{HttpTransport, ServerHandle};

const TOKEN: &str = "http-test-token";

fn config(version: u8, env: Environment) -> ServiceConfig {
    ServiceConfig {
        version_id: VersionId::new(version).unwrap(),
        environment: env,
        auth_token: TOKEN.into(),
    }
}

fn start(catalog: &Catalog, cfg: ServiceConfig) -> ServerHandle {
    let svc = Arc::new(RegistryService::from_catalog(cfg, catalog));
    ServerHandle::start(svc, "127.0.0.1:0".parse().unwrap()).unwrap()
}

#[test]
fn http_and_in_process_give_identical_logs() {
    let catalog = Catalog::generate(0);
    for (version, env) in [(1, Environment::Dev), (7, Environment::Prod)] {
        let cfg = config(version, env);
        let gen = RequestGenerator::new(
            ApiSchema::default(),
            GeneratorConfig {
                seed: 5,
                budget: 300,
                ..Default::default()
            },
            TOKEN,
        )
        .unwrap();

        let local = RegistryService::from_catalog(cfg.clone(), &catalog);
        let mut local_log = Vec::new();
        let local_tally = run_collection_to(&gen, &local, cfg.version_id, env, &mut local_log).unwrap();

        let server = start(&catalog, cfg.clone());
        let remote = HttpTransport::new(&server.base_url());
        let mut remote_log = Vec::new();
        let remote_tally = run_collection_to(&gen, &remote, cfg.version_id, env, &mut remote_log).unwrap();

        assert_eq!(local_tally, remote_tally);
        assert!(local_log == remote_log, "logs differ for v{version}/{env}");
        assert_eq!(local.counters().unwrap(), remote.counters().unwrap());
    }
}

#[test]
fn missing_token_redirects_without_following() {
    let catalog = Catalog::generate(0);
    let server = start(&catalog, config(1, Environment::Dev));
    let client = HttpTransport::new(&server.base_url());
    let resp = client
        .send(&ApiRequest {
            endpoint: Endpoint::Validation,
            authorization: None,
            body: b"{}".to_vec(),
        })
        .unwrap();
    assert_eq!(resp.status, STATUS_REDIRECT);
    assert_eq!(resp.body["redirect"], LOGIN_PATH);
    assert_eq!(client.counters().unwrap().total_hits, 0);
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let addr = {
        let catalog = Catalog::generate(0);
        let server = start(&catalog, config(1, Environment::Dev));
        server.addr()
    };
    let client = HttpTransport::new(&format!("http://{addr}"));
    assert!(client.counters().is_err());
}
