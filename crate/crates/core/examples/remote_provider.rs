//! Scores over HTTP: a local stub serves the analytic oracle, and the remote
//! client must reproduce the in-process scores bit for bit.
//!
//! cargo run --release --example remote_provider

use std::thread;

use splat4d::distill::images_to_model;
use splat4d::guidance::wire::{WireError, WireRequest, WireResponse, PROTOCOL};
use splat4d::guidance::{
    AnalyticProvider, FrameMeta, ModelKind, RemoteConfig, RemoteProvider, SceneTarget, ScoreProvider, ScoreRequest,
    Target,
};
use splat4d::pipeline::{run_stage2, Config, MetricsRecord};
use splat4d::render::render;
use splat4d::scene::{init_cloud, Camera};

fn target() -> Target {
    Target::Scene(SceneTarget::new(init_cloud(15, 0.4, 9).unwrap()))
}

fn reply(req: tiny_http::Request, code: u16, body: String) {
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
    let _ = req.respond(tiny_http::Response::from_string(body).with_status_code(code).with_header(header));
}

fn serve(provider: AnalyticProvider) -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    // The client blocks global-pool workers while waiting, so the stub scores on its own pool.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            if req.url() == "/healthz" {
                reply(req, 200, format!(r#"{{"status":"ok","protocol":"{PROTOCOL}"}}"#));
                continue;
            }
            let mut body = String::new();
            let scored = req
                .as_reader()
                .read_to_string(&mut body)
                .map_err(|e| e.to_string())
                .and_then(|_| serde_json::from_str::<WireRequest>(&body).map_err(|e| e.to_string()))
                .and_then(|w| w.into_request().map_err(|e| e.to_string()))
                .and_then(|r| pool.install(|| provider.score(&r)).map_err(|e| e.to_string()));
            match scored {
                Ok(b) => reply(req, 200, serde_json::to_string(&WireResponse::from_batch(&b)).unwrap()),
                Err(error) => reply(req, 400, serde_json::to_string(&WireError { error }).unwrap()),
            }
        }
    });
    url
}

fn main() -> splat4d::Result<()> {
    let url = serve(AnalyticProvider::new(target()));
    let remote = RemoteProvider::new(RemoteConfig::new(&url))?;
    remote.health()?;
    println!("stub at {url} speaks {PROTOCOL}");

    let local = AnalyticProvider::new(target());
    let guess = init_cloud(15, 0.4, 1)?;
    let meta: Vec<FrameMeta> = (0..4)
        .map(|i| FrameMeta {
            tau: i as f64 / 3.0,
            camera: Camera::orbit(15.0, 90.0 * i as f64, 2.5, 50.0, 24, 16).unwrap().with_background([1.0; 3]),
        })
        .collect();
    let images: Vec<_> = meta.iter().map(|m| render(&guess, &m.camera).image).collect();
    let mut request = ScoreRequest::new(ModelKind::Video, "a corgi", 500, images_to_model(&images), 42);
    request.fps = Some(8);
    request.meta = meta;
    let (a, b) = (local.score(&request)?, remote.score(&request)?);
    let identical = a.eps_cond.data.iter().zip(&b.eps_cond.data).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.eps_uncond.data == b.eps_uncond.data;
    println!("remote scores identical to in-process: {identical}");

    let mut config = Config::default();
    let s2 = &mut config.stage2;
    s2.iterations = 5;
    s2.paths_per_update = 1;
    s2.cameras.width = 24;
    s2.cameras.height = 16;
    s2.field_width = 16;
    let remote = RemoteProvider::new(RemoteConfig::new(&url))?;
    let mut log: Vec<MetricsRecord> = Vec::new();
    run_stage2(&guess, &config, &remote, &remote, &mut log)?;
    for rec in &log {
        println!("{}", serde_json::to_string(rec).unwrap());
    }
    Ok(())
}
