//! In-process inpainting server speaking `/v1/inpaint`, with scripted
//! failure modes.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use hullpaint::inpaint::mock::{mock_inpaint, MockTarget};
use hullpaint::inpaint::wire::{WireError, WireRequest, WireResponse, INPAINT_PATH};
use hullpaint::imaging::RgbImage;

#[derive(Clone, Copy, Debug)]
pub enum StubMode {
    /// Mock inpaint toward solid red.
    Red,
    /// Every request is rejected with 400.
    BadRequest,
    /// The first `slow` requests stall for `delay` before answering.
    SlowFirst { slow: usize, delay: Duration },
    /// The first `failing` requests get a 503.
    ServerErrorFirst { failing: usize },
    /// Answers with an image one pixel wider than the request.
    WrongSize,
}

pub struct StubServer {
    pub url: String,
    pub addr: SocketAddr,
    hits: Arc<AtomicUsize>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(mode: StubMode) -> Self {
        let hits = Arc::new(AtomicUsize::new(0));
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let state = (mode, hits.clone());
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                let app = Router::new().route(INPAINT_PATH, post(handle)).with_state(state);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        stop_rx.await.ok();
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self { url: format!("http://{addr}"), addr, hits, stop: Some(stop_tx), thread: Some(thread) }
    }

    /// Requests received so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn error(status: StatusCode, msg: &str) -> Response {
    (status, Json(WireError { error: msg.into() })).into_response()
}

fn answer(req: WireRequest, widen: bool) -> Response {
    let req = match req.into_request() {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, &e.to_string()),
    };
    let mut out = mock_inpaint(&req.image, &req.mask, &MockTarget::Solid([1.0, 0.0, 0.0]), req.strength).unwrap();
    if widen {
        out = RgbImage::filled(out.width + 1, out.height, [0.5; 3]);
    }
    Json(WireResponse::from_image(&out).unwrap()).into_response()
}

async fn handle(State((mode, hits)): State<(StubMode, Arc<AtomicUsize>)>, Json(req): Json<WireRequest>) -> Response {
    let n = hits.fetch_add(1, Ordering::SeqCst);
    match mode {
        StubMode::Red => answer(req, false),
        StubMode::BadRequest => error(StatusCode::BAD_REQUEST, "mask is empty"),
        StubMode::SlowFirst { slow, delay } => {
            if n < slow {
                tokio::time::sleep(delay).await;
            }
            answer(req, false)
        }
        StubMode::ServerErrorFirst { failing } => {
            if n < failing {
                error(StatusCode::SERVICE_UNAVAILABLE, "model still loading")
            } else {
                answer(req, false)
            }
        }
        StubMode::WrongSize => answer(req, true),
    }
}
