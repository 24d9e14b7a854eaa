//! The HTTP inpainting client against a local server speaking the same
//! protocol, backed here by the mock inpainter.

use std::time::Duration;

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use hullpaint::inpaint::wire::{WireRequest, WireResponse, INPAINT_PATH};
use hullpaint::inpaint::{mock_inpaint, InpaintBackend, InpaintRequest, MockTarget, RemoteBackend};
use hullpaint::{MaskImage, RgbImage};

async fn inpaint(Json(body): Json<WireRequest>) -> Result<Json<WireResponse>, (StatusCode, Json<serde_json::Value>)> {
    let bad = |e: hullpaint::Error| (StatusCode::BAD_REQUEST, Json(serde_json::json!({"error": e.to_string()})));
    let req = body.into_request().map_err(bad)?;
    let out = mock_inpaint(&req.image, &req.mask, &MockTarget::Solid([0.1, 0.2, 0.9]), req.strength).map_err(bad)?;
    Ok(Json(WireResponse::from_image(&out).map_err(bad)?))
}

fn main() -> hullpaint::Result<()> {
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).expect("bind");
    let addr = listener.local_addr().expect("address");
    rt.spawn(async move { axum::serve(listener, Router::new().route(INPAINT_PATH, post(inpaint))).await });

    let backend = RemoteBackend::new(&format!("http://{addr}"), Duration::from_secs(5), 2);
    let image = RgbImage::filled(32, 24, [0.8, 0.8, 0.8]);
    let mask = MaskImage::from_fn(32, 24, |x, y| x >= 8 && x < 24 && y >= 6 && y < 18);
    let resp = backend.inpaint(&InpaintRequest::new(image, mask, 1.0, 3))?;
    println!("{} -> center {:?}, corner {:?}", backend.describe(), resp.image.get(16, 12), resp.image.get(0, 0));

    Ok(())
}
