//! WebSocket transport: `GET /ws` upgrades to a socket carrying protocol
//! messages as text frames.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message as Frame, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;

use crate::protocol::Message;
use crate::session::{Connection, Service};

pub fn router(service: Arc<Service>) -> Router {
    Router::new().route("/ws", get(upgrade)).with_state(service)
}

async fn upgrade(ws: WebSocketUpgrade, State(service): State<Arc<Service>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, service))
}

async fn connection(mut socket: WebSocket, service: Arc<Service>) {
    let mut conn = Connection::new(service);
    while let Some(Ok(frame)) = socket.recv().await {
        let replies = match frame {
            Frame::Text(text) => {
                // Learning is CPU-bound; keep it off the async workers' hot path.
                tokio::task::block_in_place(|| conn.handle_text(text.as_str()))
            }
            Frame::Binary(_) => vec![Message::error("binary frames are not part of the protocol")],
            Frame::Close(_) => break,
            _ => continue,
        };
        for reply in replies {
            if socket.send(Frame::Text(reply.to_json().into())).await.is_err() {
                return;
            }
        }
    }
}

/// Serves until the listener fails. Returns the bound address through
/// `on_bound` first, which lets callers bind port 0.
pub async fn serve(addr: SocketAddr, service: Arc<Service>, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(service)).await
}
