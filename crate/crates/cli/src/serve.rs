use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use epidural_core::engine::record::RecordWriter;
use epidural_core::session::{encode_server, ErrorCode, ServerMessage, SessionHandler};
use epidural_core::TrialRecord;
use tower_http::services::ServeDir;

#[derive(clap::Args)]
pub struct Args {
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Where committed records go; defaults to $EPIDURAL_RECORD_DIR or ./records.
    #[arg(long)]
    record_dir: Option<PathBuf>,
    /// Built trainer UI to serve at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    records: mpsc::Sender<TrialRecord>,
    /// Prefix for default participant ids, unique per server start.
    run_id: u64,
    connections: Arc<AtomicU64>,
}

pub fn app(records: mpsc::Sender<TrialRecord>, static_dir: Option<PathBuf>) -> Router {
    let run_id = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let state = AppState { records, run_id, connections: Arc::new(AtomicU64::new(0)) };
    let router = Router::new().route("/ws", get(upgrade)).with_state(state);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| session(socket, state))
}

/// One trainee session. Dropping the handler on disconnect discards any
/// trial that was not committed.
async fn session(mut socket: WebSocket, state: AppState) {
    let n = state.connections.fetch_add(1, Ordering::Relaxed);
    let records = state.records.clone();
    let mut handler = SessionHandler::new(format!("trainee-{}-{n:04}", state.run_id), move |r| {
        let _ = records.send(r);
    });
    while let Some(Ok(msg)) = socket.recv().await {
        let replies = match msg {
            Message::Text(text) => handler.handle_text(text.as_str()),
            Message::Binary(_) => vec![encode_server(&ServerMessage::Error {
                code: ErrorCode::BadMessage,
                message: "frames must be UTF-8 JSON text".into(),
            })],
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        for reply in replies {
            if socket.send(Message::Text(reply.into())).await.is_err() {
                return;
            }
        }
    }
}

pub fn run(args: Args) -> Result<ExitCode> {
    let record_dir = args.record_dir.unwrap_or_else(crate::default_record_dir);
    std::fs::create_dir_all(&record_dir).with_context(|| format!("creating {}", record_dir.display()))?;
    let writer = RecordWriter::spawn(record_dir.clone());
    let router = app(writer.sender(), args.static_dir);

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", args.port))
            .await
            .with_context(|| format!("binding port {}", args.port))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr} (sessions at ws://{addr}/ws, records in {})", record_dir.display());
        std::io::stdout().flush()?;
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    drop(runtime);

    let failures: Vec<_> = writer.finish().into_iter().filter_map(|r| r.err()).collect();
    for e in &failures {
        eprintln!("error: failed to persist a record: {e}");
    }
    Ok(if failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
