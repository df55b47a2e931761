//! Line-protocol serving: one JSON request per input line, one JSON report
//! per output line.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::sync::Mutex;
use std::thread;

use serde_json::json;

use crate::engine::{serve_request, Pipeline, RequestConfig};
use crate::store::RequestRecord;
use crate::Result;

/// Response line for one input line. Blank lines yield `None`.
pub fn respond(pipeline: &Pipeline, config: &RequestConfig, line_no: usize, line: &str) -> Option<String> {
    if line.trim().is_empty() {
        return None;
    }
    let request: RequestRecord = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(_) => return Some(json!({"error": "parse", "line": line_no}).to_string()),
    };
    Some(match serve_request(pipeline, &request, config) {
        Ok(report) => serde_json::to_string(&report).expect("report serializes"),
        Err(e) => json!({"id": request.id, "error": "serve", "message": e.to_string()}).to_string(),
    })
}

/// Serves lines from `input` until end of input. `workers > 1` handles
/// requests concurrently, so output order may differ from input order;
/// every response carries its request id or line number.
pub fn serve_lines<R, W>(
    pipeline: &Pipeline,
    config: &RequestConfig,
    input: R,
    output: &mut W,
    workers: usize,
) -> Result<usize>
where
    R: BufRead + Send,
    W: Write,
{
    config.validate(pipeline.task())?;
    let io_err = |e: std::io::Error| crate::Error::Pipeline(format!("serve i/o: {e}"));
    if workers <= 1 {
        let mut served = 0;
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(io_err)?;
            if let Some(resp) = respond(pipeline, config, i + 1, &line) {
                writeln!(output, "{resp}").map_err(io_err)?;
                output.flush().map_err(io_err)?;
                served += 1;
            }
        }
        return Ok(served);
    }

    let (job_tx, job_rx) = mpsc::sync_channel::<(usize, String)>(workers * 4);
    let job_rx = Mutex::new(job_rx);
    let (out_tx, out_rx) = mpsc::channel::<String>();
    thread::scope(|scope| -> Result<usize> {
        for _ in 0..workers {
            let out_tx = out_tx.clone();
            let job_rx = &job_rx;
            scope.spawn(move || loop {
                let job = job_rx.lock().expect("job queue").recv();
                let Ok((line_no, line)) = job else { break };
                if let Some(resp) = respond(pipeline, config, line_no, &line) {
                    if out_tx.send(resp).is_err() {
                        break;
                    }
                }
            });
        }
        drop(out_tx);
        let reader = scope.spawn(move || -> std::io::Result<()> {
            for (i, line) in input.lines().enumerate() {
                if job_tx.send((i + 1, line?)).is_err() {
                    break;
                }
            }
            Ok(())
        });
        let mut served = 0;
        for resp in out_rx {
            writeln!(output, "{resp}").map_err(io_err)?;
            output.flush().map_err(io_err)?;
            served += 1;
        }
        reader.join().expect("reader thread").map_err(io_err)?;
        Ok(served)
    })
}

/// Accepts TCP connections and serves each on its own thread with the
/// line protocol. Stops after `max_connections` when given.
pub fn serve_tcp(pipeline: &Pipeline, config: &RequestConfig, listener: TcpListener, max_connections: Option<usize>) -> Result<()> {
    config.validate(pipeline.task())?;
    thread::scope(|scope| {
        for (i, stream) in listener.incoming().enumerate() {
            if max_connections.is_some_and(|m| i >= m) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            scope.spawn(move || {
                let peer = stream.peer_addr().ok();
                let mut writer = match stream.try_clone() {
                    Ok(w) => w,
                    Err(e) => {
                        log::warn!("connection {peer:?}: {e}");
                        return;
                    }
                };
                if let Err(e) = serve_lines(pipeline, config, BufReader::new(stream), &mut writer, 1) {
                    log::warn!("connection {peer:?}: {e}");
                }
            });
            if max_connections.is_some_and(|m| i + 1 >= m) {
                break;
            }
        }
    });
    Ok(())
}
