//! Minimal protocol peer used by the integration tests.
//!
//! Echoes each query back as its response. The loss of the k-th batch is
//! `1 / (1 + 0.05 k)` and the margin `min(1, 0.01 k)`.
//!
//! Environment knobs for failure tests:
//! `ECHO_STALL_ON=<kind>` never answers that request kind,
//! `ECHO_GARBLE_ON=<kind>` answers it with a non-JSON line,
//! `ECHO_EXIT_ON=<kind>` exits with status 3 instead of answering,
//! `ECHO_WRONG_SEQ=1` answers with an off-by-one sequence number.

use std::io::{self, BufRead, Write};

use dialogue_curricula::learner::{Reply, ReplyBody, Request, RequestBody};

fn kind(body: &RequestBody) -> &'static str {
    match body {
        RequestBody::Init { .. } => "init",
        RequestBody::TrainBatch { .. } => "train_batch",
        RequestBody::Generate { .. } => "generate",
        RequestBody::Shutdown => "shutdown",
    }
}

fn main() {
    let knob = |name: &str| std::env::var(name).ok();
    let stall = knob("ECHO_STALL_ON");
    let garble = knob("ECHO_GARBLE_ON");
    let exit_on = knob("ECHO_EXIT_ON");
    let wrong_seq = knob("ECHO_WRONG_SEQ").is_some();

    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut batches = 0u64;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let request = match Request::parse(&line) {
            Ok(r) => r,
            Err(message) => {
                let reply = Reply {
                    seq: 0,
                    body: ReplyBody::Error { message },
                };
                let _ = writeln!(out, "{}", reply.to_line());
                let _ = out.flush();
                continue;
            }
        };
        let k = kind(&request.body);
        if stall.as_deref() == Some(k) {
            continue;
        }
        if exit_on.as_deref() == Some(k) {
            std::process::exit(3);
        }
        if garble.as_deref() == Some(k) {
            let _ = writeln!(out, "this is not json");
            let _ = out.flush();
            continue;
        }
        let mut done = false;
        let body = match request.body {
            RequestBody::Init { .. } => ReplyBody::Ready,
            RequestBody::TrainBatch { samples } => {
                if samples.is_empty() {
                    ReplyBody::Error {
                        message: "empty batch".into(),
                    }
                } else {
                    batches += 1;
                    ReplyBody::Trained {
                        loss: 1.0 / (1.0 + 0.05 * batches as f64),
                        margin: (0.01 * batches as f64).min(1.0),
                    }
                }
            }
            RequestBody::Generate { queries } => ReplyBody::Generated { responses: queries },
            RequestBody::Shutdown => {
                done = true;
                ReplyBody::Bye
            }
        };
        let seq = if wrong_seq { request.seq + 1 } else { request.seq };
        let _ = writeln!(out, "{}", Reply { seq, body }.to_line());
        let _ = out.flush();
        if done {
            break;
        }
    }
}
