//! Line-delimited JSON over stdio, and the same messages as WebSocket text
//! frames. A client receives events only after `events.subscribe`.

use std::io::{self, BufRead, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, TryRecvError};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

use crate::protocol::{Event, EventKind, Outgoing, Request, Response};
use crate::session::{Service, ServiceError};

const POLL: Duration = Duration::from_millis(20);

fn kinds_of(payload: &Value) -> Result<Vec<EventKind>, ServiceError> {
    match payload.get("kinds") {
        None | Some(Value::Null) => Ok(EventKind::ALL.to_vec()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| ServiceError::BadPayload(e.to_string())),
    }
}

/// What a request does to the client's subscription.
enum Subscription {
    Keep,
    Replace(Option<Receiver<Event>>),
}

/// Answers one request line; subscription verbs are handled here, the rest
/// by the session.
fn route(service: &Service, line: &str) -> (Response, Subscription) {
    let req: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(_) => return (service.handle_line(line), Subscription::Keep),
    };
    match req.verb.as_str() {
        "events.subscribe" => match kinds_of(&req.payload) {
            Ok(kinds) => {
                let rx = service.subscribe(&kinds);
                (Response::ok(req.id, json!({ "kinds": kinds })), Subscription::Replace(Some(rx)))
            }
            Err(e) => (Response::error(req.id, e.body()), Subscription::Keep),
        },
        "events.unsubscribe" => (Response::ok(req.id, json!({})), Subscription::Replace(None)),
        _ => (service.handle(req), Subscription::Keep),
    }
}

/// Takes every event already queued. A hung-up bus ends the subscription.
fn drain(events: &mut Option<Receiver<Event>>) -> Vec<Event> {
    let mut out = Vec::new();
    while let Some(rx) = events {
        match rx.try_recv() {
            Ok(e) => out.push(e),
            Err(TryRecvError::Empty) => break,
            Err(TryRecvError::Disconnected) => *events = None,
        }
    }
    out
}

fn write_line(out: &mut impl Write, msg: &Outgoing) -> io::Result<()> {
    writeln!(out, "{}", msg.to_line())?;
    out.flush()
}

/// Serves one client on a line stream until the input ends. Events that
/// arrive between requests are forwarded by a helper thread.
pub fn serve_stdio<R: BufRead, W: Write + Send>(service: &Service, input: R, output: W) -> io::Result<()> {
    let shared: Mutex<(Option<Receiver<Event>>, W)> = Mutex::new((None, output));
    let flush = |shared: &Mutex<(Option<Receiver<Event>>, W)>, response: Option<Response>| -> io::Result<()> {
        let mut g = shared.lock().unwrap_or_else(|p| p.into_inner());
        let (events, out) = &mut *g;
        for e in drain(events) {
            write_line(out, &Outgoing::Event(e))?;
        }
        match response {
            Some(r) => write_line(out, &Outgoing::Response(r)),
            None => Ok(()),
        }
    };
    let done = AtomicBool::new(false);
    std::thread::scope(|s| {
        s.spawn(|| {
            while !done.load(Ordering::Relaxed) && flush(&shared, None).is_ok() {
                std::thread::sleep(POLL);
            }
        });
        let result = (|| {
            for line in input.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let (response, sub) = route(service, &line);
                if let Subscription::Replace(rx) = sub {
                    shared.lock().unwrap_or_else(|p| p.into_inner()).0 = rx;
                }
                flush(&shared, Some(response))?;
            }
            Ok(())
        })();
        done.store(true, Ordering::Relaxed);
        result
    })
}

/// Accepts WebSocket clients until `stop` is set; one thread per client.
pub fn serve_ws(service: &Service, listener: TcpListener, stop: &AtomicBool) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    std::thread::scope(|s| {
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let service = service.clone();
                    s.spawn(move || {
                        let _ = ws_client(&service, stream, stop);
                    });
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
                Err(e) => return Err(e),
            }
        }
        Ok(())
    })
}

fn ws_client(service: &Service, stream: TcpStream, stop: &AtomicBool) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let mut events = None;
    let send = |ws: &mut WebSocket<TcpStream>, msg: Outgoing| ws.send(Message::text(msg.to_line()));
    while !stop.load(Ordering::Relaxed) {
        for e in drain(&mut events) {
            send(&mut ws, Outgoing::Event(e))?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let (response, sub) = route(service, text.as_str());
                if let Subscription::Replace(rx) = sub {
                    events = rx;
                }
                for e in drain(&mut events) {
                    send(&mut ws, Outgoing::Event(e))?;
                }
                send(&mut ws, Outgoing::Response(response))?;
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e),
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}
