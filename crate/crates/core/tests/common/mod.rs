//! Shared helpers for the integration tests: a minimal chat-completions stub
//! server and small market configurations.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use fclsim::lob::{MatchMode, Order, OrderBook, Price, Side, Trade};
use fclsim::sim::SimConfig;

/// What the stub sends back for one request.
#[derive(Debug, Clone)]
pub enum Reply {
    /// A 200 response whose first choice carries this content.
    Content(String),
    /// A bare status code with an empty body.
    Status(u16),
}

#[derive(Debug, Clone)]
pub struct Captured {
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

impl Captured {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn prompt(&self) -> &str {
        self.body["messages"][0]["content"].as_str().unwrap_or("")
    }
}

type Script = dyn Fn(usize, &Captured) -> Reply + Send + Sync;

/// Serves scripted replies on a loopback port until dropped with the test.
pub struct StubServer {
    pub url: String,
    requests: Arc<Mutex<Vec<Captured>>>,
}

impl StubServer {
    /// `script(i, request)` produces the reply to the i-th request (from 0).
    pub fn start<F>(script: F) -> Self
    where
        F: Fn(usize, &Captured) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let script: Arc<Script> = Arc::new(script);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let _ = serve(stream, &log, script.as_ref());
            }
        });
        Self {
            url: format!("http://{addr}/v1/chat/completions"),
            requests,
        }
    }

    pub fn requests(&self) -> Vec<Captured> {
        self.requests.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, log: &Mutex<Vec<Captured>>, script: &Script) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut stream = stream;
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(());
    }
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h)?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    let captured = Captured {
        headers,
        body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
    };
    let index = {
        let mut log = log.lock().unwrap();
        log.push(captured.clone());
        log.len() - 1
    };
    let (status, payload) = match script(index, &captured) {
        Reply::Content(text) => (
            200,
            serde_json::json!({
                "id": format!("stub-{index}"),
                "object": "chat.completion",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]
            })
            .to_string(),
        ),
        Reply::Status(code) => (code, String::new()),
    };
    write!(
        stream,
        "HTTP/1.1 {status} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()?;
    Ok(())
}

/// A JSON answer in the requested format.
pub fn answer(is_buy: bool) -> String {
    let flag = if is_buy { "True" } else { "False" };
    format!(
        "{{\"0\": {{\"order_price\": \"300.0\", \"is_buy\": \"{flag}\", \"order_volume\": \"10\", \"reason\": \"stub\"}}}}"
    )
}

/// A few days of a small market; fast enough for per-test use.
pub fn tiny_market(seed: u64) -> SimConfig {
    let mut c = SimConfig::desk();
    c.n_agents = 40;
    c.days = 3;
    c.seed = seed;
    c
}

/// Reference matcher: every incoming order rescans the whole resting list
/// for the best crossing counterparty (best price, then earliest arrival).
#[derive(Debug, Default)]
pub struct RescanMatcher {
    resting: Vec<(Order, i64)>,
}

impl RescanMatcher {
    pub fn submit(&mut self, order: &Order) -> Vec<Trade> {
        let side = order.side();
        let mut remaining = order.volume();
        let mut trades = Vec::new();
        while remaining > 0 {
            let mut best: Option<usize> = None;
            for (i, (r, _)) in self.resting.iter().enumerate() {
                if r.side() == side {
                    continue;
                }
                let crosses = match side {
                    Side::Buy => r.price <= order.price,
                    Side::Sell => r.price >= order.price,
                };
                if !crosses {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => {
                        let bp = self.resting[b].0.price;
                        match side {
                            Side::Buy => r.price < bp,
                            Side::Sell => r.price > bp,
                        }
                    }
                };
                if better {
                    best = Some(i);
                }
            }
            let Some(i) = best else { break };
            let (resting, left) = &mut self.resting[i];
            let volume = remaining.min(*left);
            *left -= volume;
            remaining -= volume;
            let (buy, sell) = match side {
                Side::Buy => (order, &*resting),
                Side::Sell => (&*resting, order),
            };
            trades.push(Trade {
                buy_order_id: buy.order_id,
                sell_order_id: sell.order_id,
                buy_agent: buy.agent_id,
                sell_agent: sell.agent_id,
                price: resting.price,
                volume,
                time: order.time,
                aggressor: Some(side),
            });
            if *left == 0 {
                self.resting.remove(i);
            }
        }
        if remaining > 0 {
            self.resting.push((order.clone(), remaining));
        }
        trades
    }

    pub fn resting(&self) -> Vec<(Order, i64)> {
        let mut v = self.resting.clone();
        v.sort_by_key(|(o, _)| o.order_id);
        v
    }
}

/// `(is_buy, price level, volume, agent)` tuples turned into orders with
/// ids and times counting from 1.
pub fn orders_from(rows: &[(bool, i64, i64, usize)]) -> Vec<Order> {
    rows.iter()
        .enumerate()
        .map(|(i, &(is_buy, level, volume, agent))| Order {
            order_id: i as u64 + 1,
            agent_id: agent,
            time: i as u64 + 1,
            price: Price(10_000 + level),
            signed_volume: if is_buy { volume } else { -volume },
            expiry: u64::MAX,
        })
        .collect()
}

/// Runs `orders` through both matchers; `Err` describes the first mismatch.
pub fn compare_matchers(orders: &[Order]) -> Result<(), String> {
    let mut book = OrderBook::new();
    let mut naive = RescanMatcher::default();
    for o in orders {
        let got = book.submit(o.clone(), MatchMode::Continuous).map_err(|e| e.to_string())?;
        let want = naive.submit(o);
        if got != want {
            return Err(format!("order {}: engine {got:?} vs rescan {want:?}", o.order_id));
        }
    }
    let mut rest = book.resting_orders();
    rest.sort_by_key(|(o, _)| o.order_id);
    if rest != naive.resting() {
        return Err("resting books differ".into());
    }
    Ok(())
}
