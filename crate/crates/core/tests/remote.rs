mod common;

use std::net::TcpListener;

use common::{answer, Reply, StubServer};
use fclsim::decision::{
    build_prompt, DecisionContext, DecisionProvider, HistoryItem, ProviderConfig, RemoteProvider, RETRY_NOTE,
};
use fclsim::lob::Side;
use fclsim::single_turn::{run_scenarios, ScenarioConfig, ScenarioKind};

fn ctx() -> DecisionContext {
    DecisionContext {
        market_id: 0,
        cash: 30000.0,
        position: 10,
        unrealized_gain: -63.0,
        market_price: 293.7,
        all_time_high: 300.0,
        all_time_low: 287.5,
        remaining_time: 70,
        total_time: 100,
        history: vec![HistoryItem {
            market_id: 0,
            price: 300.0,
            signed_volume: 10,
        }],
        ofi: 0.01,
    }
}

fn config(url: &str) -> ProviderConfig {
    let mut c = ProviderConfig::remote(url);
    c.retry_backoff_ms = 0;
    c.timeout_ms = 5_000;
    c.api_key_env = None;
    c
}

/// A loopback URL nobody listens on.
fn dead_url() -> String {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    format!("http://127.0.0.1:{port}/v1/chat/completions")
}

#[test]
fn request_carries_prompt_model_and_temperature() {
    let stub = StubServer::start(|_, _| Reply::Content(answer(false)));
    let mut cfg = config(&stub.url);
    cfg.model_name = "stub-model".into();
    cfg.temperature = 0.25;
    let mut p = RemoteProvider::new(cfg);
    assert_eq!(p.decide(&ctx()).unwrap(), Side::Sell);
    let reqs = stub.requests();
    assert_eq!(reqs.len(), 1);
    let body = &reqs[0].body;
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["temperature"], 0.25);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(reqs[0].prompt(), build_prompt(&ctx()));
    assert!(reqs[0].header("authorization").is_none());
}

#[test]
fn bearer_token_from_named_variable() {
    let var = "FCLSIM_TEST_REMOTE_KEY";
    std::env::set_var(var, "sekrit");
    let stub = StubServer::start(|_, _| Reply::Content(answer(true)));
    let mut cfg = config(&stub.url);
    cfg.api_key_env = Some(var.into());
    let mut p = RemoteProvider::new(cfg);
    assert_eq!(p.decide(&ctx()).unwrap(), Side::Buy);
    assert_eq!(stub.requests()[0].header("authorization"), Some("Bearer sekrit"));
}

#[test]
fn unparsable_reply_is_retried_with_note() {
    let stub = StubServer::start(|i, _| {
        Reply::Content(if i == 0 { "Let me think about it.".into() } else { answer(true) })
    });
    let mut p = RemoteProvider::new(config(&stub.url));
    assert_eq!(p.decide(&ctx()).unwrap(), Side::Buy);
    let reqs = stub.requests();
    assert_eq!(reqs.len(), 2);
    assert!(!reqs[0].prompt().contains(RETRY_NOTE));
    assert!(reqs[1].prompt().starts_with(&build_prompt(&ctx())));
    assert!(reqs[1].prompt().contains(RETRY_NOTE));
}

#[test]
fn server_errors_exhaust_retries() {
    let stub = StubServer::start(|_, _| Reply::Status(500));
    let mut cfg = config(&stub.url);
    cfg.max_retries = 3;
    let err = RemoteProvider::new(cfg).decide(&ctx()).unwrap_err();
    assert_eq!(err.attempts, 4);
    assert_eq!(stub.requests().len(), 4);
}

#[test]
fn transient_error_then_success() {
    let stub = StubServer::start(|i, _| if i < 2 { Reply::Status(503) } else { Reply::Content(answer(false)) });
    let mut p = RemoteProvider::new(config(&stub.url));
    assert_eq!(p.decide(&ctx()).unwrap(), Side::Sell);
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn missing_is_buy_is_a_failure() {
    let stub = StubServer::start(|_, _| Reply::Content("{\"0\": {\"order_price\": \"1\", \"reason\": \"x\"}}".into()));
    let mut cfg = config(&stub.url);
    cfg.max_retries = 0;
    assert!(RemoteProvider::new(cfg).decide(&ctx()).is_err());
}

#[test]
fn dead_endpoint_is_unavailable() {
    let mut cfg = config(&dead_url());
    cfg.max_retries = 1;
    let err = RemoteProvider::new(cfg).decide(&ctx()).unwrap_err();
    assert_eq!(err.attempts, 2);
}

/// Buys whenever the prompt reports a loss.
fn loss_buyer(_: usize, req: &common::Captured) -> Reply {
    Reply::Content(answer(req.prompt().contains("unrealized gain: -")))
}

#[test]
fn single_turn_table_from_stub_replies() {
    let stub = StubServer::start(loss_buyer);
    let mut base = ScenarioConfig::new(ScenarioKind::GainAtHigh);
    base.trials = 12;
    let row = run_scenarios(&base, &config(&stub.url)).unwrap();
    assert_eq!(row.provider, "remote:llama-3.1-8b-instruct");
    for (kind, tally) in &row.tallies {
        let loss = matches!(kind, ScenarioKind::LossAtLow | ScenarioKind::LossAboveLow);
        let want = if loss { (12, 0, 0) } else { (0, 12, 0) };
        assert_eq!((tally.buys, tally.sells, tally.failures), want, "{}", kind.label());
    }
    assert_eq!(stub.requests().len(), 48);
}

#[test]
fn single_turn_bad_endpoint_counts_failures() {
    let mut base = ScenarioConfig::new(ScenarioKind::GainAtHigh);
    base.trials = 3;
    let mut cfg = config(&dead_url());
    cfg.max_retries = 0;
    let row = run_scenarios(&base, &cfg).unwrap();
    assert!(row.tallies.iter().all(|(_, t)| t.failures == 3));
    assert_eq!(row.failure_rate(), 1.0);
}
