mod common;

use common::tiny_market;
use fclsim::decision::{ProviderConfig, ProviderKind};
use fclsim::lob::Side;
use fclsim::sim::{self, replay, EventKind, TickRecord};

/// `(step, price, signed volume, aggressor or None)` for every trade row.
fn recorded_trades(records: &[TickRecord]) -> Vec<(u64, f64, i64, Option<usize>)> {
    records
        .iter()
        .filter(|r| r.event == EventKind::Trade)
        .map(|r| (r.step, r.price, r.signed_volume, r.agent_id))
        .collect()
}

fn check_replay(seed: u64, n_fcl: usize, lifetime: Option<u64>) {
    let mut cfg = tiny_market(seed);
    cfg.n_fcl = n_fcl;
    cfg.order_lifetime = lifetime;
    cfg.provider = ProviderConfig::scripted(ProviderKind::ScriptedLossAverse);
    let out = sim::run(&cfg).unwrap();
    let lifetimes: Vec<u64> = out.agents.iter().map(|a| a.order_lifetime()).collect();
    let replayed = replay(&cfg, &out.records, &lifetimes).unwrap();
    let scale = cfg.tick_scale().unwrap();
    let got: Vec<_> = replayed
        .trades
        .iter()
        .map(|t| {
            let (sign, agent) = match t.aggressor {
                Some(Side::Buy) => (1, Some(t.buy_agent)),
                Some(Side::Sell) => (-1, Some(t.sell_agent)),
                None => (1, None),
            };
            (t.time, scale.to_real(t.price), sign * t.volume, agent)
        })
        .collect();
    let want = recorded_trades(&out.records);
    assert!(!want.is_empty());
    assert_eq!(got, want);
    assert_eq!(replayed.book.resting_orders(), out.book.resting_orders());
    assert_eq!(replayed.book.last_price(), out.book.last_price());
}

#[test]
fn replay_reproduces_trades_fcn_only() {
    check_replay(1, 0, None);
}

#[test]
fn replay_reproduces_trades_with_fcl() {
    check_replay(2, 6, None);
}

#[test]
fn replay_respects_fixed_lifetime() {
    check_replay(3, 2, Some(30));
}

#[test]
fn replay_survives_csv_round_trip() {
    let cfg = tiny_market(5);
    let out = sim::run(&cfg).unwrap();
    let mut buf = Vec::new();
    sim::write_csv(&out.records, &mut buf).unwrap();
    let back = sim::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, out.records);
    let lifetimes: Vec<u64> = out.agents.iter().map(|a| a.order_lifetime()).collect();
    let a = replay(&cfg, &out.records, &lifetimes).unwrap();
    let b = replay(&cfg, &back, &lifetimes).unwrap();
    assert_eq!(a.trades, b.trades);
}

#[test]
fn replay_rejects_unknown_agent() {
    let cfg = tiny_market(6);
    let out = sim::run(&cfg).unwrap();
    assert!(matches!(
        replay(&cfg, &out.records, &[]),
        Err(sim::ReplayError::UnknownAgent(_))
    ));
}
