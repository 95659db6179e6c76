use std::fmt::Write;

use super::DecisionContext;

const PREAMBLE: &str = "\
(Premise) You are a participant of the simulation of stock markets. Behave
as an investor. Answer your order decision after analysing the given
information.
(Instruction) Your current portfolio is provided as a following format.
Unrealized gain refers to the increase in value of the investment that has
not yet been sold. It represents the potential profit on your stock
position. Negative unrealized gain means  that the investment has decreased
in value.
[Your portfolio]cash: {}
[Your portfolio]market id: {}, volume: {}, unrealized gain: {}, ...
Each market condition is provided as a following format.
[Market condition]market id: {}, current market price: {},
all time high price: {}, all time low price: {}, ...
[Market condition]market id: {}, remaining time: {}, total time: {}
Your trading history is provided as a following format. Negative volume
means that you sold the stock.
[Your trading history]market id: {}, price: {}, volume: {}, ...
Order flow imbalance is provided as a following format. Order flow imbalance
means the difference between the number of buy and sell orders submitted to
the stock market. Order flow imbalance is calculated as the difference between
the number of buy and sell orders. Order flow imbalance can range from -1 to 1.
Negative order flow imbalance indicates that the number of sell orders exceed
that of buy orders. If the order flow is positive (negative), the fundamental
value tends to be high (low). Higher absolute value of order flow imbalance
indicates that orders are imbalance to one side, and suggests stronger evidence
about the fundamentals value of the stock.
[Order flow imbalance]market id: {}, order flow imbalance: {}, ...
";

const ANSWER_FORMAT: &str = "\
(Answer format) Decide your investment in the following JSON format. Do not
deviate from the format, and do not add any additional words to your response
outside of the format. Make sure to enclose each property in double quotes.
Order volume means the number of units you want to trade the stock. Possible
is_buy means whether to buy or sell the stock. is_buy must be True or False.
Short selling is not allowed. If your holding stock volume in the portfolio is
negative, buy them back immediately.  Cash shortage is not allowed. If your
cash amount in the portfolio is negative, sell your holding stocks immediately.
Try to keep your order volume as non-zero and not-extreme as possible. Try to
keep your portfolio balanced. If you feel you are holding a lot of stocks or
your cash amount is insufficient, you should sell them. Order price means the
limit price at which you want to buy or sell the stock. By adjusting order
price, you can trade at a more favorable price or adjust the time it takes to
execute a trade. Here are the answer format.
{\"<market id>\": {\"order_price\": \"<order price>\", \"is_buy\": \"<True or False>\",
\"order_volume\": \"<order volume>\", \"reason\": \"<reason>\"} ...}
Now, decide your order. Please explain the reason and your emotion in
as much detail as possible.
";

const NEGATIVE_CASH: &str = " (Caution! Your cash amount is negative!
To avoid this situation, you have to sell the stocks.)";

const NEGATIVE_POSITION: &str = " 
(Caution! Your holding stock volume is negative! To avoid this
situation, you have to buy this stock.)";

/// Shortest round-trip decimal, always with a fractional part (`300.0`).
pub fn format_real(x: f64) -> String {
    format!("{:?}", x + 0.0)
}

/// Cash is shown without a fractional part when it is a whole amount.
pub fn format_cash(x: f64) -> String {
    let x = x + 0.0;
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format_real(x)
    }
}

/// Renders the full decision prompt for one agent.
pub fn build_prompt(ctx: &DecisionContext) -> String {
    let mut out = String::with_capacity(PREAMBLE.len() + ANSWER_FORMAT.len() + 512);
    out.push_str(PREAMBLE);
    out.push_str(&information_block(ctx));
    out.push_str(ANSWER_FORMAT);
    out
}

/// The `(Information)` section on its own.
pub fn information_block(ctx: &DecisionContext) -> String {
    let id = ctx.market_id;
    let mut s = String::new();
    s.push_str("(Information) Here's the information.\n");
    let _ = write!(s, "[Your portfolio]cash: {}", format_cash(ctx.cash));
    if ctx.cash < 0.0 {
        s.push_str(NEGATIVE_CASH);
    }
    s.push('\n');
    let _ = write!(
        s,
        "[Your portfolio]market id: {id}, volume: {}, unrealized gain: {}",
        ctx.position,
        format_real(ctx.unrealized_gain)
    );
    if ctx.position < 0 {
        s.push_str(NEGATIVE_POSITION);
    }
    s.push('\n');
    let _ = writeln!(
        s,
        "[Market condition]market id: {id}, current market price: {},\nall time high price: {}, all time low price: {}",
        format_real(ctx.market_price),
        format_real(ctx.all_time_high),
        format_real(ctx.all_time_low)
    );
    let _ = writeln!(
        s,
        "[Market condition]market id: {id}, remaining time: {}, total time: {}",
        ctx.remaining_time, ctx.total_time
    );
    s.push_str("[Your trading history]");
    if ctx.history.is_empty() {
        let _ = write!(s, "market id: {id}");
    } else {
        let entries: Vec<String> = ctx
            .history
            .iter()
            .map(|h| {
                format!(
                    "market id: {}, price: {}, volume: {}",
                    h.market_id,
                    format_real(h.price),
                    h.signed_volume
                )
            })
            .collect();
        s.push_str(&entries.join(", "));
    }
    s.push('\n');
    let _ = writeln!(
        s,
        "[Order flow imbalance]market id: {id}, order flow imbalance: {}",
        format_real(ctx.ofi)
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{DecisionContext, HistoryItem};

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

    #[test]
    fn number_formats() {
        assert_eq!(format_real(-63.0), "-63.0");
        assert_eq!(format_real(0.01), "0.01");
        assert_eq!(format_real(-0.0), "0.0");
        assert_eq!(format_cash(30000.0), "30000");
        assert_eq!(format_cash(-1000.0), "-1000");
        assert_eq!(format_cash(250.5), "250.5");
    }

    #[test]
    fn negative_cash_warning() {
        let mut c = ctx();
        c.cash = -1000.0;
        let p = build_prompt(&c);
        assert!(p.contains(
            "[Your portfolio]cash: -1000 (Caution! Your cash amount is negative!\nTo avoid this situation, you have to sell the stocks.)\n"
        ));
        assert!(!p.contains("holding stock volume is negative!"));
    }

    #[test]
    fn negative_position_warning() {
        let mut c = ctx();
        c.position = -1;
        c.unrealized_gain = 3.0;
        let p = build_prompt(&c);
        assert!(p.contains(
            "[Your portfolio]market id: 0, volume: -1, unrealized gain: 3.0 \n(Caution! Your holding stock volume is negative! To avoid this\nsituation, you have to buy this stock.)\n"
        ));
        assert!(!p.contains("Your cash amount is negative!"));
    }

    #[test]
    fn empty_history_line() {
        let mut c = ctx();
        c.history.clear();
        assert!(information_block(&c).contains("[Your trading history]market id: 0\n"));
    }

    #[test]
    fn multiple_history_entries() {
        let mut c = ctx();
        c.history.push(HistoryItem {
            market_id: 0,
            price: 310.25,
            signed_volume: -4,
        });
        assert!(information_block(&c).contains(
            "[Your trading history]market id: 0, price: 300.0, volume: 10, market id: 0, price: 310.25, volume: -4\n"
        ));
    }
}
