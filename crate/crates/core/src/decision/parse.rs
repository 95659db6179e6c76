use serde_json::{Map, Value};
use thiserror::Error;

use super::Decision;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON decision object found in the response")]
    NoObject,
    #[error("decision object has no usable is_buy field")]
    MissingIsBuy,
}

/// Extracts the first `{"<market id>": {..., "is_buy": ...}}` object from a
/// free-text reply.
pub fn parse_response(text: &str) -> Result<Decision, ParseError> {
    let mut saw_decision_shape = false;
    for (start, _) in text.match_indices('{') {
        let Some(end) = matching_brace(&text[start..]) else {
            continue;
        };
        let candidate = &text[start..start + end + 1];
        let Some(Value::Object(outer)) = parse_lenient(candidate) else {
            continue;
        };
        for inner in outer.values() {
            let Value::Object(fields) = inner else {
                continue;
            };
            saw_decision_shape = true;
            if let Some(decision) = decision_from(fields) {
                return Ok(decision);
            }
        }
    }
    if saw_decision_shape {
        Err(ParseError::MissingIsBuy)
    } else {
        Err(ParseError::NoObject)
    }
}

/// Renders a decision in the answer format expected by [`parse_response`].
pub fn render_decision(market_id: u32, decision: &Decision) -> String {
    let mut fields = Map::new();
    fields.insert(
        "order_price".into(),
        Value::String(decision.order_price.map(|p| format!("{p:?}")).unwrap_or_default()),
    );
    fields.insert(
        "is_buy".into(),
        Value::String(if decision.is_buy { "True" } else { "False" }.into()),
    );
    fields.insert(
        "order_volume".into(),
        Value::String(decision.order_volume.map(|v| v.to_string()).unwrap_or_default()),
    );
    fields.insert("reason".into(), Value::String(decision.reason.clone()));
    let mut outer = Map::new();
    outer.insert(market_id.to_string(), Value::Object(fields));
    Value::Object(outer).to_string()
}

fn decision_from(fields: &Map<String, Value>) -> Option<Decision> {
    let is_buy = match fields.get("is_buy")? {
        Value::Bool(b) => *b,
        Value::String(s) => match s.trim() {
            "True" | "true" => true,
            "False" | "false" => false,
            _ => return None,
        },
        _ => return None,
    };
    let order_price = fields.get("order_price").and_then(|v| match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    });
    let order_volume = fields.get("order_volume").and_then(|v| match v {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => s.trim().parse::<i64>().ok(),
        _ => None,
    });
    let reason = match fields.get("reason") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    Some(Decision {
        is_buy,
        order_price,
        order_volume,
        reason,
    })
}

fn parse_lenient(candidate: &str) -> Option<Value> {
    if let Ok(v) = serde_json::from_str(candidate) {
        return Some(v);
    }
    // Python-style bare booleans are a common deviation.
    let patched = candidate
        .replace(": True", ": \"True\"")
        .replace(": False", ": \"False\"");
    serde_json::from_str(&patched).ok()
}

/// Byte offset of the brace closing the one at the start of `s`.
fn matching_brace(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}
