use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// A validated verdict from the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskVerdict {
    pub risk_score: u8,
    pub reasoning: String,
}

/// Both variants mean the output was unusable and the call may be retried.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("malformed model output: {0}")]
    MalformedOutput(String),
    #[error("risk_score {0} outside 1..=5")]
    RangeViolation(i64),
}

/// Byte ranges of balanced `{...}` spans, in order of their opening brace.
fn balanced_objects(text: &str) -> impl Iterator<Item = &str> {
    let bytes = text.as_bytes();
    let mut start = 0;
    std::iter::from_fn(move || {
        while start < bytes.len() {
            let open = start + bytes[start..].iter().position(|&b| b == b'{')?;
            start = open + 1;
            let mut depth = 0usize;
            let mut in_str = false;
            let mut escaped = false;
            for (i, &b) in bytes.iter().enumerate().skip(open) {
                if in_str {
                    match b {
                        _ if escaped => escaped = false,
                        b'\\' => escaped = true,
                        b'"' => in_str = false,
                        _ => {}
                    }
                    continue;
                }
                match b {
                    b'"' => in_str = true,
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(&text[open..=i]);
                        }
                    }
                    _ => {}
                }
            }
        }
        None
    })
}

/// Pull the first JSON object out of free-form model output and validate it.
pub fn parse_model_response(raw: &str) -> Result<RiskVerdict, ResponseError> {
    let obj = balanced_objects(raw)
        .find_map(|s| match serde_json::from_str::<Value>(s) {
            Ok(Value::Object(map)) => Some(map),
            _ => None,
        })
        .ok_or_else(|| ResponseError::MalformedOutput("no JSON object found".into()))?;

    let score = obj
        .get("risk_score")
        .ok_or_else(|| ResponseError::MalformedOutput("missing risk_score".into()))?;
    let score = score
        .as_i64()
        .ok_or_else(|| ResponseError::MalformedOutput(format!("risk_score {score} is not an integer")))?;
    if !(1..=5).contains(&score) {
        return Err(ResponseError::RangeViolation(score));
    }

    let reasoning = obj
        .get("reasoning")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ResponseError::MalformedOutput("missing or empty reasoning".into()))?;

    Ok(RiskVerdict {
        risk_score: score as u8,
        reasoning: reasoning.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_object() {
        let v = parse_model_response(
            r#"{"risk_score": 3, "reasoning": "Provides broad read access to identity providers."}"#,
        )
        .unwrap();
        assert_eq!(v.risk_score, 3);
        assert!(v.reasoning.starts_with("Provides broad read"));
    }

    #[test]
    fn fenced_and_prose_wrapped() {
        let raw = "Sure! Here is the assessment:\n```json\n{\"risk_score\": 4, \"reasoning\": \"r\"}\n```";
        assert_eq!(
            parse_model_response(raw).unwrap(),
            RiskVerdict { risk_score: 4, reasoning: "r".into() }
        );
        let raw = "<think>the {worst} case</think>\n{\"reasoning\": \"has } brace\", \"risk_score\": 2} trailing";
        let v = parse_model_response(raw).unwrap();
        assert_eq!(v.risk_score, 2);
        assert_eq!(v.reasoning, "has } brace");
    }

    #[test]
    fn first_object_wins() {
        let raw = r#"{"risk_score": 1, "reasoning": "a"} {"risk_score": 5, "reasoning": "b"}"#;
        assert_eq!(parse_model_response(raw).unwrap().risk_score, 1);
    }

    #[test]
    fn rejects_bad_outputs() {
        assert_eq!(
            parse_model_response(r#"{"risk_score": 6, "reasoning": "x"}"#),
            Err(ResponseError::RangeViolation(6))
        );
        assert_eq!(
            parse_model_response(r#"{"risk_score": 0, "reasoning": "x"}"#),
            Err(ResponseError::RangeViolation(0))
        );
        for raw in [
            "no json here",
            r#"{"risk_score": "3", "reasoning": "x"}"#,
            r#"{"risk_score": 3.5, "reasoning": "x"}"#,
            r#"{"risk_score": 3}"#,
            r#"{"risk_score": 3, "reasoning": "  "}"#,
            r#"{"reasoning": "x"}"#,
            "{unterminated",
        ] {
            assert!(
                matches!(parse_model_response(raw), Err(ResponseError::MalformedOutput(_))),
                "{raw}"
            );
        }
    }
}
