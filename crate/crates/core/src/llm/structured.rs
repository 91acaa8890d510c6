//! Pulling a validated JSON record out of free-form model text.

use serde_json::{Map, Value};

use super::GenerationRequest;

/// Value domain of a single field.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Integer {
        min: i64,
        max: i64,
    },
    IntegerIn(Vec<i64>),
    Text,
    /// Non-empty array of objects, each validated against the nested spec.
    List(FieldSpec),
}

/// Required fields of a JSON object and their domains.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldSpec {
    pub fields: Vec<(String, FieldKind)>,
}

impl FieldSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, name: &str, kind: FieldKind) -> Self {
        self.fields.push((name.to_string(), kind));
        self
    }

    /// `{"improving": 1..=39, "worsening": 1..=39}`.
    pub fn contradiction() -> Self {
        Self::new()
            .field("improving", FieldKind::Integer { min: 1, max: 39 })
            .field("worsening", FieldKind::Integer { min: 1, max: 39 })
    }

    pub fn parse(&self, text: &str) -> Result<Map<String, Value>, String> {
        let obj = extract_json_object(text).ok_or_else(|| "no JSON object found in reply".to_string())?;
        self.check(&obj, "")?;
        Ok(obj)
    }

    fn check(&self, obj: &Map<String, Value>, path: &str) -> Result<(), String> {
        for (name, kind) in &self.fields {
            let at = format!("{path}{name}");
            let v = obj.get(name).ok_or_else(|| format!("missing field `{at}`"))?;
            match kind {
                FieldKind::Integer { min, max } => {
                    let n = as_int(v).ok_or_else(|| format!("`{at}` is not an integer"))?;
                    if n < *min || n > *max {
                        return Err(format!("`{at}` = {n} outside {min}..={max}"));
                    }
                }
                FieldKind::IntegerIn(allowed) => {
                    let n = as_int(v).ok_or_else(|| format!("`{at}` is not an integer"))?;
                    if !allowed.contains(&n) {
                        return Err(format!("`{at}` = {n} not one of {allowed:?}"));
                    }
                }
                FieldKind::Text => {
                    let s = v.as_str().ok_or_else(|| format!("`{at}` is not a string"))?;
                    if s.trim().is_empty() {
                        return Err(format!("`{at}` is empty"));
                    }
                }
                FieldKind::List(inner) => {
                    let items = v.as_array().ok_or_else(|| format!("`{at}` is not a list"))?;
                    if items.is_empty() {
                        return Err(format!("`{at}` is empty"));
                    }
                    for (i, item) in items.iter().enumerate() {
                        let o = item.as_object().ok_or_else(|| format!("`{at}[{i}]` is not an object"))?;
                        inner.check(o, &format!("{at}[{i}]."))?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .fields
            .iter()
            .map(|(name, kind)| match kind {
                FieldKind::Integer { min, max } => format!("\"{name}\": integer {min}..{max}"),
                FieldKind::IntegerIn(v) => format!("\"{name}\": one of {v:?}"),
                FieldKind::Text => format!("\"{name}\": string"),
                FieldKind::List(inner) => format!("\"{name}\": [{}]", inner.describe()),
            })
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    pub fn corrective_instruction(&self, problem: &str) -> String {
        format!(
            "Your previous reply could not be used ({problem}). Reply again with a single JSON object of the form {} and nothing else.",
            self.describe()
        )
    }
}

fn as_int(v: &Value) -> Option<i64> {
    v.as_i64().or_else(|| v.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15).map(|f| f as i64))
}

/// Finds the first JSON object in `text`.
///
/// Fenced ```json blocks are preferred; otherwise every `{` is tried as the
/// start of an object, in order.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    if let Some(obj) = fenced_blocks(text).find_map(first_object) {
        return Some(obj);
    }
    first_object(text)
}

fn fenced_blocks(text: &str) -> impl Iterator<Item = &str> {
    text.split("```").skip(1).step_by(2).map(|block| {
        // drop an info string such as `json`
        match block.find('\n') {
            Some(nl) if !block[..nl].contains('{') => &block[nl + 1..],
            _ => block,
        }
    })
}

fn first_object(text: &str) -> Option<Map<String, Value>> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(m))) = stream.next() {
            return Some(m);
        }
    }
    None
}

/// A validated structured reply.
#[derive(Debug, Clone)]
pub struct StructuredReply {
    pub record: Map<String, Value>,
    /// Model text the record was parsed from.
    pub raw: String,
    /// The request that produced `raw` (the corrective one, if a retry was needed).
    pub request: GenerationRequest,
    pub corrected: bool,
}

impl StructuredReply {
    pub fn int(&self, field: &str) -> i64 {
        as_int(&self.record[field]).expect("validated integer field")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_from_prose() {
        let r = FieldSpec::contradiction().parse(r#"here: {"improving": 12, "worsening": 22}"#).unwrap();
        assert_eq!(r["improving"], 12);
        assert_eq!(r["worsening"], 22);
    }

    #[test]
    fn extracts_from_fence() {
        let text = "Sure.\n```json\n{\"improving\": 12, \"worsening\": 22}\n```\nDone {not json}";
        let r = FieldSpec::contradiction().parse(text).unwrap();
        assert_eq!(r["improving"], 12);
    }

    #[test]
    fn skips_braces_that_are_not_json() {
        let text = "set {a, b} then {\"improving\": 3, \"worsening\": 4}";
        assert_eq!(FieldSpec::contradiction().parse(text).unwrap()["worsening"], 4);
    }

    #[test]
    fn domain_violation() {
        let e = FieldSpec::contradiction().parse(r#"{"improving": 40, "worsening": 2}"#).unwrap_err();
        assert!(e.contains("improving"), "{e}");
    }

    #[test]
    fn nested_lists() {
        let spec = FieldSpec::new().field(
            "solutions",
            FieldKind::List(
                FieldSpec::new()
                    .field("principle_index", FieldKind::IntegerIn(vec![2, 39]))
                    .field("title", FieldKind::Text),
            ),
        );
        assert!(spec.parse(r#"{"solutions":[{"principle_index":2,"title":"a"}]}"#).is_ok());
        let e = spec.parse(r#"{"solutions":[{"principle_index":3,"title":"a"}]}"#).unwrap_err();
        assert!(e.contains("solutions[0].principle_index"), "{e}");
        assert!(spec.parse(r#"{"solutions":[]}"#).is_err());
    }

    #[test]
    fn no_object() {
        assert!(extract_json_object("nothing here").is_none());
        assert!(extract_json_object("[1,2]").is_none());
    }
}
