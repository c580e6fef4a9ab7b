//! Generated OpenAPI corpus: 24 apps with disjoint resource vocabularies and
//! deliberately verbose metadata, plus labeled retrieval queries.

use serde_json::{json, Map, Value};

/// (app id, title, resource nouns). No noun is shared between apps.
const DOMAINS: &[(&str, &str, [&str; 5])] = &[
    ("greenhouse", "Greenhouse Planner", ["seedling", "trellis", "compost", "sprinkler", "pergola"]),
    ("observatory", "Observatory Log", ["telescope", "nebula", "eclipse", "meteor", "constellation"]),
    ("bakery", "Bakery Counter", ["croissant", "baguette", "sourdough", "muffin", "pretzel"]),
    ("aquarium", "Aquarium Keeper", ["coral", "jellyfish", "seahorse", "anemone", "plankton"]),
    ("railway", "Railway Dispatch", ["locomotive", "caboose", "timetable", "turnstile", "carriage"]),
    ("orchestra", "Orchestra Desk", ["violin", "conductor", "symphony", "rehearsal", "metronome"]),
    ("vineyard", "Vineyard Ledger", ["grapevine", "barrel", "harvest", "cellar", "sommelier"]),
    ("archive", "Manuscript Archive", ["manuscript", "librarian", "bookmark", "folio", "scroll"]),
    ("stable", "Riding Stable", ["stallion", "saddle", "bridle", "paddock", "farrier"]),
    ("cycleshop", "Cycle Workshop", ["derailleur", "pedal", "spoke", "handlebar", "sprocket"]),
    ("kitchen", "Kitchen Inventory", ["skillet", "ladle", "spatula", "colander", "whisk"]),
    ("museum", "Museum Registry", ["exhibit", "curator", "sculpture", "artifact", "gallery"]),
    ("alpine", "Alpine Expedition", ["carabiner", "crampon", "summit", "glacier", "sherpa"]),
    ("apiary", "Apiary Monitor", ["hive", "honeycomb", "beeswax", "pollen", "smoker"]),
    ("fishery", "Fishery Manager", ["trawler", "harpoon", "tackle", "lure", "reel"]),
    ("pottery", "Pottery Studio", ["kiln", "glaze", "porcelain", "terracotta", "ceramic"]),
    ("theatre", "Theatre Backstage", ["playwright", "costume", "understudy", "matinee", "spotlight"]),
    ("meteo", "Meteo Station", ["barometer", "hurricane", "anemometer", "rainfall", "forecast"]),
    ("chessclub", "Chess Club", ["gambit", "checkmate", "bishop", "rook", "tournament"]),
    ("dental", "Dental Clinic", ["molar", "toothpaste", "orthodontist", "cavity", "enamel"]),
    ("orbital", "Orbital Station", ["airlock", "spacesuit", "thruster", "satellite", "cosmonaut"]),
    ("circus", "Circus Ring", ["acrobat", "trapeze", "juggler", "clown", "tightrope"]),
    ("perfumery", "Perfumery Lab", ["fragrance", "vanilla", "musk", "atomizer", "distillery"]),
    ("volcano", "Volcano Lab", ["magma", "lava", "caldera", "seismograph", "pumice"]),
];

pub struct CorpusApp {
    pub app_id: String,
    pub document: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledQuery {
    pub query: String,
    pub app_id: String,
    pub tool_id: String,
}

fn plural(noun: &str) -> String {
    match noun.strip_suffix('y') {
        Some(stem) if !stem.ends_with(['a', 'e', 'i', 'o', 'u']) => format!("{stem}ies"),
        _ => format!("{noun}s"),
    }
}

const BOILERPLATE: &str = "This operation is part of the public surface of the service and follows the \
platform conventions for pagination, error envelopes and idempotency. Clients should retry on 503 \
responses with exponential backoff, honour the Retry-After header, and never depend on the order of \
fields in a response object. Deprecated fields are announced at least two releases ahead in the \
changelog and remain readable until removal.";

fn error_responses() -> Value {
    let err = |code: &str, text: &str| {
        json!({"description": text, "content": {"application/json": {
            "schema": {"$ref": "#/components/schemas/Error"},
            "examples": {"sample": {"value": {"code": code, "message": text}}}}}})
    };
    json!({
        "400": err("bad_request", "The request was malformed or failed validation."),
        "401": err("unauthorized", "Credentials were missing or invalid."),
        "404": err("not_found", "No resource matched the identifier."),
        "500": err("internal", "The server failed to process the request."),
    })
}

fn decorate(op: &mut Map<String, Value>, app: &str, key: &str) {
    op.insert("operationId".into(), json!(key));
    op.insert("tags".into(), json!([app, "generated"]));
    op.insert("security".into(), json!([{"apiKey": []}, {"oauth": ["read", "write"]}]));
    op.insert("externalDocs".into(), json!({"url": format!("https://docs.example.com/{app}/{key}"), "description": "Reference"}));
    op.insert("x-rate-limit".into(), json!({"requests": 600, "window": "1m"}));
    op.insert("x-owner".into(), json!({"team": format!("{app}-platform"), "oncall": format!("{app}-oncall@example.com")}));
    let responses = op.entry("responses").or_insert_with(|| json!({}));
    if let (Value::Object(r), Value::Object(e)) = (responses, error_responses()) {
        r.extend(e);
    }
}

fn resource_schema(noun: &str) -> Value {
    json!({
        "type": "object",
        "description": format!("A {noun} record. {BOILERPLATE}"),
        "properties": {
            "id": {"type": "string", "description": format!("Identifier of the {noun}"), "example": format!("{noun}-001")},
            "name": {"type": "string", "example": format!("Primary {noun}")},
            "quantity": {"type": "integer", "example": 3},
            "active": {"type": "boolean"},
            "tags": {"type": "array", "items": {"type": "string"}}
        }
    })
}

fn app_document(app: &str, title: &str, nouns: &[&str; 5]) -> Value {
    let mut paths = Map::new();
    let mut schemas = Map::new();
    schemas.insert(
        "Error".into(),
        json!({"type": "object", "properties": {"code": {"type": "string"}, "message": {"type": "string"}}}),
    );
    for (i, noun) in nouns.iter().enumerate() {
        let many = plural(noun);
        let cap = {
            let mut c = noun.chars();
            c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
        };
        schemas.insert(cap.clone(), resource_schema(noun));
        let item_ref = json!({"$ref": format!("#/components/schemas/{cap}")});

        let mut list = json!({
            "summary": format!("List every {noun} recorded in the {title}"),
            "description": format!("Returns a page of {many}. {BOILERPLATE}"),
            "parameters": [
                {"name": "limit", "in": "query", "schema": {"type": "integer", "minimum": 1, "maximum": 200},
                 "description": "Maximum number of records to return in one page of results; larger values are clamped by the server.",
                 "example": 20},
                {"name": "active", "in": "query", "schema": {"type": "boolean"}, "example": true}
            ],
            "responses": {"200": {"description": "A page of records", "content": {"application/json": {
                "schema": {"type": "object", "properties": {"items": {"type": "array", "items": item_ref.clone()}, "next": {"type": "string"}}},
                "examples": {"first": {"value": {"items": [], "next": null}}}}}}}
        });
        decorate(list.as_object_mut().unwrap(), app, &format!("list_{many}"));

        let mut create = json!({
            "summary": format!("Create a new {noun} entry"),
            "description": format!("Registers one {noun}. {BOILERPLATE}"),
            "requestBody": {"required": true, "content": {"application/json": {
                "schema": {"type": "object", "required": ["name", "quantity"], "properties": {
                    "name": {"type": "string", "description": format!("Display name of the {noun}"), "example": "North"},
                    "quantity": {"type": "integer", "example": 1},
                    "notes": {"type": "string"}}},
                "examples": {"basic": {"value": {"name": "North", "quantity": 1}}}}}},
            "responses": {"201": {"description": "Created", "content": {"application/json": {"schema": item_ref.clone()}}}}
        });
        decorate(create.as_object_mut().unwrap(), app, &format!("create_{noun}"));

        let mut collection = Map::new();
        collection.insert("get".into(), list);
        collection.insert("post".into(), create);
        paths.insert(format!("/{many}"), Value::Object(collection));

        if i < 2 {
            let id_param = format!("{noun}_id");
            let mut get = json!({
                "summary": format!("Fetch a single {noun} by its identifier"),
                "description": format!("Looks one {noun} up. {BOILERPLATE}"),
                "parameters": [{"name": id_param, "in": "path", "required": true, "schema": {"type": "string"},
                                "example": format!("{noun}-001")}],
                "responses": {"200": {"description": "The record", "content": {"application/json": {"schema": item_ref}}}}
            });
            decorate(get.as_object_mut().unwrap(), app, &format!("get_{noun}"));
            paths.insert(format!("/{many}/{{{id_param}}}"), json!({"get": get}));
        }
    }
    json!({
        "openapi": "3.0.3",
        "info": {"title": title, "version": "2.4.1", "description": format!("{title} service. {BOILERPLATE}"),
                 "contact": {"name": "Platform team", "email": "platform@example.com"},
                 "license": {"name": "Proprietary"}, "x-logo": {"url": "https://example.com/logo.png"}},
        "servers": [{"url": format!("https://{app}.example.com/v2"), "description": "production"},
                    {"url": format!("https://{app}.staging.example.com/v2"), "description": "staging"}],
        "security": [{"apiKey": []}],
        "paths": paths,
        "components": {
            "schemas": schemas,
            "securitySchemes": {
                "apiKey": {"type": "apiKey", "in": "header", "name": "X-Api-Key"},
                "oauth": {"type": "oauth2", "flows": {"clientCredentials": {"tokenUrl": "https://auth.example.com/token", "scopes": {"read": "read", "write": "write"}}}}
            }
        }
    })
}

/// Every corpus app with its pretty-printed OpenAPI document.
pub fn corpus_apps() -> Vec<CorpusApp> {
    DOMAINS
        .iter()
        .map(|(app, title, nouns)| CorpusApp {
            app_id: app.to_string(),
            document: serde_json::to_string_pretty(&app_document(app, title, nouns)).expect("document serializes"),
        })
        .collect()
}

/// 100 queries phrased without the operation's own verb, each labeled with
/// the single tool that answers it. Selection walks the corpus with a fixed
/// stride so every app is covered.
pub fn labeled_queries() -> Vec<LabeledQuery> {
    let mut all = Vec::new();
    for (app, _, nouns) in DOMAINS {
        for (i, noun) in nouns.iter().enumerate() {
            let many = plural(noun);
            all.push((app, format!("show me the {many} we have on file"), format!("{app}.list_{many}")));
            all.push((app, format!("add a new {noun} named Maple with quantity 4"), format!("{app}.create_{noun}")));
            if i < 2 {
                all.push((app, format!("look up {noun} number 42 and its details"), format!("{app}.get_{noun}")));
            }
        }
    }
    let n = all.len();
    (0..100)
        .map(|j| {
            let (app, query, tool) = &all[(j * 37) % n];
            LabeledQuery {
                query: query.clone(),
                app_id: app.to_string(),
                tool_id: tool.clone(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn corpus_shape() {
        let apps = corpus_apps();
        assert_eq!(apps.len(), 24);
        let nouns: BTreeSet<&str> = DOMAINS.iter().flat_map(|d| d.2.iter().copied()).collect();
        assert_eq!(nouns.len(), 24 * 5);
        let q = labeled_queries();
        assert_eq!(q.len(), 100);
        assert_eq!(q.iter().map(|x| &x.tool_id).collect::<BTreeSet<_>>().len(), 100);
    }

    #[test]
    fn plurals() {
        assert_eq!(plural("gallery"), "galleries");
        assert_eq!(plural("cavity"), "cavities");
        assert_eq!(plural("whisk"), "whisks");
    }
}
