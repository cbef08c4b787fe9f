//! Drive the remote answerer against a toy in-process HTTP server
//! that plays the role of a vision-language model. The server stores
//! the scenes by image_ref and answers each tagged prompt by running
//! the deterministic evaluator, so both classification modes come
//! back exactly right.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use logicls::aggregate::{check_holds, classify_with_program};
use logicls::answer::{end2end_classify, render_tagged, Answerer, RemoteAnswerer, RemoteConfig};
use logicls::compile::describe_rule;
use logicls::eval::{evaluate, Answer};
use logicls::generate::generate_scene;
use logicls::scene::Scene;
use logicls::{compile, parse, ScenarioSpec, SubqueryProgram, UnanswerablePolicy};

struct ModelServer {
    spec: ScenarioSpec,
    program: SubqueryProgram,
    scenes: BTreeMap<String, Scene>,
}

impl ModelServer {
    /// Tagged response for one wire request, or None when the prompt
    /// matches nothing we know.
    fn respond(&self, request: &serde_json::Value) -> Option<String> {
        let prompt = request["subquery"].as_str()?;
        let scene = self.scenes.get(request["test_image_ref"].as_str()?)?;
        if prompt.contains("Is the rule satisfied?") {
            let constraint = self
                .spec
                .constraints
                .iter()
                .find(|c| prompt.contains(&describe_rule(&c.rule)))?;
            let holds = self.program.for_constraint(&constraint.id).iter().all(|sq| {
                match evaluate(scene, sq) {
                    Answer::Value(v) => check_holds(&sq.check, &v),
                    Answer::Unanswerable { .. } => false,
                }
            });
            return Some(render_tagged(
                "checked the whole rule against the image",
                if holds { "yes" } else { "no" },
            ));
        }
        let sq = self
            .program
            .subqueries
            .iter()
            .find(|sq| prompt.contains(&sq.question_text))?;
        let text = match evaluate(scene, sq) {
            Answer::Value(v) => v.to_string(),
            Answer::Unanswerable { .. } => "unanswerable".into(),
        };
        Some(render_tagged("looked at the relevant objects", &text))
    }
}

fn serve(server: ModelServer) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let url = format!("http://{}", listener.local_addr().unwrap());
    let server = Arc::new(server);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let server = server.clone();
            std::thread::spawn(move || handle(stream, &server));
        }
    });
    url
}

fn handle(mut stream: TcpStream, server: &ModelServer) {
    let Some(body) = read_body(&mut stream) else {
        return;
    };
    let request: serde_json::Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(_) => return,
    };
    let (status, payload) = match server.respond(&request) {
        Some(tagged) => (
            "200 OK",
            serde_json::json!({ "text": tagged, "perplexity": 1.0 }).to_string(),
        ),
        None => ("404 Not Found", String::new()),
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
        payload.len()
    );
}

fn read_body(stream: &mut TcpStream) -> Option<Vec<u8>> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
    let length: usize = headers
        .lines()
        .find_map(|l| l.strip_prefix("content-length:"))
        .and_then(|v| v.trim().parse().ok())?;
    let mut body = buf[header_end..].to_vec();
    while body.len() < length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    body.truncate(length);
    Some(body)
}

fn main() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/pushpins.lcs"
    ))
    .expect("scenario file");
    let spec = parse(&text).expect("parse");
    let program = compile(&spec).expect("compile");

    let exemplar = generate_scene(&spec, &BTreeSet::new(), 1).expect("exemplar");
    let injected = BTreeSet::from(["missing_pushpin".to_string()]);
    let scene = generate_scene(&spec, &injected, 2).expect("scene");

    let url = serve(ModelServer {
        spec: spec.clone(),
        program: program.clone(),
        scenes: BTreeMap::from([
            (exemplar.image_ref.clone(), exemplar.clone()),
            (scene.image_ref.clone(), scene.clone()),
        ]),
    });
    println!("toy model server at {url}");

    let remote = RemoteAnswerer::new(&url, exemplar, RemoteConfig::default());

    // One raw exchange.
    let sq = &program.subqueries[0];
    let record = remote.answer(&scene, sq).expect("answer");
    println!("\nQ: {}", sq.question_text);
    println!("A: {} (cot: {}, ppl {})", record.value, record.cot_text, record.perplexity);

    // Decomposed: one wire call per subquery, verdict from the checks.
    let decomposed =
        classify_with_program(&scene, &program, &remote, UnanswerablePolicy::Strict)
            .expect("classify");
    let labels: Vec<&str> = decomposed.labels.labels().collect();
    println!("\ndecomposed verdict: {{{}}}", labels.join(", "));

    // End-to-end: one yes/no question per whole constraint.
    let end2end = end2end_classify(&remote, &spec, &scene).expect("end2end");
    let labels: Vec<&str> = end2end.labels.labels().collect();
    println!("end-to-end verdict: {{{}}}", labels.join(", "));

    let gold = scene.gold_labels.as_ref().unwrap();
    assert_eq!(&decomposed.labels, gold);
    assert_eq!(&end2end.labels, gold);
    println!("both modes agree with gold");
}
