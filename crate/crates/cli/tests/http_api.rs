use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rmpower::http::{router, ServerConfig};
use rmpower::report::{from_json, to_json, ReportBody};
use rmpower::service::{self, StudyRequest};
use rmpower_core::power::TestKind;
use rmpower_core::rmanova::Source;
use serde_json::Value;
use tower::ServiceExt;

const ONE_GROUP: &str = include_str!("../fixtures/one_group.csv");
const THREE_GROUPS: &str = include_str!("../fixtures/three_groups.csv");

async fn call(method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    call_with(ServerConfig::default(), method, uri, body).await
}

async fn call_with(cfg: ServerConfig, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = router(cfg).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[tokio::test]
async fn health() {
    let (status, body) = call("GET", "/api/health", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body), serde_json::json!({ "status": "ok" }));
}

#[tokio::test]
async fn nsize_for_each_kind() {
    for (kind, n) in [("between", 112), ("within", 24), ("interaction", 32)] {
        let body = format!(r#"{{"kind":"{kind}","g":4,"t":5,"f":0.25,"rho":0.5,"eps":1,"alpha":0.05,"power":0.8}}"#);
        let (status, resp) = call("POST", "/api/nsize", &body).await;
        assert_eq!(status, StatusCode::OK, "{resp}");
        let v = json(&resp);
        assert_eq!(v["n_total"], n, "{kind}");
        assert_eq!(v["schema_version"], 1);
        assert!(v["achieved_power"].as_f64().unwrap() >= 0.8);
    }
}

#[tokio::test]
async fn http_and_direct_call_are_byte_identical() {
    let body = r#"{"kind":"within","g":4,"t":5}"#;
    let (_, resp) = call("POST", "/api/nsize", body).await;
    let direct = service::nsize(&StudyRequest::new(TestKind::Within, 4, 5)).unwrap();
    assert_eq!(resp, to_json(&direct));
}

#[tokio::test]
async fn power_null_case_and_mde() {
    let (status, resp) = call("POST", "/api/power", r#"{"kind":"between","g":4,"t":5,"f":0,"n":40}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert!((json(&resp)["power"].as_f64().unwrap() - 0.05).abs() < 1e-12);

    let (status, resp) = call("POST", "/api/mde", r#"{"kind":"interaction","g":4,"t":5,"n":20}"#).await;
    assert_eq!(status, StatusCode::OK);
    let f = json(&resp)["f"].as_f64().unwrap();
    assert!((f - 0.32).abs() < 0.01, "{f}");
}

#[tokio::test]
async fn anova_three_groups() {
    let (status, resp) = call("POST", "/api/anova?gg=true&hf=true", THREE_GROUPS).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let report = from_json(&resp).unwrap();
    let ReportBody::Anova(a) = report.body else { panic!("not an anova report") };
    let f_of = |s| a.row(s).unwrap().f.unwrap();
    assert!((f_of(Source::Group) - 25.7855).abs() < 1e-3);
    assert!((f_of(Source::Time) - 5.7101).abs() < 1e-3);
    assert!((f_of(Source::GroupByTime) - 5.4581).abs() < 1e-3);
    assert_eq!(a.adjusted.len(), 4);
    assert!(a.sphericity.is_some());
    assert_eq!(a.group_labels, ["left", "right", "complete"]);
}

#[tokio::test]
async fn anova_one_group_with_friedman() {
    let (status, resp) = call("POST", "/api/anova?friedman=true", ONE_GROUP).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let v = json(&resp);
    assert!((v["friedman"]["statistic"].as_f64().unwrap() - 5.5510204).abs() < 1e-6);
    let time = v["rows"].as_array().unwrap().iter().find(|r| r["source"] == "time").unwrap();
    assert!((time["f"].as_f64().unwrap() - 2.0661).abs() < 1e-3);
}

#[tokio::test]
async fn curve_endpoint() {
    let body = r#"{"kind":"between","g":4,"t":5,"f_values":[0.1,0.25,0.4],"n_max":100}"#;
    let (status, resp) = call("POST", "/api/curve", body).await;
    assert_eq!(status, StatusCode::OK);
    let rows = json(&resp)["rows"].as_array().unwrap().len();
    assert_eq!(rows, 3 * ((100 - 8) / 4 + 1));
}

#[tokio::test]
async fn simulate_respects_cap() {
    let cfg = ServerConfig {
        replication_cap: 500,
        ..Default::default()
    };
    let body = r#"{"kind":"within","g":2,"t":3,"f":0.4,"n":20,"reps":400,"seed":7}"#;
    let (status, resp) = call_with(cfg.clone(), "POST", "/api/simulate", body).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let v = json(&resp);
    assert_eq!(v["replications"], 400);
    assert_eq!(v["report"], "simulation");

    let body = r#"{"kind":"within","g":2,"t":3,"f":0.4,"n":20,"reps":501}"#;
    let (status, resp) = call_with(cfg, "POST", "/api/simulate", body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(json(&resp)["error"]["message"].as_str().unwrap().contains("500"));
}

#[tokio::test]
async fn invalid_inputs_are_400() {
    let cases = [
        ("/api/power", r#"{"kind":"between","g":4,"t":5}"#),
        ("/api/power", r#"{"kind":"sideways","g":4,"t":5,"n":40}"#),
        ("/api/power", r#"{"kind":"between","g":4,"t":5,"n":40,"alpha":1.5}"#),
        ("/api/power", r#"{"kind":"between","g":4,"t":5,"n":40,"bogus":1}"#),
        ("/api/nsize", "not json"),
        ("/api/mde", r#"{"kind":"within","g":4,"t":5,"n":3}"#),
        ("/api/curve", r#"{"kind":"between","g":4,"t":5,"f_values":[0.1],"n_min":50,"n_max":10}"#),
        ("/api/anova", ""),
        ("/api/anova", "group,subject,t1,t2\na,1,1,x\n"),
    ];
    for (uri, body) in cases {
        let (status, resp) = call("POST", uri, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri} {body}: {resp}");
        let v = json(&resp);
        assert!(v["error"]["kind"].is_string() && v["error"]["message"].is_string(), "{resp}");
    }
    let (_, resp) = call("POST", "/api/anova", "").await;
    assert_eq!(json(&resp)["error"]["message"], "no data rows");
}

#[tokio::test]
async fn unsatisfiable_is_422() {
    let (status, resp) = call("POST", "/api/nsize", r#"{"kind":"between","g":4,"t":5,"f":0.0001}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{resp}");
    assert_eq!(json(&resp)["error"]["kind"], "unsatisfiable");
}

#[tokio::test]
async fn index_and_ui_dir() {
    let (status, body) = call("GET", "/", "").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.contains("/api/health"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>ui bundle</p>").unwrap();
    let cfg = ServerConfig {
        ui_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let (status, body) = call_with(cfg.clone(), "GET", "/", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "<p>ui bundle</p>");
    let (status, _) = call_with(cfg, "GET", "/api/health", "").await;
    assert_eq!(status, StatusCode::OK);
}
