use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};

use rcf_core::api::EndpointConfig;
use rcf_core::chat::{ChatMessage, ChatRequest};
use rcf_gateway::audit::RequestKey;
use rcf_gateway::ChatClient;

struct Kill(std::process::Child);

impl Drop for Kill {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[tokio::test]
async fn serves_a_script_file() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    std::fs::write(
        &script,
        r#"{"require_token": "sekrit",
            "rules": [{"when": {"contains": "ping"}, "replies": [{"content": "pong"}]}],
            "fallback": [{"status": 503}]}"#,
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_rcf-mock"))
        .args(["--addr", "127.0.0.1:0", "--script"])
        .arg(&script)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let _guard = Kill(child);
    let base = line.trim().strip_prefix("mock listening on ").unwrap().to_string();

    std::env::set_var("RCF_MOCK_BIN_TOKEN", "sekrit");
    let mut config = EndpointConfig::new(base, "m");
    config.api_key_env = Some("RCF_MOCK_BIN_TOKEN".into());
    config.max_retries = 0;
    let client = ChatClient::new(config).unwrap();
    let req = ChatRequest::new(vec![ChatMessage::user("ping")]);
    let done = client.complete(&req, &RequestKey::new("t", "x", 0)).await.unwrap();
    assert_eq!(done.text, "pong");
    let other = ChatRequest::new(vec![ChatMessage::user("hello")]);
    assert!(client.complete(&other, &RequestKey::new("t", "y", 0)).await.is_err());
}
