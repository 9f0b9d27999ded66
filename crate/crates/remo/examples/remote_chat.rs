//! One real chat call through the OpenAI-compatible remote backend.
//!
//! Needs credentials, so it is gated: without REMO_API_KEY in the
//! environment it prints SKIPPED and exits cleanly. Override the endpoint
//! and model with REMO_BASE_URL and REMO_MODEL for other providers.

use std::sync::Arc;

use remo::gateway::{ChatRequest, Gateway, Message, Purpose, RemoteBackend, RemoteConfig, Role};

fn main() -> remo::Result<()> {
    let api_key = match std::env::var("REMO_API_KEY") {
        Ok(key) if !key.is_empty() => key,
        _ => {
            println!("SKIPPED: REMO_API_KEY is not set");
            return Ok(());
        }
    };
    let base_url = std::env::var("REMO_BASE_URL")
        .unwrap_or_else(|_| "https://api.openai.com/v1".to_string());
    let model = std::env::var("REMO_MODEL").unwrap_or_else(|_| "gpt-4o-mini".to_string());

    let mut config = RemoteConfig::new(base_url, model, api_key);
    config.retry_limit = 2;
    config.timeout_secs = 60;
    let gateway = Gateway::new(Arc::new(RemoteBackend::new(config)?), 2);

    let request = ChatRequest::new(
        Purpose::Reasoning,
        vec![
            Message {
                role: Role::System,
                content: "Answer with the final number after '####'.".to_string(),
            },
            Message {
                role: Role::User,
                content: "A crate holds 12 boxes of 6 eggs. How many eggs in 3 crates?"
                    .to_string(),
            },
        ],
    )?;
    let response = gateway.chat(&request)?;
    println!("model said: {}", response.content);
    println!(
        "extracted answer: {}",
        remo::reasoner::extract_answer(&response.content)
    );
    println!(
        "usage: {} prompt + {} completion tokens, {} ms",
        response.usage.prompt_tokens, response.usage.completion_tokens, response.latency_ms
    );
    Ok(())
}
