//! The model gateway with a deterministic scripted backend.
//!
//! Every chat call carries a purpose tag, and every call lands in the
//! gateway's transcript with a monotone logical clock — run this twice and
//! the printed digests are identical.

use std::sync::Arc;

use remo::gateway::{ChatRequest, Gateway, Message, Purpose, Role, ScriptTable, ScriptedBackend};

fn main() -> remo::Result<()> {
    let script = ScriptTable::new("I am not sure. #### 9")
        .rule(Purpose::Reasoning, "triangle", "Half of 6 times 4 is 12. #### 12")
        .rule(Purpose::Gradient, "", "The prompt never demands units or checks.");
    let gateway = Gateway::new(Arc::new(ScriptedBackend::new(script)), 4);

    let ask = |purpose: Purpose, text: &str| -> remo::Result<ChatRequest> {
        ChatRequest::new(
            purpose,
            vec![
                Message {
                    role: Role::System,
                    content: "Answer with '#### <number>'.".to_string(),
                },
                Message {
                    role: Role::User,
                    content: text.to_string(),
                },
            ],
        )
    };

    let hit = ask(Purpose::Reasoning, "Area of a triangle with base 6, height 4?")?;
    let miss = ask(Purpose::Reasoning, "What is 3 + 3?")?;
    let gradient = ask(Purpose::Gradient, "Critique the prompt above.")?;

    for request in [&hit, &miss, &gradient] {
        let response = gateway.chat(request)?;
        println!("[{}] -> {:?}", request.purpose, response.content);
    }

    // Embeddings use a hashed token bag: fixed dimension, L2-normalized,
    // and stable across runs.
    let vectors = gateway.embed(&["Area of a triangle with base 6, height 4?"])?;
    println!(
        "embedding: dim={} |v|={:.6}",
        vectors[0].dim(),
        vectors[0].values().iter().map(|x| x * x).sum::<f32>().sqrt()
    );

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("transcript.jsonl");
    let written = gateway.flush_transcript(&path)?;
    println!("transcript: {written} event(s)");
    for event in remo::gateway::read_transcript(&path)? {
        println!("  {}", serde_json::to_string(&event).expect("event is serializable"));
    }
    Ok(())
}
