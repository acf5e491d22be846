//! Drives a teleoperation session in process and then over NDJSON on a local socket.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use latent_safety::conformal::{build_calibration_set, ScoreCache};
use latent_safety::hj_rl::{train_filter, FilterTrainConfig};
use latent_safety::latent::{Encoder, EncoderConfig, SimilarityModel};
use latent_safety::sim::{flatten_states, generate_dataset, DubinsParams};
use latent_safety::teleop::{serve, ServiceArtifacts, TeleopSession, Transport};

fn main() -> latent_safety::Result<()> {
    let params = DubinsParams::default();
    let enc = Arc::new(Encoder::new(EncoderConfig::default()));
    let data = generate_dataset(200, &params, 0)?;
    let cfg = FilterTrainConfig {
        hidden: vec![32],
        steps: 300,
        ..Default::default()
    };
    let (nets, _) = train_filter(&data, Arc::clone(&enc), params, SimilarityModel::Raw, &cfg)?;
    let held = flatten_states(&generate_dataset(100, &params, 99)?);
    let pairs = build_calibration_set(&held, &enc, 10_000, 0.5, 3)?;
    let cache = ScoreCache::build(&pairs, &SimilarityModel::Raw, &[0.3, 0.4, 0.5])?;
    let shared = Arc::new(ServiceArtifacts::new(enc, params, nets, cache));

    let script = [
        r#"{"type":"reset","seed":1,"start":[-1.0,0.0,0.0]}"#,
        r#"{"type":"set_constraint","x":0.3,"y":0.0}"#,
        r#"{"type":"action","omega":0.0}"#,
        r#"{"type":"action","omega":0.0}"#,
        r#"{"type":"set_epsilon","epsilon":0.4}"#,
        r#"{"type":"heatmap","theta":0.0,"resolution":2}"#,
    ];
    let mut local = TeleopSession::new(Arc::clone(&shared))?;
    for line in script {
        println!("> {line}\n< {}", local.handle_line(line));
    }

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || serve(listener, shared, Transport::Ndjson));
    let mut stream = TcpStream::connect(addr)?;
    for line in script {
        writeln!(stream, "{line}")?;
    }
    let replies: Vec<String> = BufReader::new(stream).lines().take(script.len()).collect::<Result<_, _>>()?;
    println!("{} replies over {addr}", replies.len());
    Ok(())
}
