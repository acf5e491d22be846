//! Random-action Dubins episodes, written to disk and read back.

use latent_safety::sim::{flatten_states, generate_dataset, read_dataset, write_dataset, DubinsParams};

fn main() -> latent_safety::Result<()> {
    let params = DubinsParams::default();
    let data = generate_dataset(200, &params, 0)?;
    let states = flatten_states(&data);
    let lengths: Vec<usize> = data.iter().map(|t| t.len()).collect();
    println!(
        "{} episodes, {} states, episode length {}..={}",
        data.len(),
        states.len(),
        lengths.iter().min().unwrap(),
        lengths.iter().max().unwrap()
    );

    let mut bytes = Vec::new();
    write_dataset(&mut bytes, &data)?;
    let back = read_dataset(bytes.as_slice())?;
    println!("{} bytes on disk, {} episodes read back", bytes.len(), back.len());
    Ok(())
}
