//! Model container round trip: save, reload, compare predictions bit for bit, and show
//! how damaged files are rejected.
//!
//! cargo run --release --example model_file

use stressnet::data::NormStats;
use stressnet::model::{build_base_model, decode_model, encode_model, model_checksum, CONTAINER_VERSION};
use stressnet::Tensor;

fn main() -> stressnet::Result<()> {
    let model = build_base_model(400, 5)?;
    let stats = NormStats {
        mean: [76.8, 55.0, 352.0],
        std: [10.0, 12.0, 150.0],
    };
    let bytes = encode_model(&model, &stats, None);
    println!("{} bytes, checksum {:08x}", bytes.len(), model_checksum(&model, &stats));

    let file = decode_model(&bytes)?;
    let x = Tensor::from_fn(&[4, 3, 400], |i| ((i * 7919 % 1000) as f32 / 500.0) - 1.0);
    let same = model
        .predict_proba(&x)?
        .iter()
        .zip(file.model.predict_proba(&x)?)
        .all(|(a, b)| a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits()));
    println!("reloaded predictions bit-identical: {same}");

    let mut damaged = bytes.clone();
    damaged[0] = b'X';
    println!("bad magic:   {}", decode_model(&damaged).unwrap_err());
    let mut damaged = bytes.clone();
    damaged[8..12].copy_from_slice(&(CONTAINER_VERSION + 1).to_le_bytes());
    println!("bad version: {}", decode_model(&damaged).unwrap_err());
    let mut damaged = bytes.clone();
    let mid = damaged.len() / 2;
    damaged[mid] ^= 0x40;
    println!("flipped bit: {}", decode_model(&damaged).unwrap_err());
    println!("truncated:   {}", decode_model(&bytes[..bytes.len() / 3]).unwrap_err());
    Ok(())
}
