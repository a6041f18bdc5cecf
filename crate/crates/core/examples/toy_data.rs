//! Write a small synthetic corpus and matching embeddings.
//!
//! ```text
//! cargo run -p shortsim --example toy_data -- <out-dir>
//! ```
//!
//! Produces `corpus.txt` (20 articles of 10 paragraphs) and
//! `embeddings.txt` (word2vec text format, 16 dimensions).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use shortsim::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .ok_or("usage: toy_data <out-dir>")?;
    fs::create_dir_all(&out)?;
    let config = SynthConfig {
        topics: 20,
        paragraphs_per_topic: 10,
        seed: 7,
        ..SynthConfig::default()
    };
    let data = generate(&config);

    // Sentence case and a full stop, which normalization strips again.
    let mut w = BufWriter::new(File::create(out.join("corpus.txt"))?);
    for (a, article) in data.corpus.articles.iter().enumerate() {
        if a > 0 {
            writeln!(w)?;
        }
        for paragraph in article {
            let text: Vec<&str> = paragraph.iter().map(|t| t.as_str()).collect();
            let text = text.join(" ");
            let mut chars = text.chars();
            let first = chars
                .next()
                .map(|c| c.to_uppercase().collect::<String>())
                .unwrap_or_default();
            writeln!(w, "{first}{}.", chars.as_str())?;
        }
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(out.join("embeddings.txt"))?);
    data.embeddings.write_text(&mut w)?;
    w.flush()?;
    Ok(())
}
