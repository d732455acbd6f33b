//! Generates a small synthetic corpus and prints one caption per style.

use promptcap::corpus::{build_corpus, CorpusConfig, Style};

fn main() -> promptcap::Result<()> {
    let corpus = build_corpus(&CorpusConfig::default().scaled(0.05))?;
    print!("{}", corpus.manifest.to_text());
    for style in Style::ALL {
        if let Some(r) = corpus.train.iter().find(|r| r.style == style) {
            println!("{:>9}  {}", style.tag(), r.caption.join(" "));
        }
    }
    let vocab = corpus.vocabulary()?;
    println!("vocabulary: {} tokens", vocab.len());
    let ids = vocab.encode("A red cube on the table.");
    println!("encode -> {ids:?} -> {:?}", vocab.decode(&ids)?);
    Ok(())
}
