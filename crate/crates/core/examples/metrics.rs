//! Corpus BLEU-4, CIDEr-D and style compliance on a few captions.

use promptcap::corpus::{EmotionLexicon, Style};
use promptcap::metrics::{bleu4, cider, style_compliance};
use promptcap::tokenizer::tokenize;

fn main() -> promptcap::Result<()> {
    let cands = ["a red dog sits on a blue bench .", "a cat is near a small tree ."].map(tokenize);
    let refs = vec![
        vec![tokenize("a red dog is on a blue bench ."), tokenize("a red dog sits on the bench .")],
        vec![tokenize("a cat sits near a tree ."), tokenize("a small cat is near a small tree .")],
    ];
    println!("BLEU-4  {:.4}", bleu4(&cands, &refs)?);
    let c = cider(&cands, &refs)?;
    println!("CIDEr-D {:.4} per item {:?}", c.corpus, c.items);

    let decodes = [
        (Style::Short, tokenize("a red cube .")),
        (Style::Positive, tokenize("a happy dog near a tree .")),
        (Style::Negative, tokenize("a happy dog near an ugly tree .")),
    ];
    let report = style_compliance(
        decodes.iter().map(|(s, t)| (*s, t.as_slice(), None)),
        &EmotionLexicon::default(),
    );
    for (style, t) in &report.styles {
        println!("{:>9}  compliant {}/{}  contaminated {}", style.tag(), t.compliant, t.scored, t.contaminated);
    }
    Ok(())
}
