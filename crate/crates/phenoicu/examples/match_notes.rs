//! Deterministic lexicon matching over clinical note text.
//!
//! ```bash
//! cargo run --example match_notes
//! ```

use std::io::BufReader;

use phenoicu::annotate::Lexicon;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/lexicon.tsv");
    let file = std::fs::File::open(path).expect("bundled lexicon");
    let lexicon = Lexicon::from_tsv(BufReader::new(file), "bundled").unwrap();
    println!("loaded {} surface forms", lexicon.len());

    let notes = [
        "Pt with persistent HYPOTENSION and drop in blood pressure overnight.",
        "reports chest pain, denies nausea; afebrile",
        "hx of type ii diabetes mellitus, lung mass on imaging",
        "transferred from Spain, no complaints", // no substring match on `pain`
    ];
    for (hour, text) in notes.iter().enumerate() {
        println!("\nnote at hour {hour}: {text}");
        for a in lexicon.match_text(text, hour as u32, &format!("n{hour}")) {
            let (s, e) = a.span.unwrap();
            println!("  {} <- `{}`", a.term, &text[s..e]);
        }
    }
}
