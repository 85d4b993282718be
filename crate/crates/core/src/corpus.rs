//! Text bundled with the crate.

/// Handwritten cover sentences, one per line, each at least ten words.
pub const DESK_CORPUS: &str = include_str!("../data/desk_corpus.txt");

/// Additional sentences over the same vocabulary, used only to pretrain the
/// default model.
pub const PRETRAIN_CORPUS: &str = include_str!("../data/pretrain_corpus.txt");

/// Non-empty lines of `text`.
pub fn lines(text: &str) -> Vec<&str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// The first `n` desk sentences joined into one cover text.
pub fn desk_cover(n: usize) -> String {
    lines(DESK_CORPUS).into_iter().take(n).collect::<Vec<_>>().join(" ")
}
