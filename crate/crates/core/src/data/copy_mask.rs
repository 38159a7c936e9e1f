use super::{Sentence, Vocabulary, COMPONENT_SEP_ID, EOS_ID, TUPLE_SEP_ID, UNK_ID};

/// Vocabulary positions the word decoder may emit for `sentence`:
/// in-vocabulary source tokens, every relation name, both separators,
/// `<UNK>` and `<EOS>`. `<SOS>` is never kept.
pub fn build_copy_mask(sentence: &Sentence, vocab: &Vocabulary) -> Vec<bool> {
    let mut keep = vec![false; vocab.word_count()];
    for tok in &sentence.tokens {
        if let Some(id) = vocab.lookup_word(tok) {
            keep[id] = true;
        }
    }
    for id in vocab.relation_word_ids() {
        keep[id] = true;
    }
    for id in [COMPONENT_SEP_ID, TUPLE_SEP_ID, UNK_ID, EOS_ID] {
        keep[id] = true;
    }
    keep[super::SOS_ID] = false;
    keep
}
