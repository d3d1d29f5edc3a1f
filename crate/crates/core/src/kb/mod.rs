//! Knowledge base, mention dictionaries, prefix tries and co-reference
//! label expansion.

mod base;
mod coref;
mod dict;
mod trie;

pub use base::{EntityRecord, KnowledgeBase};
pub use coref::expand_coreference;
pub use dict::{Candidate, DictOptions, EntityToMentionMap, MentionDict, Stopwords};
pub use trie::{build_entity_trie, NodeId, PrefixTrie};
