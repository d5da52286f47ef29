//! Sparse feature templates over game attributes and manual text.
//!
//! Every feature id is arithmetic: a template offset plus a mixed-radix index over the
//! interned words, part-of-speech tags, dependency labels and game attribute codes that
//! instantiate it. The id space is fixed once a [`FeatureSpace`] is built, and every id
//! decodes back to its `template|field=value|...` description.
//!
//! Three families share the id space: relevance features of a sentence for a candidate
//! action, predicate features of one labeled word, and action-value features of the
//! candidate combined with the selected, labeled sentence.

mod sparse;
mod view;

use std::fmt::Write as _;
use std::sync::Arc;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::corpus::{Document, Label, SeedVocabulary, Sentence};
use crate::simulator::{Production, Verb};

pub use sparse::{FeatureId, SparseVector};
pub use view::{
    neighborhood_attrs, tile_attrs, ActorContext, ActorKind, Attr, AttrSet, AttributeView,
    NationSummary, NUMERIC_COUNT, NUMERIC_NAMES,
};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("word {0:?} is not in the feature space")]
    UnknownSymbol(String),
    #[error("token index {index} out of range for sentence of length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error("labeling has {labels} labels for {tokens} tokens")]
    ShapeMismatch { labels: usize, tokens: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Relevance,
    Predicate,
    Value,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Relevance, Family::Predicate, Family::Value];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Word,
    ParentWord,
    Pos,
    ParentPos,
    Dep,
    Label,
    TextLabel,
    Unit,
    Action,
    Tile,
    Attr,
    Slot,
    Producing,
}

impl Field {
    fn key(self) -> &'static str {
        match self {
            Field::Word => "w",
            Field::ParentWord => "parent",
            Field::Pos => "pos",
            Field::ParentPos => "parent_pos",
            Field::Dep => "dep",
            Field::Label | Field::TextLabel => "label",
            Field::Unit => "unit",
            Field::Action => "action",
            Field::Tile => "tile",
            Field::Attr => "attr",
            Field::Slot => "attr",
            Field::Producing => "producing",
        }
    }
}

struct TemplateDef {
    name: &'static str,
    family: Family,
    fields: &'static [Field],
}

const fn tpl(name: &'static str, family: Family, fields: &'static [Field]) -> TemplateDef {
    TemplateDef {
        name,
        family,
        fields,
    }
}

use Family::{Predicate as PRD, Relevance as REL, Value as VAL};
use Field as F;

const TEMPLATES: [TemplateDef; 30] = [
    tpl("rel.word", REL, &[F::Word]),
    tpl("rel.overlap", REL, &[]),
    tpl("rel.unit_word", REL, &[F::Unit, F::Word]),
    tpl("rel.action_word", REL, &[F::Action, F::Word]),
    tpl("rel.action_tile_word", REL, &[F::Action, F::Tile, F::Word]),
    tpl("lab.word", PRD, &[F::Label, F::Word]),
    tpl("lab.pos", PRD, &[F::Label, F::Pos]),
    tpl("lab.parent_word", PRD, &[F::Label, F::ParentWord]),
    tpl("lab.dep", PRD, &[F::Label, F::Dep]),
    tpl("lab.parent_pos", PRD, &[F::Label, F::ParentPos]),
    tpl("lab.leaf", PRD, &[F::Label]),
    tpl("lab.non_leaf", PRD, &[F::Label]),
    tpl("lab.matches_state_attr", PRD, &[F::Label]),
    tpl("lab.matches_unit_name", PRD, &[F::Label]),
    tpl("lab.matches_action_name", PRD, &[F::Label]),
    tpl("lab.word_parent", PRD, &[F::Label, F::Word, F::ParentWord]),
    tpl("g.bias", VAL, &[]),
    tpl("g.numeric", VAL, &[F::Slot]),
    tpl("g.action_unit", VAL, &[F::Unit, F::Action]),
    tpl("g.unit", VAL, &[F::Unit]),
    tpl("g.neighborhood", VAL, &[F::Attr]),
    tpl("g.producing", VAL, &[F::Producing]),
    tpl("t.word_action", VAL, &[F::Word, F::Action]),
    tpl("t.word_label_action", VAL, &[F::Word, F::TextLabel, F::Action]),
    tpl("t.word_unit_action", VAL, &[F::Word, F::Unit, F::Action]),
    tpl("t.word_label_unit_action", VAL, &[F::Word, F::TextLabel, F::Unit, F::Action]),
    tpl("t.word_unit", VAL, &[F::Word, F::Unit]),
    tpl("t.word_label_unit", VAL, &[F::Word, F::TextLabel, F::Unit]),
    tpl("t.word_attr", VAL, &[F::Word, F::Attr]),
    tpl("t.word_label_attr", VAL, &[F::Word, F::TextLabel, F::Attr]),
];

const REL_WORD: usize = 0;
const REL_OVERLAP: usize = 1;
const REL_UNIT_WORD: usize = 2;
const REL_ACTION_WORD: usize = 3;
const REL_ACTION_TILE_WORD: usize = 4;
const LAB_WORD: usize = 5;
const LAB_POS: usize = 6;
const LAB_PARENT_WORD: usize = 7;
const LAB_DEP: usize = 8;
const LAB_PARENT_POS: usize = 9;
const LAB_LEAF: usize = 10;
const LAB_NON_LEAF: usize = 11;
const LAB_STATE_ATTR: usize = 12;
const LAB_UNIT_NAME: usize = 13;
const LAB_ACTION_NAME: usize = 14;
const LAB_WORD_PARENT: usize = 15;
const G_BIAS: usize = 16;
const G_NUMERIC: usize = 17;
const G_ACTION_UNIT: usize = 18;
const G_UNIT: usize = 19;
const G_NEIGHBORHOOD: usize = 20;
const G_PRODUCING: usize = 21;
const T_WORD_ACTION: usize = 22;
const T_WORD_LABEL_ACTION: usize = 23;
const T_WORD_UNIT_ACTION: usize = 24;
const T_WORD_LABEL_UNIT_ACTION: usize = 25;
const T_WORD_UNIT: usize = 26;
const T_WORD_LABEL_UNIT: usize = 27;
const T_WORD_ATTR: usize = 28;
const T_WORD_LABEL_ATTR: usize = 29;

/// Placeholder parent word and tag of the root token.
pub const ROOT_SYMBOL: &str = "<root>";

const PRODUCTIONS: [Production; 4] = [
    Production::Settler,
    Production::Worker,
    Production::Warrior,
    Production::Nothing,
];

fn production_index(p: Production) -> u32 {
    PRODUCTIONS.iter().position(|q| *q == p).unwrap() as u32
}

/// Which predicate templates are active; the dependency ablations switch some off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PsiMask {
    pub dependency_label: bool,
    pub parent_pos: bool,
    pub parent_word: bool,
    pub tree_shape: bool,
}

impl Default for PsiMask {
    fn default() -> Self {
        PsiMask::ALL
    }
}

impl PsiMask {
    pub const ALL: PsiMask = PsiMask {
        dependency_label: true,
        parent_pos: true,
        parent_word: true,
        tree_shape: true,
    };
    pub const NO_DEPENDENCY_INFO: PsiMask = PsiMask {
        dependency_label: false,
        parent_pos: false,
        parent_word: false,
        tree_shape: false,
    };
    pub const NO_DEPENDENCY_LABEL: PsiMask = PsiMask {
        dependency_label: false,
        ..PsiMask::ALL
    };
    pub const NO_PARENT_POS: PsiMask = PsiMask {
        parent_pos: false,
        ..PsiMask::ALL
    };
    pub const NO_PARENT_WORD: PsiMask = PsiMask {
        parent_word: false,
        ..PsiMask::ALL
    };
}

#[derive(Debug, Clone, Default)]
struct Interner {
    names: Vec<String>,
    ids: FxHashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }

    fn get(&self, s: &str) -> Option<u32> {
        self.ids.get(s).copied()
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

const MATCH_STATE: u8 = 1;
const MATCH_UNIT: u8 = 2;
const MATCH_ACTION: u8 = 4;

/// A sentence with every symbol resolved against a [`FeatureSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSentence {
    pub words: Vec<u32>,
    pub pos: Vec<u32>,
    pub deps: Vec<u32>,
    pub parent_words: Vec<u32>,
    pub parent_pos: Vec<u32>,
    pub leaf: Vec<bool>,
    matches: Vec<u8>,
    /// Distinct words in first-occurrence order.
    pub distinct: Vec<u32>,
    /// Token counts per seed-vocabulary label word, as (label bit, count).
    label_counts: Vec<(u8, u32)>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Tokens whose word is one of the label words selected by `mask`.
    pub fn overlap(&self, mask: u64) -> u32 {
        self.label_counts
            .iter()
            .filter(|(bit, _)| mask & (1u64 << bit) != 0)
            .map(|(_, c)| *c)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncodedDocument {
    pub sentences: Vec<EncodedSentence>,
}

impl EncodedDocument {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Interned symbols, seed-vocabulary lookups and the template id layout.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    words: Interner,
    pos: Interner,
    deps: Interner,
    offsets: Vec<u32>,
    radices: Vec<Vec<u32>>,
    family_ranges: [(u32, u32); 3],
    vocab_enabled: bool,
    label_bits: FxHashMap<u32, u8>,
    word_matches: FxHashMap<u32, u8>,
    unit_bits: [u64; ActorKind::COUNT],
    action_bits: [u64; Verb::COUNT],
    attr_bits: [u64; Attr::COUNT],
}

impl FeatureSpace {
    /// Interns every symbol of `docs` and of the vocabulary. Building from the same
    /// documents in the same order always yields the same ids.
    pub fn build(docs: &[&Document], vocab: &SeedVocabulary) -> FeatureSpace {
        let mut words = Interner::default();
        let mut pos = Interner::default();
        let mut deps = Interner::default();
        words.intern(ROOT_SYMBOL);
        pos.intern(ROOT_SYMBOL);
        for doc in docs {
            for t in doc.sentences.iter().flat_map(|s| &s.tokens) {
                words.intern(&t.word);
                pos.intern(&t.pos);
                deps.intern(&t.dep_label);
            }
        }
        let mut label_bits: FxHashMap<u32, u8> = FxHashMap::default();
        let mut word_matches: FxHashMap<u32, u8> = FxHashMap::default();
        let mut bit_of = |w: &str, words: &mut Interner| -> u64 {
            let id = words.intern(w);
            let next = label_bits.len() as u8;
            let bit = *label_bits.entry(id).or_insert(next);
            assert!(bit < 64, "too many distinct label words");
            1u64 << bit
        };
        let mut unit_bits = [0u64; ActorKind::COUNT];
        let mut action_bits = [0u64; Verb::COUNT];
        let mut attr_bits = [0u64; Attr::COUNT];
        for (key, word) in vocab.entries() {
            let m = bit_of(word, &mut words);
            let id = words.get(word).unwrap();
            if let Some(rest) = key.strip_prefix("unit.") {
                *word_matches.entry(id).or_default() |= MATCH_UNIT;
                if let Some(a) = ActorKind::ALL.iter().find(|a| a.name() == rest) {
                    unit_bits[a.index()] |= m;
                }
            } else if let Some(rest) = key.strip_prefix("action.") {
                *word_matches.entry(id).or_default() |= MATCH_ACTION;
                if let Some(v) = Verb::from_name(rest) {
                    action_bits[v.ordinal()] |= m;
                }
            } else if let Some(rest) = key.strip_prefix("attr.") {
                *word_matches.entry(id).or_default() |= MATCH_STATE;
                if let Some(a) = Attr::ALL.iter().find(|a| a.name() == rest) {
                    attr_bits[a.index()] |= m;
                }
            }
        }
        let mut space = FeatureSpace {
            words,
            pos,
            deps,
            offsets: Vec::new(),
            radices: Vec::new(),
            family_ranges: [(0, 0); 3],
            vocab_enabled: !vocab.is_empty(),
            label_bits,
            word_matches,
            unit_bits,
            action_bits,
            attr_bits,
        };
        space.layout();
        space
    }

    fn radix(&self, f: Field) -> u32 {
        (match f {
            Field::Word | Field::ParentWord => self.words.len(),
            Field::Pos | Field::ParentPos => self.pos.len(),
            Field::Dep => self.deps.len().max(1),
            Field::Label => 3,
            Field::TextLabel => 2,
            Field::Unit => ActorKind::COUNT,
            Field::Action => Verb::COUNT,
            Field::Tile | Field::Attr => Attr::COUNT,
            Field::Slot => NUMERIC_COUNT,
            Field::Producing => PRODUCTIONS.len(),
        }) as u32
    }

    fn layout(&mut self) {
        let mut next = 0u32;
        for fam in Family::ALL {
            let start = next;
            for (t, def) in TEMPLATES.iter().enumerate() {
                if def.family != fam {
                    continue;
                }
                debug_assert_eq!(self.offsets.len(), t);
                let radices: Vec<u32> = def.fields.iter().map(|f| self.radix(*f)).collect();
                let size: u64 = radices.iter().map(|r| *r as u64).product();
                self.offsets.push(next);
                self.radices.push(radices);
                next = u32::try_from(next as u64 + size).expect("feature space exceeds u32");
            }
            self.family_ranges[fam.index()] = (start, next);
        }
    }

    /// Half-open id range of a family.
    pub fn family_range(&self, fam: Family) -> (u32, u32) {
        self.family_ranges[fam.index()]
    }

    pub fn family_size(&self, fam: Family) -> usize {
        let (a, b) = self.family_range(fam);
        (b - a) as usize
    }

    pub fn family_of(&self, id: FeatureId) -> Family {
        Family::ALL
            .into_iter()
            .find(|f| {
                let (a, b) = self.family_range(*f);
                id.0 >= a && id.0 < b
            })
            .expect("feature id out of range")
    }

    pub fn total_size(&self) -> usize {
        self.family_ranges[2].1 as usize
    }

    pub fn vocab_enabled(&self) -> bool {
        self.vocab_enabled
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn word_id(&self, w: &str) -> Option<u32> {
        self.words.get(w)
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words.names[id as usize]
    }

    #[inline]
    fn id(&self, t: usize, vals: &[u32]) -> FeatureId {
        let r = &self.radices[t];
        let mut idx = 0u32;
        for (v, radix) in vals.iter().zip(r) {
            debug_assert!(v < radix);
            idx = idx * radix + v;
        }
        FeatureId(self.offsets[t] + idx)
    }

    /// Human-readable `template|field=value|...` form of an id.
    pub fn describe(&self, id: FeatureId) -> String {
        let Some(t) = self.offsets.iter().rposition(|o| *o <= id.0) else {
            return format!("unknown|{}", id.0);
        };
        let def = &TEMPLATES[t];
        let mut rem = id.0 - self.offsets[t];
        let mut vals = vec![0u32; def.fields.len()];
        for (i, radix) in self.radices[t].iter().enumerate().rev() {
            vals[i] = rem % radix;
            rem /= radix;
        }
        let mut out = def.name.to_string();
        for (f, v) in def.fields.iter().zip(vals) {
            let _ = write!(out, "|{}={}", f.key(), self.value_name(*f, v));
        }
        out
    }

    fn value_name(&self, f: Field, v: u32) -> String {
        let v = v as usize;
        match f {
            Field::Word | Field::ParentWord => self.words.names[v].clone(),
            Field::Pos | Field::ParentPos => self.pos.names[v].clone(),
            Field::Dep => self.deps.names.get(v).cloned().unwrap_or_default(),
            Field::Label => Label::ALL[v].code().to_string(),
            Field::TextLabel => Label::ALL[v].code().to_string(),
            Field::Unit => ActorKind::ALL[v].name().to_string(),
            Field::Action => Verb::ALL[v].name().to_string(),
            Field::Tile | Field::Attr => Attr::ALL[v].name().to_string(),
            Field::Slot => NUMERIC_NAMES[v].to_string(),
            Field::Producing => PRODUCTIONS[v].name().to_string(),
        }
    }

    pub fn encode_sentence(&self, s: &Sentence) -> Result<EncodedSentence, FeatureError> {
        let lookup = |table: &Interner, x: &str| {
            table
                .get(x)
                .ok_or_else(|| FeatureError::UnknownSymbol(x.to_string()))
        };
        let n = s.len();
        let mut enc = EncodedSentence {
            words: Vec::with_capacity(n),
            pos: Vec::with_capacity(n),
            deps: Vec::with_capacity(n),
            parent_words: Vec::with_capacity(n),
            parent_pos: Vec::with_capacity(n),
            leaf: vec![true; n],
            matches: Vec::with_capacity(n),
            distinct: Vec::new(),
            label_counts: Vec::new(),
        };
        for t in &s.tokens {
            let w = lookup(&self.words, &t.word)?;
            enc.words.push(w);
            enc.pos.push(lookup(&self.pos, &t.pos)?);
            enc.deps.push(lookup(&self.deps, &t.dep_label)?);
            enc.matches.push(self.word_matches.get(&w).copied().unwrap_or(0));
            if !enc.distinct.contains(&w) {
                enc.distinct.push(w);
            }
            if let Some(&bit) = self.label_bits.get(&w) {
                match enc.label_counts.iter_mut().find(|(b, _)| *b == bit) {
                    Some((_, c)) => *c += 1,
                    None => enc.label_counts.push((bit, 1)),
                }
            }
        }
        for t in &s.tokens {
            if t.head >= 0 {
                let h = t.head as usize;
                enc.leaf[h] = false;
                enc.parent_words.push(enc.words[h]);
                enc.parent_pos.push(enc.pos[h]);
            } else {
                enc.parent_words.push(0);
                enc.parent_pos.push(0);
            }
        }
        Ok(enc)
    }

    pub fn encode_document(&self, doc: &Document) -> Result<EncodedDocument, FeatureError> {
        Ok(EncodedDocument {
            sentences: doc
                .sentences
                .iter()
                .map(|s| self.encode_sentence(s))
                .collect::<Result<_, _>>()?,
        })
    }

    /// Label-word bits of the unit, the neighborhood and the action of a view.
    pub fn view_label_mask(&self, view: &AttributeView) -> u64 {
        let mut m = self.unit_bits[view.actor.index()] | self.action_bits[view.verb.ordinal()];
        for a in view.neighborhood.iter() {
            m |= self.attr_bits[a.index()];
        }
        m
    }

    /// Relevance features of a sentence for a candidate action.
    pub fn phi_relevance(&self, s: &EncodedSentence, view: &AttributeView) -> SparseVector {
        let mut out = SparseVector::with_capacity(s.distinct.len() * (3 + view.tile.len()) + 1);
        let unit = view.actor.index() as u32;
        let action = view.verb.ordinal() as u32;
        for &w in &s.distinct {
            out.push(self.id(REL_WORD, &[w]), 1.0);
        }
        if self.vocab_enabled {
            let overlap = s.overlap(self.view_label_mask(view));
            out.push(self.id(REL_OVERLAP, &[]), overlap as f64);
        }
        for &w in &s.distinct {
            out.push(self.id(REL_UNIT_WORD, &[unit, w]), 1.0);
        }
        for &w in &s.distinct {
            out.push(self.id(REL_ACTION_WORD, &[action, w]), 1.0);
        }
        for t in view.tile.iter() {
            for &w in &s.distinct {
                out.push(
                    self.id(REL_ACTION_TILE_WORD, &[action, t.index() as u32, w]),
                    1.0,
                );
            }
        }
        out
    }

    /// Ids of the relevance features split by how they depend on the view; used by the
    /// cached scorer in the search loop.
    pub fn rel_word_id(&self, w: u32) -> FeatureId {
        self.id(REL_WORD, &[w])
    }

    pub fn rel_unit_word_id(&self, unit: ActorKind, w: u32) -> FeatureId {
        self.id(REL_UNIT_WORD, &[unit.index() as u32, w])
    }

    pub fn rel_action_word_id(&self, verb: Verb, w: u32) -> FeatureId {
        self.id(REL_ACTION_WORD, &[verb.ordinal() as u32, w])
    }

    pub fn rel_action_tile_word_id(&self, verb: Verb, tile: Attr, w: u32) -> FeatureId {
        self.id(
            REL_ACTION_TILE_WORD,
            &[verb.ordinal() as u32, tile.index() as u32, w],
        )
    }

    pub fn rel_overlap_id(&self) -> FeatureId {
        self.id(REL_OVERLAP, &[])
    }

    /// Predicate features of token `index` carrying `label`.
    pub fn psi_predicate(
        &self,
        label: Label,
        index: usize,
        s: &EncodedSentence,
        mask: PsiMask,
    ) -> Result<SparseVector, FeatureError> {
        if index >= s.len() {
            return Err(FeatureError::OutOfRange {
                index,
                len: s.len(),
            });
        }
        let mut out = SparseVector::with_capacity(11);
        self.psi_into(label, index, s, mask, &mut out);
        Ok(out)
    }

    fn psi_into(
        &self,
        label: Label,
        j: usize,
        s: &EncodedSentence,
        mask: PsiMask,
        out: &mut SparseVector,
    ) {
        let l = label.index() as u32;
        out.push(self.id(LAB_WORD, &[l, s.words[j]]), 1.0);
        out.push(self.id(LAB_POS, &[l, s.pos[j]]), 1.0);
        if mask.parent_word {
            out.push(self.id(LAB_PARENT_WORD, &[l, s.parent_words[j]]), 1.0);
        }
        if mask.dependency_label {
            out.push(self.id(LAB_DEP, &[l, s.deps[j]]), 1.0);
        }
        if mask.parent_pos {
            out.push(self.id(LAB_PARENT_POS, &[l, s.parent_pos[j]]), 1.0);
        }
        if mask.tree_shape {
            let t = if s.leaf[j] { LAB_LEAF } else { LAB_NON_LEAF };
            out.push(self.id(t, &[l]), 1.0);
        }
        let m = s.matches[j];
        if m & MATCH_STATE != 0 {
            out.push(self.id(LAB_STATE_ATTR, &[l]), 1.0);
        }
        if m & MATCH_UNIT != 0 {
            out.push(self.id(LAB_UNIT_NAME, &[l]), 1.0);
        }
        if m & MATCH_ACTION != 0 {
            out.push(self.id(LAB_ACTION_NAME, &[l]), 1.0);
        }
        if mask.parent_word {
            out.push(
                self.id(LAB_WORD_PARENT, &[l, s.words[j], s.parent_words[j]]),
                1.0,
            );
        }
    }

    /// Game-only features that do not depend on the candidate verb.
    pub fn game_static(&self, view: &AttributeView, out: &mut SparseVector) {
        out.push(self.id(G_BIAS, &[]), 1.0);
        for (i, v) in view.numeric.iter().enumerate() {
            out.push(self.id(G_NUMERIC, &[i as u32]), *v);
        }
        out.push(self.id(G_UNIT, &[view.actor.index() as u32]), 1.0);
        for a in view.neighborhood.iter() {
            out.push(self.id(G_NEIGHBORHOOD, &[a.index() as u32]), 1.0);
        }
        if let Some(p) = view.producing {
            out.push(self.id(G_PRODUCING, &[production_index(p)]), 1.0);
        }
    }

    pub fn game_action_id(&self, actor: ActorKind, verb: Verb) -> FeatureId {
        self.id(
            G_ACTION_UNIT,
            &[actor.index() as u32, verb.ordinal() as u32],
        )
    }

    /// Action-value features. `text` is the selected sentence with its labeling, or no
    /// labeling for the relevance-only network; `None` gives the game-only features.
    pub fn f_action_value(
        &self,
        view: &AttributeView,
        text: Option<(&EncodedSentence, Option<&[Label]>)>,
    ) -> Result<SparseVector, FeatureError> {
        let mut out = SparseVector::with_capacity(32);
        self.game_static(view, &mut out);
        out.push(self.game_action_id(view.actor, view.verb), 1.0);
        if let Some((s, labels)) = text {
            if let Some(l) = labels {
                if l.len() != s.len() {
                    return Err(FeatureError::ShapeMismatch {
                        labels: l.len(),
                        tokens: s.len(),
                    });
                }
            }
            self.text_features(view, s, labels, &mut out);
        }
        Ok(out)
    }

    fn text_features(
        &self,
        view: &AttributeView,
        s: &EncodedSentence,
        labels: Option<&[Label]>,
        out: &mut SparseVector,
    ) {
        let unit = view.actor.index() as u32;
        let action = view.verb.ordinal() as u32;
        for &w in &s.distinct {
            out.push(self.id(T_WORD_ACTION, &[w, action]), 1.0);
            out.push(self.id(T_WORD_UNIT_ACTION, &[w, unit, action]), 1.0);
            out.push(self.id(T_WORD_UNIT, &[w, unit]), 1.0);
            for a in view.neighborhood.iter() {
                out.push(self.id(T_WORD_ATTR, &[w, a.index() as u32]), 1.0);
            }
        }
        let Some(labels) = labels else {
            return;
        };
        for (j, (&w, &label)) in s.words.iter().zip(labels).enumerate() {
            if label == Label::Background {
                continue;
            }
            let seen = (0..j).any(|k| s.words[k] == w && labels[k] == label);
            if seen {
                continue;
            }
            let l = label.index() as u32;
            out.push(self.id(T_WORD_LABEL_ACTION, &[w, l, action]), 1.0);
            out.push(self.id(T_WORD_LABEL_UNIT_ACTION, &[w, l, unit, action]), 1.0);
            out.push(self.id(T_WORD_LABEL_UNIT, &[w, l, unit]), 1.0);
            for a in view.neighborhood.iter() {
                out.push(self.id(T_WORD_LABEL_ATTR, &[w, l, a.index() as u32]), 1.0);
            }
        }
    }

    /// True for ids of the text-combination templates of the value family.
    pub fn is_text_feature(&self, id: FeatureId) -> bool {
        id.0 >= self.offsets[T_WORD_ACTION] && id.0 < self.family_ranges[2].1
    }

    /// Word of a text-combination feature, if `id` is one.
    pub fn text_feature_word(&self, id: FeatureId) -> Option<u32> {
        if !self.is_text_feature(id) {
            return None;
        }
        let t = (T_WORD_ACTION..=T_WORD_LABEL_ATTR)
            .rev()
            .find(|&t| self.offsets[t] <= id.0)?;
        let rem = id.0 - self.offsets[t];
        let rest: u32 = self.radices[t][1..].iter().product();
        Some(rem / rest)
    }

    /// One `id value description` line per feature, sorted by id.
    pub fn dump_features(&self, v: &SparseVector) -> String {
        let mut out = String::new();
        for (id, val) in v.sorted() {
            let _ = writeln!(out, "{}\t{}\t{}", id.0, val, self.describe(id));
        }
        out
    }
}

/// Per-sentence relevance vectors of one document, cached per candidate view.
#[derive(Debug, Clone)]
pub struct XInput {
    doc: Arc<EncodedDocument>,
    cache: FxHashMap<(ActorKind, Verb, AttrSet, AttrSet), Arc<Vec<SparseVector>>>,
}

impl XInput {
    pub fn new(doc: Arc<EncodedDocument>) -> XInput {
        XInput {
            doc,
            cache: FxHashMap::default(),
        }
    }

    pub fn bundle(&mut self, space: &FeatureSpace, view: &AttributeView) -> Arc<Vec<SparseVector>> {
        let doc = &self.doc;
        Arc::clone(self.cache.entry(view.relevance_key()).or_insert_with(|| {
            Arc::new(
                doc.sentences
                    .iter()
                    .map(|s| space.phi_relevance(s, view))
                    .collect(),
            )
        }))
    }

    pub fn cached_views(&self) -> usize {
        self.cache.len()
    }
}
