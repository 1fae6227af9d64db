//! Combinatorial topology of a p.c.f. self-similar set.
//!
//! A fractal is described by `N` cell maps `F_1..F_N`, `N0 <= N` boundary
//! corners (corner `j` is the fixed point of `F_j`), and a list of glue
//! pairs `(i, m, j, n)` asserting `F_i v_m = F_j v_n`. Level-`k` vertices
//! are words over the alphabet of maps with a corner attached; gluing
//! induces an equivalence on those addresses and every vertex has a unique
//! canonical (lexicographically least, shortest) representative.

use crate::{Error, Result};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

/// A word over the map alphabet, letters stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(pub Vec<u8>);

impl Word {
    pub fn empty() -> Word {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, letter: u8) {
        self.0.push(letter);
    }

    pub fn child(&self, letter: u8) -> Word {
        let mut w = self.clone();
        w.push(letter);
        w
    }

    /// `self` followed by `m` copies of `letter`.
    pub fn extend_repeated(&self, letter: u8, m: usize) -> Word {
        let mut w = self.clone();
        w.0.extend(std::iter::repeat(letter).take(m));
        w
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &l in &self.0 {
            write!(f, "{}", l + 1)?;
        }
        Ok(())
    }
}

/// Canonical vertex address: a word plus a corner index (0-based).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId {
    pub word: Word,
    pub corner: u8,
}

impl VertexId {
    /// First level `n` with the vertex in `V_n`.
    pub fn level(&self) -> usize {
        self.word.len()
    }

    pub fn is_boundary(&self) -> bool {
        self.word.is_empty()
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.word, self.corner + 1)
    }
}

/// One directed approach to a vertex: the vertex is `F_cell v_corner`, and
/// the shrinking cells `cell . corner^m` converge to it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Side {
    pub cell: Word,
    pub corner: u8,
}

/// Classification of a canonical vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VertexClass {
    /// `x = F_cell v_corner` with a single approach direction.
    Nonjunction { cell: Word, corner: u8 },
    /// `x = F_prefix F_j v_{j'}` for every `(j, j')` in `pairs`.
    Junction { prefix: Word, pairs: Vec<(u8, u8)> },
}

/// Combinatorial description of a p.c.f. fractal.
#[derive(Debug, Clone)]
pub struct FractalSpec {
    pub name: String,
    pub n_maps: usize,
    pub n0: usize,
    /// Validated glue pairs, 0-based `(cell_i, corner_m, cell_j, corner_n)`.
    pub glue: Vec<(u8, u8, u8, u8)>,
    /// For each level-1 slot `(cell, corner)`, the least slot glued to it
    /// (itself when unglued). Indexed `cell * n0 + corner`.
    slot_min: Vec<(u8, u8)>,
    /// Full equivalence class per slot, sorted; length 1 when unglued.
    slot_class: Vec<Vec<(u8, u8)>>,
}

impl FractalSpec {
    pub fn new(name: &str, n_maps: usize, n0: usize, glue_1based: &[(u8, u8, u8, u8)]) -> Result<FractalSpec> {
        if n_maps < 2 {
            return Err(Error::InvalidSpec("need at least two maps".into()));
        }
        if n0 < 2 || n0 > n_maps {
            return Err(Error::InvalidSpec(format!(
                "boundary size {n0} must be between 2 and the map count {n_maps}"
            )));
        }
        if n_maps > 9 {
            return Err(Error::InvalidSpec(
                "more than nine maps: single-digit word addresses would be ambiguous".into(),
            ));
        }
        let mut glue = Vec::new();
        for &(i1, m1, j1, n1) in glue_1based {
            let (i, m, j, n) = (i1 as usize, m1 as usize, j1 as usize, n1 as usize);
            if i < 1 || i > n_maps || j < 1 || j > n_maps || m < 1 || m > n0 || n < 1 || n > n0 {
                return Err(Error::InvalidSpec(format!(
                    "glue pair ({i1},{m1},{j1},{n1}) out of range"
                )));
            }
            if i == j {
                return Err(Error::InvalidSpec(format!(
                    "glue pair ({i1},{m1},{j1},{n1}) identifies two corners of the same cell"
                )));
            }
            if i == m || j == n {
                return Err(Error::InvalidSpec(format!(
                    "glue pair ({i1},{m1},{j1},{n1}) touches a boundary fixed point"
                )));
            }
            glue.push((i as u8 - 1, m as u8 - 1, j as u8 - 1, n as u8 - 1));
        }

        // Union-find over level-1 slots.
        let slots = n_maps * n0;
        let mut parent: Vec<usize> = (0..slots).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = x;
            while parent[c] != c {
                let next = parent[c];
                parent[c] = r;
                c = next;
            }
            r
        }
        let idx = |cell: u8, corner: u8| cell as usize * n0 + corner as usize;
        let mut seen_left: BTreeSet<(u8, u8)> = BTreeSet::new();
        for &(i, m, j, n) in &glue {
            if !seen_left.insert((i, m)) {
                return Err(Error::InvalidSpec(format!(
                    "two glue pairs share the left slot (cell {}, corner {})",
                    i + 1,
                    m + 1
                )));
            }
            let (a, b) = (find(&mut parent, idx(i, m)), find(&mut parent, idx(j, n)));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }

        let mut classes: BTreeMap<usize, Vec<(u8, u8)>> = BTreeMap::new();
        for cell in 0..n_maps as u8 {
            for corner in 0..n0 as u8 {
                let root = find(&mut parent, idx(cell, corner));
                classes.entry(root).or_default().push((cell, corner));
            }
        }
        let mut slot_min = vec![(0u8, 0u8); slots];
        let mut slot_class = vec![Vec::new(); slots];
        for members in classes.values() {
            // Distinct cells per class: a cell meets another in one point.
            let mut cells = BTreeSet::new();
            for &(c, _) in members {
                if !cells.insert(c) {
                    return Err(Error::InvalidSpec(format!(
                        "glue relations identify two corners of cell {}",
                        c + 1
                    )));
                }
            }
            let min = members[0];
            for &(c, k) in members {
                slot_min[idx(c, k)] = min;
                slot_class[idx(c, k)] = members.clone();
            }
        }

        // Two distinct classes may not join the same pair of cells.
        let mut pair_owner: BTreeMap<(u8, u8), (u8, u8)> = BTreeMap::new();
        for members in classes.values() {
            if members.len() < 2 {
                continue;
            }
            let tag = members[0];
            for a in 0..members.len() {
                for b in a + 1..members.len() {
                    let key = (members[a].0.min(members[b].0), members[a].0.max(members[b].0));
                    if let Some(prev) = pair_owner.insert(key, tag) {
                        if prev != tag {
                            return Err(Error::InvalidSpec(format!(
                                "cells {} and {} meet in more than one point",
                                key.0 + 1,
                                key.1 + 1
                            )));
                        }
                    }
                }
            }
        }

        // Cell adjacency graph must be connected.
        let mut adj = vec![Vec::new(); n_maps];
        for members in classes.values() {
            for a in 0..members.len() {
                for b in a + 1..members.len() {
                    adj[members[a].0 as usize].push(members[b].0 as usize);
                    adj[members[b].0 as usize].push(members[a].0 as usize);
                }
            }
        }
        let mut seen = vec![false; n_maps];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(c) = queue.pop_front() {
            for &d in &adj[c] {
                if !seen[d] {
                    seen[d] = true;
                    queue.push_back(d);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidSpec("cell adjacency graph is disconnected".into()));
        }

        Ok(FractalSpec {
            name: name.to_string(),
            n_maps,
            n0,
            glue,
            slot_min,
            slot_class,
        })
    }

    fn slot_index(&self, cell: u8, corner: u8) -> usize {
        cell as usize * self.n0 + corner as usize
    }

    /// All slots glued to `(cell, corner)`, itself included, sorted.
    pub fn slot_class(&self, cell: u8, corner: u8) -> &[(u8, u8)] {
        &self.slot_class[self.slot_index(cell, corner)]
    }

    /// Canonical representative of the vertex `F_w v_corner` (0-based input).
    pub fn canonical_vertex(&self, letters: &[u8], corner: u8) -> Result<VertexId> {
        if corner as usize >= self.n0 {
            return Err(Error::InvalidVertex(format!(
                "corner {} out of range 1..={}",
                corner + 1,
                self.n0
            )));
        }
        for &l in letters {
            if l as usize >= self.n_maps {
                return Err(Error::InvalidVertex(format!(
                    "letter {} out of range 1..={}",
                    l + 1,
                    self.n_maps
                )));
            }
        }
        let mut w: Vec<u8> = letters.to_vec();
        let mut c = corner;
        while w.last() == Some(&c) {
            w.pop();
        }
        if let Some(&a) = w.last() {
            let (b, c2) = self.slot_min[self.slot_index(a, c)];
            *w.last_mut().unwrap() = b;
            c = c2;
        }
        Ok(VertexId { word: Word(w), corner: c })
    }

    pub fn canonicalize(&self, word: &Word, corner: u8) -> Result<VertexId> {
        self.canonical_vertex(&word.0, corner)
    }

    /// Parse `"w:j"` with 1-based digits, e.g. `"112:3"` or `":1"`.
    pub fn parse_vertex(&self, text: &str) -> Result<VertexId> {
        let (w, j) = text
            .split_once(':')
            .ok_or_else(|| Error::InvalidVertex(format!("{text:?}: expected \"word:corner\"")))?;
        let mut letters = Vec::new();
        for ch in w.trim().chars() {
            let d = ch
                .to_digit(10)
                .ok_or_else(|| Error::InvalidVertex(format!("bad letter {ch:?} in {text:?}")))?;
            if d == 0 {
                return Err(Error::InvalidVertex(format!("letter 0 in {text:?}")));
            }
            letters.push(d as u8 - 1);
        }
        let corner: u32 = j
            .trim()
            .parse()
            .map_err(|_| Error::InvalidVertex(format!("bad corner in {text:?}")))?;
        if corner == 0 {
            return Err(Error::InvalidVertex(format!("corner 0 in {text:?}")));
        }
        self.canonical_vertex(&letters, corner as u8 - 1)
    }

    /// Parse a word of 1-based digits, e.g. `"12"`.
    pub fn parse_word(&self, text: &str) -> Result<Word> {
        let mut letters = Vec::new();
        for ch in text.trim().chars() {
            let d = ch
                .to_digit(10)
                .ok_or_else(|| Error::InvalidVertex(format!("bad letter {ch:?} in word {text:?}")))?;
            if d == 0 || d as usize > self.n_maps {
                return Err(Error::InvalidVertex(format!("letter {ch} out of range in {text:?}")));
            }
            letters.push(d as u8 - 1);
        }
        Ok(Word(letters))
    }

    /// All words of the given length in lexicographic order.
    pub fn words(&self, len: usize) -> WordIter {
        WordIter {
            n: self.n_maps as u8,
            current: vec![0; len],
            done: false,
        }
    }

    /// The canonical vertex set `V_m`, sorted.
    pub fn vertex_set(&self, m: usize) -> Vec<VertexId> {
        let mut set = BTreeSet::new();
        for w in self.words(m) {
            for corner in 0..self.n0 as u8 {
                set.insert(self.canonical_vertex(&w.0, corner).unwrap());
            }
        }
        set.into_iter().collect()
    }

    /// Classify a canonical vertex as junction or nonjunction.
    pub fn classify(&self, v: &VertexId) -> VertexClass {
        if v.word.is_empty() {
            return VertexClass::Nonjunction {
                cell: Word::empty(),
                corner: v.corner,
            };
        }
        let a = *v.word.0.last().unwrap();
        let class = self.slot_class(a, v.corner);
        if class.len() == 1 {
            VertexClass::Nonjunction {
                cell: v.word.clone(),
                corner: v.corner,
            }
        } else {
            let prefix = Word(v.word.0[..v.word.len() - 1].to_vec());
            VertexClass::Junction {
                prefix,
                pairs: class.to_vec(),
            }
        }
    }

    /// The approach sides of a vertex, sorted by cell word.
    pub fn sides(&self, v: &VertexId) -> Vec<Side> {
        match self.classify(v) {
            VertexClass::Nonjunction { cell, corner } => vec![Side { cell, corner }],
            VertexClass::Junction { prefix, pairs } => pairs
                .iter()
                .map(|&(j, jp)| Side {
                    cell: prefix.child(j),
                    corner: jp,
                })
                .collect(),
        }
    }

    /// Cells of the shrinking neighborhood `U_m(x)`, one per side.
    pub fn neighborhood(&self, v: &VertexId, m: usize) -> Vec<Word> {
        self.sides(v)
            .into_iter()
            .map(|s| s.cell.extend_repeated(s.corner, m))
            .collect()
    }

    /// Address of `z` relative to the cell `F_w K`: the pair `(v, c)` with
    /// `F_w F_v v_c = z`, or `None` when `z` lies outside that cell. `z`
    /// must be canonical. Same-level addresses of a vertex differ only in
    /// their final slot, and a slot `(i, c)` extends to arbitrarily deep
    /// addresses by appending copies of `c`; both forms are searched.
    pub fn descend(&self, z: &VertexId, w: &Word) -> Option<(Word, u8)> {
        if w.is_empty() {
            return Some((z.word.clone(), z.corner));
        }
        if z.word.is_empty() {
            if w.0.iter().all(|&l| l == z.corner) {
                return Some((Word::empty(), z.corner));
            }
            return None;
        }
        let last = *z.word.0.last().unwrap();
        let stem = &z.word.0[..z.word.len() - 1];
        for &(i, c) in self.slot_class(last, z.corner) {
            if w.len() <= stem.len() + 1 {
                let head = &stem[..w.len().min(stem.len())];
                let matches = if w.len() <= stem.len() {
                    w.0[..] == *head
                } else {
                    w.0[..stem.len()] == *head && w.0[stem.len()] == i
                };
                if matches {
                    let mut suffix: Vec<u8> = stem[w.len().min(stem.len())..].to_vec();
                    if w.len() <= stem.len() {
                        suffix.push(i);
                    }
                    return Some((Word(suffix), c));
                }
            } else if w.0[..stem.len()] == *stem
                && w.0[stem.len()] == i
                && w.0[stem.len() + 1..].iter().all(|&l| l == c)
            {
                return Some((Word::empty(), c));
            }
        }
        None
    }

    /// Outer boundary vertices of `U_m(x)`: for each side cell, every
    /// corner other than the approach corner. Sorted, deduplicated.
    pub fn neighborhood_boundary(&self, v: &VertexId, m: usize) -> Vec<VertexId> {
        let mut out = BTreeSet::new();
        for side in self.sides(v) {
            let cell = side.cell.extend_repeated(side.corner, m);
            for corner in 0..self.n0 as u8 {
                if corner != side.corner {
                    out.insert(self.canonical_vertex(&cell.0, corner).unwrap());
                }
            }
        }
        out.into_iter().collect()
    }
}

pub struct WordIter {
    n: u8,
    current: Vec<u8>,
    done: bool,
}

impl Iterator for WordIter {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        if self.done {
            return None;
        }
        let out = Word(self.current.clone());
        // increment in base n, most significant letter first
        let mut i = self.current.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.current[i] + 1 < self.n {
                self.current[i] += 1;
                for x in &mut self.current[i + 1..] {
                    *x = 0;
                }
                break;
            }
        }
        if self.current.is_empty() {
            self.done = true;
        }
        Some(out)
    }
}

/// A parsed fractal description file: topology plus the raw harmonic
/// structure fields (kept as strings so either scalar mode can consume
/// them exactly).
#[derive(Debug, Clone)]
pub struct SpecDoc {
    pub spec: FractalSpec,
    /// Level-0 conductances as `(corner_a, corner_b, value)` with 0-based
    /// corners; missing pairs default to zero.
    pub conductances: Vec<(u8, u8, String)>,
    pub r: Vec<String>,
    pub mu: Vec<String>,
    /// Set when the structure is the one-parameter asymmetric family on
    /// the gasket; `r` and conductances are then derived numerically.
    pub bilateral_c: Option<f64>,
}

#[derive(Deserialize)]
struct TomlDoc {
    fractal: TomlFractal,
    structure: TomlStructure,
}

#[derive(Deserialize)]
struct TomlFractal {
    name: String,
    maps: usize,
    boundary: usize,
    glue: Vec<[u8; 4]>,
}

#[derive(Deserialize)]
struct TomlStructure {
    #[serde(default)]
    conductances: Vec<(u8, u8, String)>,
    #[serde(default)]
    r: Vec<String>,
    #[serde(default)]
    mu: Vec<String>,
    #[serde(default)]
    bilateral: Option<f64>,
}

impl SpecDoc {
    pub fn from_toml_str(text: &str) -> Result<SpecDoc> {
        let doc: TomlDoc = toml::from_str(text).map_err(|e| Error::Parse(format!("spec TOML: {e}")))?;
        let glue: Vec<(u8, u8, u8, u8)> = doc
            .fractal
            .glue
            .iter()
            .map(|g| (g[0], g[1], g[2], g[3]))
            .collect();
        let spec = FractalSpec::new(&doc.fractal.name, doc.fractal.maps, doc.fractal.boundary, &glue)?;
        let n0 = spec.n0;
        let mut conductances = Vec::new();
        for (a, b, v) in doc.structure.conductances {
            if a == 0 || b == 0 || a as usize > n0 || b as usize > n0 || a == b {
                return Err(Error::InvalidSpec(format!("bad conductance edge ({a},{b})")));
            }
            conductances.push((a - 1, b - 1, v));
        }
        if doc.structure.bilateral.is_none() {
            if doc.structure.r.len() != spec.n_maps {
                return Err(Error::InvalidSpec(format!(
                    "expected {} renormalization weights, got {}",
                    spec.n_maps,
                    doc.structure.r.len()
                )));
            }
            if doc.structure.mu.len() != spec.n_maps {
                return Err(Error::InvalidSpec(format!(
                    "expected {} measure weights, got {}",
                    spec.n_maps,
                    doc.structure.mu.len()
                )));
            }
        }
        Ok(SpecDoc {
            spec,
            conductances,
            r: doc.structure.r,
            mu: doc.structure.mu,
            bilateral_c: doc.structure.bilateral,
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<SpecDoc> {
        let text = std::fs::read_to_string(path)?;
        SpecDoc::from_toml_str(&text)
    }

    /// A built-in fractal by name.
    pub fn preset(name: &str) -> Result<SpecDoc> {
        let text = preset_toml(name).ok_or_else(|| {
            Error::InvalidSpec(format!(
                "unknown preset {name:?}; available: {}",
                PRESET_NAMES.join(", ")
            ))
        })?;
        SpecDoc::from_toml_str(text)
    }
}

pub const PRESET_NAMES: &[&str] = &["sg", "sg3", "hexagasket", "vicsek", "bilateral-sg"];

pub fn preset_toml(name: &str) -> Option<&'static str> {
    match name {
        "sg" => Some(PRESET_SG),
        "sg3" => Some(PRESET_SG3),
        "hexagasket" => Some(PRESET_HEXAGASKET),
        "vicsek" => Some(PRESET_VICSEK),
        "bilateral-sg" => Some(PRESET_BILATERAL_SG),
        _ => None,
    }
}

/// Sierpinski gasket: three maps, complete unit conductances, weights 3/5.
const PRESET_SG: &str = r#"
[fractal]
name = "sg"
maps = 3
boundary = 3
glue = [[1, 2, 2, 1], [1, 3, 3, 1], [2, 3, 3, 2]]

[structure]
conductances = [[1, 2, "1"], [1, 3, "1"], [2, 3, "1"]]
r = ["3/5", "3/5", "3/5"]
mu = ["1/3", "1/3", "1/3"]
"#;

/// Level-3 gasket: six upward cells of the 9-fold subdivision; the three
/// mid cells meet at a common triple point.
const PRESET_SG3: &str = r#"
[fractal]
name = "sg3"
maps = 6
boundary = 3
glue = [
    [1, 2, 4, 1], [4, 2, 2, 1],
    [2, 3, 5, 2], [5, 3, 3, 2],
    [3, 1, 6, 3], [6, 1, 1, 3],
    [4, 3, 5, 1], [5, 1, 6, 2],
]

[structure]
conductances = [[1, 2, "1"], [1, 3, "1"], [2, 3, "1"]]
r = ["7/15", "7/15", "7/15", "7/15", "7/15", "7/15"]
mu = ["1/6", "1/6", "1/6", "1/6", "1/6", "1/6"]
"#;

/// Hexagasket: six cells in a ring, adjacent cells glued in one point,
/// boundary at the three alternate outer corners.
const PRESET_HEXAGASKET: &str = r#"
[fractal]
name = "hexagasket"
maps = 6
boundary = 3
glue = [
    [1, 2, 4, 1], [4, 2, 2, 1],
    [2, 3, 5, 2], [5, 3, 3, 2],
    [3, 1, 6, 3], [6, 1, 1, 3],
]

[structure]
conductances = [[1, 2, "1"], [1, 3, "1"], [2, 3, "1"]]
r = ["3/7", "3/7", "3/7", "3/7", "3/7", "3/7"]
mu = ["1/6", "1/6", "1/6", "1/6", "1/6", "1/6"]
"#;

/// Vicsek cross: four corner cells and a center cell, complete-graph
/// conductances on the four boundary corners. The extension spectrum has
/// a double zero eigenvalue, so derivative operations refuse this preset.
const PRESET_VICSEK: &str = r#"
[fractal]
name = "vicsek"
maps = 5
boundary = 4
glue = [[1, 3, 5, 1], [2, 4, 5, 2], [3, 1, 5, 3], [4, 2, 5, 4]]

[structure]
conductances = [
    [1, 2, "1"], [1, 3, "1"], [1, 4, "1"],
    [2, 3, "1"], [2, 4, "1"], [3, 4, "1"],
]
r = ["1/3", "1/3", "1/3", "1/3", "1/3"]
mu = ["1/5", "1/5", "1/5", "1/5", "1/5"]
"#;

/// Gasket topology with the asymmetric one-parameter structure at c = 1.1;
/// the renormalization weights are computed, not stored.
const PRESET_BILATERAL_SG: &str = r#"
[fractal]
name = "bilateral-sg"
maps = 3
boundary = 3
glue = [[1, 2, 2, 1], [1, 3, 3, 1], [2, 3, 3, 2]]

[structure]
bilateral = 1.1
mu = ["1/3", "1/3", "1/3"]
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn sg() -> FractalSpec {
        SpecDoc::preset("sg").unwrap().spec
    }

    #[test]
    fn canonical_addresses_on_the_gasket() {
        let f = sg();
        let v = f.parse_vertex("2:1").unwrap();
        assert_eq!(v.to_string(), "1:2");
        let v = f.parse_vertex("22:1").unwrap();
        assert_eq!(v.to_string(), "21:2");
        let v = f.parse_vertex("11:1").unwrap();
        assert_eq!(v.to_string(), ":1");
        assert_eq!(v.level(), 0);
        assert!(v.is_boundary());
        // canonicalization is idempotent
        let twice = f.canonicalize(&v.word, v.corner).unwrap();
        assert_eq!(twice, v);
        // lex-least representative: the cell letter beats the corner
        let deep = f.parse_vertex("1223:2").unwrap();
        assert_eq!(deep.to_string(), "1222:3");
        let again = f.canonicalize(&deep.word, deep.corner).unwrap();
        assert_eq!(again, deep);
    }

    #[test]
    fn vertex_counts_match_closed_forms() {
        let f = sg();
        for m in 0..=5 {
            let count = f.vertex_set(m).len();
            assert_eq!(count, (3usize.pow(m as u32 + 1) + 3) / 2, "level {m}");
        }
        assert_eq!(SpecDoc::preset("sg3").unwrap().spec.vertex_set(1).len(), 10);
        assert_eq!(SpecDoc::preset("hexagasket").unwrap().spec.vertex_set(1).len(), 12);
        assert_eq!(SpecDoc::preset("vicsek").unwrap().spec.vertex_set(1).len(), 16);
    }

    #[test]
    fn classification_and_sides() {
        let f = sg();
        let b = f.parse_vertex(":1").unwrap();
        assert!(matches!(f.classify(&b), VertexClass::Nonjunction { .. }));
        assert_eq!(f.sides(&b).len(), 1);

        let x = f.parse_vertex("1:2").unwrap();
        match f.classify(&x) {
            VertexClass::Junction { prefix, pairs } => {
                assert!(prefix.is_empty());
                assert_eq!(pairs, vec![(0, 1), (1, 0)]);
            }
            _ => panic!("expected junction"),
        }
        let sides = f.sides(&x);
        assert_eq!(sides.len(), 2);
        assert_eq!(sides[0].cell.to_string(), "1");
        assert_eq!(sides[0].corner, 1);
        assert_eq!(sides[1].cell.to_string(), "2");
        assert_eq!(sides[1].corner, 0);

        let deep = f.parse_vertex("12:3").unwrap();
        match f.classify(&deep) {
            VertexClass::Junction { prefix, pairs } => {
                assert_eq!(prefix.to_string(), "1");
                assert_eq!(pairs, vec![(1, 2), (2, 1)]);
            }
            _ => panic!("expected junction"),
        }
    }

    #[test]
    fn triple_point_on_sg3() {
        let f = SpecDoc::preset("sg3").unwrap().spec;
        let center = f.parse_vertex("4:3").unwrap();
        assert_eq!(center.to_string(), "4:3");
        // all three mid cells name the same point
        assert_eq!(f.parse_vertex("5:1").unwrap(), center);
        assert_eq!(f.parse_vertex("6:2").unwrap(), center);
        match f.classify(&center) {
            VertexClass::Junction { prefix, pairs } => {
                assert!(prefix.is_empty());
                assert_eq!(pairs, vec![(3, 2), (4, 0), (5, 1)]);
            }
            _ => panic!("expected junction"),
        }
        assert_eq!(f.sides(&center).len(), 3);
        assert_eq!(f.neighborhood_boundary(&center, 1).len(), 6);
    }

    #[test]
    fn neighborhoods_nest() {
        let f = sg();
        for name in ["1:2", "12:3", ":1", "112:2"] {
            let v = f.parse_vertex(name).unwrap();
            for m in 0..5 {
                let outer = f.neighborhood(&v, m);
                let inner = f.neighborhood(&v, m + 1);
                assert_eq!(outer.len(), inner.len());
                for (o, i) in outer.iter().zip(&inner) {
                    assert!(o.is_prefix_of(i), "U_{} cell {} not refined by {}", m, o, i);
                }
            }
        }
    }

    #[test]
    fn neighborhood_boundary_on_gasket_junction() {
        let f = sg();
        let x = f.parse_vertex("1:2").unwrap();
        let bdry = f.neighborhood_boundary(&x, 1);
        let names: Vec<String> = bdry.iter().map(|v| v.to_string()).collect();
        assert_eq!(names, vec!["11:2", "12:3", "21:2", "21:3"]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        // glue touching a fixed point slot
        assert!(FractalSpec::new("bad", 3, 3, &[(1, 1, 2, 1)]).is_err());
        // same cell on both ends
        assert!(FractalSpec::new("bad", 3, 3, &[(1, 2, 1, 3)]).is_err());
        // out of range corner
        assert!(FractalSpec::new("bad", 3, 3, &[(1, 4, 2, 1)]).is_err());
        // duplicate left slot
        assert!(FractalSpec::new("bad", 3, 3, &[(1, 2, 2, 1), (1, 2, 3, 1)]).is_err());
        // disconnected: two maps, no glue
        assert!(FractalSpec::new("bad", 2, 2, &[]).is_err());
        // two classes sharing a cell pair
        assert!(FractalSpec::new("bad", 3, 3, &[(1, 2, 2, 1), (1, 3, 2, 3)]).is_err());
    }

    #[test]
    fn word_iteration_and_parsing() {
        let f = sg();
        let words: Vec<String> = f.words(2).map(|w| w.to_string()).collect();
        assert_eq!(words.len(), 9);
        assert_eq!(words[0], "11");
        assert_eq!(words[8], "33");
        assert_eq!(f.parse_word("312").unwrap().to_string(), "312");
        assert!(f.parse_word("140").is_err());
        let empty: Vec<Word> = f.words(0).collect();
        assert_eq!(empty, vec![Word::empty()]);
    }

    #[test]
    fn vertex_parse_round_trip() {
        let f = sg();
        for text in [":1", ":3", "1:2", "21:3", "1222:3"] {
            let v = f.parse_vertex(text).unwrap();
            assert_eq!(v.to_string(), text);
            assert_eq!(f.parse_vertex(&v.to_string()).unwrap(), v);
        }
        assert!(f.parse_vertex("12").is_err());
        assert!(f.parse_vertex("12:0").is_err());
        assert!(f.parse_vertex("12:4").is_err());
        assert!(f.parse_vertex("14:1").is_err());
    }

    #[test]
    fn relative_addresses() {
        let f = sg();
        let at = |z: &str, w: &str| {
            let z = f.parse_vertex(z).unwrap();
            let w = f.parse_word(w).unwrap();
            f.descend(&z, &w).map(|(v, c)| format!("{}:{}", v, c + 1))
        };
        // The level-1 junction p = F_1 v_2 = F_2 v_1 seen from various cells.
        assert_eq!(at("1:2", "1").as_deref(), Some(":2"));
        assert_eq!(at("1:2", "2").as_deref(), Some(":1"));
        assert_eq!(at("1:2", "12").as_deref(), Some(":2"));
        assert_eq!(at("1:2", "21").as_deref(), Some(":1"));
        assert_eq!(at("1:2", "122").as_deref(), Some(":2"));
        assert_eq!(at("1:2", "3"), None);
        assert_eq!(at("1:2", "212"), None);
        // Deeper vertices and boundary corners.
        assert_eq!(at("11:2", "1").as_deref(), Some("1:2"));
        assert_eq!(at("11:2", "11").as_deref(), Some(":2"));
        assert_eq!(at("11:2", "12").as_deref(), Some(":1"));
        assert_eq!(at("12:3", "13").as_deref(), Some(":2"));
        assert_eq!(at("12:3", "2"), None);
        assert_eq!(at(":2", "22").as_deref(), Some(":2"));
        assert_eq!(at(":2", "21"), None);
        // Empty cell word is the whole set.
        assert_eq!(at("12:3", "").as_deref(), Some("12:3"));
    }
}
