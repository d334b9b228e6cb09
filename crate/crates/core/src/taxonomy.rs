//! Rooted, single-parent taxonomy.
//!
//! A [`Taxonomy`] is an immutable tree of [`Entity`] values hanging off a
//! distinguished ROOT. Depth is 1-based: `depth(ROOT) == 1`, children of ROOT
//! sit at depth 2. Layer `l` (for `l >= 1`) is the set of nodes at depth
//! `l + 1`, so layer 1 holds the children of ROOT.
//!
//! Two on-disk formats are accepted:
//!
//! * an edge list, one `parent<TAB>child` pair per line, using the literal
//!   token `ROOT` for the root. `#` lines and blank lines are ignored, except
//!   that a `# root-label: <text>` comment names the root class;
//! * a nested JSON object `{"name": "ROOT", "children": [...]}`. The top-level
//!   object may carry an optional `"label"` string naming the root class.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Token that denotes the root in both file formats.
pub const ROOT_TOKEN: &str = "ROOT";

const ROOT_LABEL_DIRECTIVE: &str = "root-label:";

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("entity text is empty after normalization")]
    EmptyEntity,
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` has two parents (`{first}` and `{second}`)")]
    MultipleParents {
        node: String,
        first: String,
        second: String,
    },
    #[error("cycle through node `{0}`")]
    Cycle(String),
    #[error("node `{0}` does not reach ROOT")]
    Orphan(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("seeds sit at different depths: {0}")]
    MixedDepth(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid taxonomy JSON: {0}")]
    Json(String),
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

/// A named concept. Identity, ordering and hashing use the normalized form
/// only; the surface form is kept for display and prompting.
#[derive(Clone, Debug)]
pub struct Entity {
    surface: String,
    norm: String,
}

impl Entity {
    pub fn new(surface: impl Into<String>) -> Result<Self, TaxonomyError> {
        let surface = surface.into();
        let norm = normalize(&surface);
        if norm.is_empty() {
            return Err(TaxonomyError::EmptyEntity);
        }
        Ok(Entity {
            surface: surface.trim().to_string(),
            norm,
        })
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn norm(&self) -> &str {
        &self.norm
    }
}

/// Lowercase, trim, and collapse internal whitespace runs to one space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

impl PartialEq for Entity {
    fn eq(&self, other: &Self) -> bool {
        self.norm == other.norm
    }
}

impl Eq for Entity {}

impl Hash for Entity {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.norm.hash(state);
    }
}

impl PartialOrd for Entity {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entity {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.norm.cmp(&other.norm)
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface)
    }
}

impl Serialize for Entity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.surface)
    }
}

impl<'de> Deserialize<'de> for Entity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Entity::new(s).map_err(serde::de::Error::custom)
    }
}

/// Either the root or an entity of the taxonomy.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Root,
    Entity(Entity),
}

impl Node {
    pub fn entity(&self) -> Option<&Entity> {
        match self {
            Node::Root => None,
            Node::Entity(e) => Some(e),
        }
    }

    pub fn is_root(&self) -> bool {
        matches!(self, Node::Root)
    }
}

impl From<Entity> for Node {
    fn from(e: Entity) -> Self {
        Node::Entity(e)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Root => f.write_str(ROOT_TOKEN),
            Node::Entity(e) => e.fmt(f),
        }
    }
}

/// Ordered seed entities with unique norms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedSet(Vec<Entity>);

impl SeedSet {
    pub fn new(seeds: Vec<Entity>) -> Result<Self, TaxonomyError> {
        if seeds.is_empty() {
            return Err(TaxonomyError::EmptyEntity);
        }
        let mut seen = HashSet::new();
        for s in &seeds {
            if !seen.insert(s.norm()) {
                return Err(TaxonomyError::DuplicateNode(s.surface().to_string()));
            }
        }
        Ok(SeedSet(seeds))
    }

    /// Parse a seed list: one entity per line, blank and `#` lines skipped.
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let seeds = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(Entity::new)
            .collect::<Result<Vec<_>, _>>()?;
        SeedSet::new(seeds)
    }

    pub fn entities(&self) -> &[Entity] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, e: &Entity) -> bool {
        self.0.contains(e)
    }
}

/// The semantic class a group of same-depth seeds belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedClass {
    /// Lowest common ancestor of the seeds' parents.
    pub anchor: Node,
    pub depth: usize,
    /// All nodes at `depth` below `anchor`, seeds included, in taxonomy order.
    pub members: Vec<Entity>,
}

/// Index of a node inside one taxonomy. `None` stands for ROOT.
type Slot = Option<usize>;

#[derive(Clone, Debug)]
pub struct Taxonomy {
    entities: Vec<Entity>,
    index: HashMap<String, usize>,
    parent: Vec<Slot>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    root_children: Vec<usize>,
    root_label: Option<Entity>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::new()
    }
}

impl Taxonomy {
    /// A taxonomy holding only ROOT.
    pub fn new() -> Self {
        Taxonomy {
            entities: Vec::new(),
            index: HashMap::new(),
            parent: Vec::new(),
            depth: Vec::new(),
            children: Vec::new(),
            root_children: Vec::new(),
            root_label: None,
        }
    }

    /// Build from `(parent, child)` edges. Node order is the order in which
    /// each child first appears; it does not affect structural equality.
    pub fn from_edges<I>(edges: I) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = (Node, Entity)>,
    {
        let mut order: Vec<Entity> = Vec::new();
        let mut parent_of: HashMap<String, Node> = HashMap::new();
        for (parent, child) in edges {
            if let Node::Entity(p) = &parent {
                if p == &child {
                    return Err(TaxonomyError::Cycle(child.surface().to_string()));
                }
            }
            match parent_of.get(child.norm()) {
                Some(existing) if existing == &parent => {
                    return Err(TaxonomyError::DuplicateNode(child.surface().to_string()));
                }
                Some(existing) => {
                    return Err(TaxonomyError::MultipleParents {
                        node: child.surface().to_string(),
                        first: existing.to_string(),
                        second: parent.to_string(),
                    });
                }
                None => {
                    parent_of.insert(child.norm().to_string(), parent);
                    order.push(child);
                }
            }
        }

        // Every referenced parent must itself be declared as a child.
        for p in parent_of.values() {
            if let Node::Entity(p) = p {
                if !parent_of.contains_key(p.norm()) {
                    return Err(TaxonomyError::Orphan(p.surface().to_string()));
                }
            }
        }

        // Every node must reach ROOT without revisiting anything.
        let mut reaches_root: HashSet<&str> = HashSet::new();
        for e in &order {
            let mut path: Vec<&str> = Vec::new();
            let mut on_path: HashSet<&str> = HashSet::new();
            let mut cur = e.norm();
            loop {
                if reaches_root.contains(cur) {
                    break;
                }
                if !on_path.insert(cur) {
                    return Err(TaxonomyError::Cycle(e.surface().to_string()));
                }
                path.push(cur);
                match &parent_of[cur] {
                    Node::Root => break,
                    Node::Entity(p) => cur = p.norm(),
                }
            }
            reaches_root.extend(path);
        }

        // Insert parents before children, keeping first-appearance order
        // among siblings.
        let mut t = Taxonomy::new();
        let mut pending: Vec<&Entity> = order.iter().collect();
        while !pending.is_empty() {
            let before = pending.len();
            let mut rest = Vec::new();
            for e in pending {
                let placed = match &parent_of[e.norm()] {
                    Node::Root => Some(None),
                    Node::Entity(p) => t.index.get(p.norm()).map(|&i| Some(i)),
                };
                match placed {
                    Some(slot) => t.push(e.clone(), slot),
                    None => rest.push(e),
                }
            }
            debug_assert!(rest.len() < before);
            pending = rest;
        }
        t.reorder(&order);
        Ok(t)
    }

    // Restore first-appearance order for `entities` (parents may have been
    // pushed later than their children appeared in the input).
    fn reorder(&mut self, order: &[Entity]) {
        let pos: HashMap<&str, usize> = order
            .iter()
            .enumerate()
            .map(|(i, e)| (e.norm(), i))
            .collect();
        let mut perm: Vec<usize> = (0..self.entities.len()).collect();
        perm.sort_by_key(|&i| pos[self.entities[i].norm()]);
        if perm.iter().enumerate().all(|(a, &b)| a == b) {
            return;
        }
        let mut new_of_old = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            new_of_old[old] = new;
        }
        let remap = |s: Slot| s.map(|i| new_of_old[i]);
        self.entities = perm.iter().map(|&o| self.entities[o].clone()).collect();
        self.parent = perm.iter().map(|&o| remap(self.parent[o])).collect();
        self.depth = perm.iter().map(|&o| self.depth[o]).collect();
        self.index = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.norm().to_string(), i))
            .collect();
        let mut children = vec![Vec::new(); perm.len()];
        let mut root_children = Vec::new();
        for (i, p) in self.parent.iter().enumerate() {
            match p {
                None => root_children.push(i),
                Some(p) => children[*p].push(i),
            }
        }
        self.children = children;
        self.root_children = root_children;
    }

    fn push(&mut self, e: Entity, parent: Slot) {
        let id = self.entities.len();
        let depth = match parent {
            None => 2,
            Some(p) => self.depth[p] + 1,
        };
        self.index.insert(e.norm().to_string(), id);
        self.entities.push(e);
        self.parent.push(parent);
        self.depth.push(depth);
        self.children.push(Vec::new());
        match parent {
            None => self.root_children.push(id),
            Some(p) => self.children[p].push(id),
        }
    }

    /// Parse either supported format; JSON is detected by a leading `{`.
    pub fn parse(source: &str) -> Result<Self, TaxonomyError> {
        if source.trim_start().starts_with('{') {
            Self::parse_json(source)
        } else {
            Self::parse_edge_list(source)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TaxonomyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse_edge_list(source: &str) -> Result<Self, TaxonomyError> {
        let mut edges = Vec::new();
        let mut label = None;
        for (i, raw) in source.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(l) = comment.trim().strip_prefix(ROOT_LABEL_DIRECTIVE) {
                    label = Some(Entity::new(l).map_err(|e| TaxonomyError::Syntax {
                        line: line_no,
                        message: e.to_string(),
                    })?);
                }
                continue;
            }
            let (p, c) = line.split_once('\t').ok_or_else(|| TaxonomyError::Syntax {
                line: line_no,
                message: "expected `parent<TAB>child`".into(),
            })?;
            let syntax = |e: TaxonomyError| TaxonomyError::Syntax {
                line: line_no,
                message: e.to_string(),
            };
            if c.contains('\t') {
                return Err(TaxonomyError::Syntax {
                    line: line_no,
                    message: "more than two columns".into(),
                });
            }
            let parent = if p.trim() == ROOT_TOKEN {
                Node::Root
            } else {
                Node::Entity(Entity::new(p).map_err(syntax)?)
            };
            if c.trim() == ROOT_TOKEN {
                return Err(TaxonomyError::Syntax {
                    line: line_no,
                    message: "ROOT cannot be a child".into(),
                });
            }
            edges.push((parent, Entity::new(c).map_err(syntax)?));
        }
        let mut t = Self::from_edges(edges)?;
        t.root_label = label;
        Ok(t)
    }

    pub fn parse_json(source: &str) -> Result<Self, TaxonomyError> {
        #[derive(Deserialize)]
        struct JsonNode {
            name: String,
            #[serde(default)]
            label: Option<String>,
            #[serde(default)]
            children: Vec<JsonNode>,
        }
        fn walk(
            parent: &Node,
            n: &JsonNode,
            out: &mut Vec<(Node, Entity)>,
        ) -> Result<(), TaxonomyError> {
            if n.name.trim() == ROOT_TOKEN {
                return Err(TaxonomyError::Json("ROOT cannot be a child".into()));
            }
            let e = Entity::new(n.name.as_str())?;
            out.push((parent.clone(), e.clone()));
            let me = Node::Entity(e);
            for c in &n.children {
                walk(&me, c, out)?;
            }
            Ok(())
        }

        let root: JsonNode =
            serde_json::from_str(source).map_err(|e| TaxonomyError::Json(e.to_string()))?;
        if root.name != ROOT_TOKEN {
            return Err(TaxonomyError::Json(format!(
                "top-level name must be `{ROOT_TOKEN}`, found `{}`",
                root.name
            )));
        }
        let mut edges = Vec::new();
        for c in &root.children {
            walk(&Node::Root, c, &mut edges)?;
        }
        let mut t = Self::from_edges(edges)?;
        t.root_label = root.label.map(Entity::new).transpose()?;
        Ok(t)
    }

    /// Serialize as an edge list, one edge per node in taxonomy order.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        if let Some(l) = &self.root_label {
            out.push_str(&format!("# {ROOT_LABEL_DIRECTIVE} {}\n", l.surface()));
        }
        for (i, c) in self.entities.iter().enumerate() {
            let p_name = match self.parent[i] {
                None => ROOT_TOKEN,
                Some(p) => self.entities[p].surface(),
            };
            out.push_str(p_name);
            out.push('\t');
            out.push_str(c.surface());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        fn node(t: &Taxonomy, i: usize) -> serde_json::Value {
            let mut obj = serde_json::Map::new();
            obj.insert("name".into(), t.entities[i].surface().into());
            if !t.children[i].is_empty() {
                let kids = t.children[i].iter().map(|&c| node(t, c)).collect();
                obj.insert("children".into(), serde_json::Value::Array(kids));
            }
            serde_json::Value::Object(obj)
        }
        let mut root = serde_json::Map::new();
        root.insert("name".into(), ROOT_TOKEN.into());
        if let Some(l) = &self.root_label {
            root.insert("label".into(), l.surface().into());
        }
        let kids = self.root_children.iter().map(|&c| node(self, c)).collect();
        root.insert("children".into(), serde_json::Value::Array(kids));
        serde_json::Value::Object(root)
    }

    /// Optional meaningful name of the root class.
    pub fn root_label(&self) -> Option<&Entity> {
        self.root_label.as_ref()
    }

    pub fn with_root_label(mut self, label: Option<Entity>) -> Self {
        self.root_label = label;
        self
    }

    /// Entity standing in for ROOT in prompts: its label, else `ROOT`.
    pub fn root_entity(&self) -> Entity {
        self.root_label
            .clone()
            .unwrap_or_else(|| Entity::new(ROOT_TOKEN).expect("non-empty token"))
    }

    /// Number of non-root nodes.
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Non-root nodes in taxonomy order.
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn contains(&self, e: &Entity) -> bool {
        self.index.contains_key(e.norm())
    }

    pub fn get(&self, norm: &str) -> Option<&Entity> {
        self.index.get(norm).map(|&i| &self.entities[i])
    }

    fn slot(&self, n: &Node) -> Result<Slot, TaxonomyError> {
        match n {
            Node::Root => Ok(None),
            Node::Entity(e) => self
                .index
                .get(e.norm())
                .map(|&i| Some(i))
                .ok_or_else(|| TaxonomyError::UnknownNode(e.surface().to_string())),
        }
    }

    fn node_at(&self, s: Slot) -> Node {
        match s {
            None => Node::Root,
            Some(i) => Node::Entity(self.entities[i].clone()),
        }
    }

    fn slot_depth(&self, s: Slot) -> usize {
        s.map_or(1, |i| self.depth[i])
    }

    pub fn parent(&self, e: &Entity) -> Result<Node, TaxonomyError> {
        let i = self.slot(&Node::Entity(e.clone()))?.expect("entity slot");
        Ok(self.node_at(self.parent[i]))
    }

    pub fn children(&self, n: &Node) -> Result<Vec<Entity>, TaxonomyError> {
        let ids = match self.slot(n)? {
            None => &self.root_children,
            Some(i) => &self.children[i],
        };
        Ok(ids.iter().map(|&c| self.entities[c].clone()).collect())
    }

    /// `depth(ROOT) == 1`, otherwise one more than the parent.
    pub fn depth(&self, n: &Node) -> Result<usize, TaxonomyError> {
        Ok(self.slot_depth(self.slot(n)?))
    }

    /// Deepest node that is an ancestor-or-self of both `a` and `b`.
    pub fn lowest_common_ancestor(&self, a: &Node, b: &Node) -> Result<Node, TaxonomyError> {
        let (mut x, mut y) = (self.slot(a)?, self.slot(b)?);
        while self.slot_depth(x) > self.slot_depth(y) {
            x = self.parent[x.expect("non-root is deeper")];
        }
        while self.slot_depth(y) > self.slot_depth(x) {
            y = self.parent[y.expect("non-root is deeper")];
        }
        while x != y {
            x = self.parent[x.expect("distinct nodes at equal depth")];
            y = self.parent[y.expect("distinct nodes at equal depth")];
        }
        Ok(self.node_at(x))
    }

    /// Copy of this taxonomy with `child` added under `parent`.
    pub fn attach(&self, child: Entity, parent: &Node) -> Result<Taxonomy, TaxonomyError> {
        if self.contains(&child) {
            return Err(TaxonomyError::DuplicateNode(child.surface().to_string()));
        }
        let slot = self.slot(parent)?;
        let mut t = self.clone();
        t.push(child, slot);
        Ok(t)
    }

    /// Deepest layer index (0 when only ROOT exists).
    pub fn num_layers(&self) -> usize {
        self.depth.iter().max().map_or(0, |d| d - 1)
    }

    /// Nodes of layer `l` in taxonomy order. Layer 1 = children of ROOT.
    pub fn layer(&self, l: usize) -> Vec<Entity> {
        self.entities
            .iter()
            .zip(&self.depth)
            .filter(|(_, &d)| d == l + 1)
            .map(|(e, _)| e.clone())
            .collect()
    }

    /// `(child, parent)` pairs in taxonomy order.
    pub fn edges(&self) -> impl Iterator<Item = (&Entity, Node)> + '_ {
        self.entities
            .iter()
            .zip(&self.parent)
            .map(|(e, &p)| (e, self.node_at(p)))
    }

    /// Parents that have at least one child, ROOT first when it has children.
    pub fn parents(&self) -> Vec<Node> {
        let mut out = Vec::new();
        if !self.root_children.is_empty() {
            out.push(Node::Root);
        }
        out.extend(
            self.entities
                .iter()
                .zip(&self.children)
                .filter(|(_, c)| !c.is_empty())
                .map(|(e, _)| Node::Entity(e.clone())),
        );
        out
    }

    pub fn is_leaf(&self, e: &Entity) -> bool {
        self.index
            .get(e.norm())
            .is_some_and(|&i| self.children[i].is_empty())
    }

    /// Class of `seeds`: every node at their common depth under the lowest
    /// common ancestor of their parents. For sibling seeds this is the
    /// sibling group.
    pub fn class_of(&self, seeds: &[Entity]) -> Result<SeedClass, TaxonomyError> {
        if seeds.is_empty() {
            return Err(TaxonomyError::EmptyEntity);
        }
        let mut slots = Vec::with_capacity(seeds.len());
        for s in seeds {
            slots.push(self.slot(&Node::Entity(s.clone()))?.expect("entity slot"));
        }
        let depth = self.depth[slots[0]];
        if slots.iter().any(|&i| self.depth[i] != depth) {
            let names: Vec<&str> = seeds.iter().map(Entity::surface).collect();
            return Err(TaxonomyError::MixedDepth(names.join(", ")));
        }
        let mut anchor = self.node_at(self.parent[slots[0]]);
        for &i in &slots[1..] {
            anchor = self.lowest_common_ancestor(&anchor, &self.node_at(self.parent[i]))?;
        }
        let anchor_slot = self.slot(&anchor)?;
        let members = (0..self.entities.len())
            .filter(|&i| self.depth[i] == depth)
            .filter(|&i| {
                let mut cur = Some(i);
                while self.slot_depth(cur) > self.slot_depth(anchor_slot) {
                    cur = self.parent[cur.expect("deeper than anchor")];
                }
                cur == anchor_slot
            })
            .map(|i| self.entities[i].clone())
            .collect();
        Ok(SeedClass {
            anchor,
            depth,
            members,
        })
    }

    /// Node set and parent map equality, ignoring order and root label.
    pub fn same_structure(&self, other: &Taxonomy) -> bool {
        self.len() == other.len()
            && self.edges().all(|(e, p)| match other.parent(e) {
                Ok(q) => q == p,
                Err(_) => false,
            })
    }
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.same_structure(other) && self.root_label == other.root_label
    }
}
