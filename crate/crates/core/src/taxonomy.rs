//! Rooted class hierarchies built from an ingested hypernym graph.
//!
//! Hierarchy construction is a depth-first search per class: senses are
//! tried in file order, hypernym edges in file order, and the first path
//! reaching the required root wins. Accepted paths are merged into a tree
//! whose leaves are the dataset classes. Single-child chains are kept.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hypernym graph plus the candidate concepts (senses) of each class name.
///
/// Edge and sense order is preserved from the input files; it determines the
/// DFS traversal order and therefore the constructed tree.
#[derive(Clone, Debug, Default)]
pub struct LexicalGraph {
    hypernyms: HashMap<String, Vec<String>>,
    nodes: HashSet<String>,
    senses: HashMap<String, Vec<String>>,
}

impl LexicalGraph {
    pub fn new() -> Self {
        LexicalGraph::default()
    }

    /// Adds a directed child→hypernym edge; both endpoints become nodes.
    pub fn add_edge(&mut self, child: impl Into<String>, hypernym: impl Into<String>) {
        let child = child.into();
        let hypernym = hypernym.into();
        self.nodes.insert(child.clone());
        self.nodes.insert(hypernym.clone());
        self.hypernyms.entry(child).or_default().push(hypernym);
    }

    pub fn set_senses(&mut self, class_name: impl Into<String>, senses: Vec<String>) {
        self.senses.insert(class_name.into(), senses);
    }

    pub fn contains_node(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    pub fn senses_of(&self, class_name: &str) -> Option<&[String]> {
        self.senses.get(class_name).map(|v| v.as_slice())
    }

    /// Loads the TSV edge file (`child<TAB>hypernym` per line) and the JSON
    /// senses file (`{"class name": ["concept", …]}`).
    pub fn read(edges_tsv: impl AsRef<Path>, senses_json: impl AsRef<Path>) -> Result<Self> {
        let mut graph = LexicalGraph::new();
        let edges_path = edges_tsv.as_ref();
        let file = std::fs::File::open(edges_path)?;
        for (line_no, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            match (parts.next(), parts.next()) {
                (Some(child), Some(hypernym)) if !child.is_empty() && !hypernym.is_empty() => {
                    graph.add_edge(child.trim(), hypernym.trim());
                }
                _ => {
                    return Err(Error::Parse {
                        path: edges_path.display().to_string(),
                        line: line_no + 1,
                        message: "expected `child<TAB>hypernym`".into(),
                    });
                }
            }
        }
        let senses_text = std::fs::read_to_string(senses_json.as_ref())?;
        let senses: BTreeMap<String, Vec<String>> = serde_json::from_str(&senses_text)?;
        for (class_name, class_senses) in senses {
            graph.set_senses(class_name, class_senses);
        }
        Ok(graph)
    }
}

/// A rooted tree whose leaves are dataset classes.
///
/// Equality is structural (names, class ids, child order), independent of
/// how node indices happen to be laid out.
#[derive(Clone, Debug)]
pub struct Taxonomy {
    nodes: Vec<TaxNode>,
    root: usize,
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        fn subtree_eq(a: &Taxonomy, ai: usize, b: &Taxonomy, bi: usize) -> bool {
            let (na, nb) = (&a.nodes[ai], &b.nodes[bi]);
            na.name == nb.name
                && na.class_id == nb.class_id
                && na.children.len() == nb.children.len()
                && na
                    .children
                    .iter()
                    .zip(&nb.children)
                    .all(|(&ca, &cb)| subtree_eq(a, ca, b, cb))
        }
        subtree_eq(self, self.root, other, other.root)
    }
}

impl Eq for Taxonomy {}

#[derive(Clone, Debug, PartialEq)]
pub struct TaxNode {
    pub name: String,
    pub class_id: Option<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// Nested serialization format.
#[derive(Serialize, Deserialize)]
struct TaxonomyJson {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<TaxonomyJson>,
}

impl Taxonomy {
    /// Starts a taxonomy containing only the root.
    pub fn with_root(name: impl Into<String>) -> Self {
        Taxonomy {
            nodes: vec![TaxNode {
                name: name.into(),
                class_id: None,
                parent: None,
                children: Vec::new(),
            }],
            root: 0,
        }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, index: usize) -> &TaxNode {
        &self.nodes[index]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Adds an internal node under `parent` and returns its index.
    pub fn add_internal(&mut self, parent: usize, name: impl Into<String>) -> usize {
        self.push_node(parent, name.into(), None)
    }

    /// Adds a class leaf under `parent` and returns its index.
    pub fn add_leaf(&mut self, parent: usize, name: impl Into<String>, class_id: usize) -> usize {
        self.push_node(parent, name.into(), Some(class_id))
    }

    fn push_node(&mut self, parent: usize, name: String, class_id: Option<usize>) -> usize {
        let index = self.nodes.len();
        self.nodes.push(TaxNode {
            name,
            class_id,
            parent: Some(parent),
            children: Vec::new(),
        });
        self.nodes[parent].children.push(index);
        index
    }

    /// Class ids of all leaves, ascending.
    pub fn leaf_class_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.nodes.iter().filter_map(|n| n.class_id).collect();
        ids.sort_unstable();
        ids
    }

    fn leaf_index_of(&self, class_id: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.class_id == Some(class_id))
    }

    /// Leaf class ids within the subtree rooted at `index`.
    fn leaves_under(&self, index: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![index];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if let Some(c) = node.class_id {
                out.push(c);
            }
            stack.extend(node.children.iter().copied());
        }
        out.sort_unstable();
        out
    }

    /// All leaf classes under the first ancestor of `class_id` with at least
    /// two children, excluding `class_id` itself. Empty for a single-leaf
    /// taxonomy.
    pub fn semantic_candidates(&self, class_id: usize) -> Result<BTreeSet<usize>> {
        let leaf = self.leaf_index_of(class_id).ok_or_else(|| {
            Error::Domain(format!("class {class_id} is not a leaf of the taxonomy"))
        })?;
        let mut current = leaf;
        loop {
            match self.nodes[current].parent {
                Some(parent) => {
                    current = parent;
                    if self.nodes[current].children.len() >= 2 {
                        break;
                    }
                }
                None => {
                    // Reached the root without branching.
                    return Ok(BTreeSet::new());
                }
            }
        }
        Ok(self
            .leaves_under(current)
            .into_iter()
            .filter(|&c| c != class_id)
            .collect())
    }

    /// Restricts the taxonomy to the given leaf classes, dropping internal
    /// nodes left without leaf descendants. The root always survives.
    pub fn prune_to_classes(&self, keep: &BTreeSet<usize>) -> Result<Taxonomy> {
        if keep.is_empty() {
            return Err(Error::domain("prune_to_classes: empty keep set"));
        }
        let leaves: BTreeSet<usize> = self.leaf_class_ids().into_iter().collect();
        if let Some(&missing) = keep.iter().find(|c| !leaves.contains(c)) {
            return Err(Error::Domain(format!(
                "prune_to_classes: class {missing} is not a leaf"
            )));
        }
        let mut retain = vec![false; self.nodes.len()];
        retain[self.root] = true;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.class_id.map(|c| keep.contains(&c)).unwrap_or(false) {
                let mut current = i;
                loop {
                    if retain[current] {
                        break;
                    }
                    retain[current] = true;
                    match self.nodes[current].parent {
                        Some(p) => current = p,
                        None => break,
                    }
                }
            }
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if retain[i] {
                remap[i] = nodes.len();
                nodes.push(TaxNode {
                    name: node.name.clone(),
                    class_id: node.class_id,
                    parent: node.parent.map(|p| remap[p]),
                    children: Vec::new(),
                });
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if retain[i] {
                for &c in &node.children {
                    if retain[c] {
                        let new_parent = remap[i];
                        let new_child = remap[c];
                        nodes[new_parent].children.push(new_child);
                    }
                }
            }
        }
        Ok(Taxonomy {
            nodes,
            root: remap[self.root],
        })
    }

    /// Rewrites leaf class ids through `map`; leaves without an entry are an
    /// error.
    pub fn with_class_ids_remapped(&self, map: &BTreeMap<usize, usize>) -> Result<Taxonomy> {
        let mut out = self.clone();
        for node in &mut out.nodes {
            if let Some(old) = node.class_id {
                let new = map.get(&old).ok_or_else(|| {
                    Error::Domain(format!("class id {old} missing from remap table"))
                })?;
                node.class_id = Some(*new);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_nested(self.root))?)
    }

    fn to_nested(&self, index: usize) -> TaxonomyJson {
        let node = &self.nodes[index];
        TaxonomyJson {
            name: node.name.clone(),
            class_id: node.class_id,
            children: node.children.iter().map(|&c| self.to_nested(c)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Taxonomy> {
        let nested: TaxonomyJson = serde_json::from_str(text)?;
        let mut tax = Taxonomy::with_root(nested.name.clone());
        tax.nodes[0].class_id = nested.class_id;
        fn attach(tax: &mut Taxonomy, parent: usize, children: &[TaxonomyJson]) {
            for child in children {
                let idx = match child.class_id {
                    Some(c) => tax.add_leaf(parent, child.name.clone(), c),
                    None => tax.add_internal(parent, child.name.clone()),
                };
                attach(tax, idx, &child.children);
            }
        }
        attach(&mut tax, 0, &nested.children);
        Ok(tax)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Taxonomy> {
        Taxonomy::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Builds the class hierarchy by merging one accepted root path per class.
///
/// For each class the senses are tried in order and a depth-first search
/// follows hypernym edges in insertion order; the first path that reaches
/// `required_root` is kept. `overrides` substitutes a forced start concept
/// for specific class names. Classes with no path to the root are collected
/// into one error.
pub fn build_hierarchy(
    class_names: &[String],
    graph: &LexicalGraph,
    required_root: &str,
    overrides: &BTreeMap<String, String>,
) -> Result<Taxonomy> {
    if class_names.is_empty() {
        return Err(Error::domain("build_hierarchy: no classes given"));
    }
    {
        let mut seen = HashSet::new();
        for name in class_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Domain(format!("duplicate class name `{name}`")));
            }
        }
    }
    if !graph.contains_node(required_root) {
        return Err(Error::Config(format!(
            "required root `{required_root}` is not a node of the graph"
        )));
    }

    let mut taxonomy = Taxonomy::with_root(required_root);
    let mut concept_index: HashMap<String, usize> = HashMap::new();
    concept_index.insert(required_root.to_string(), taxonomy.root());
    let mut unresolved = Vec::new();

    for (class_id, class_name) in class_names.iter().enumerate() {
        let starts: Vec<&str> = match overrides.get(class_name) {
            Some(forced) => vec![forced.as_str()],
            None => match graph.senses_of(class_name) {
                Some(senses) if !senses.is_empty() => {
                    senses.iter().map(|s| s.as_str()).collect()
                }
                _ => {
                    unresolved.push(class_name.clone());
                    continue;
                }
            },
        };
        let mut accepted: Option<Vec<String>> = None;
        for start in starts {
            if let Some(path) = dfs_path_to_root(graph, start, required_root) {
                accepted = Some(path);
                break;
            }
        }
        let Some(path) = accepted else {
            unresolved.push(class_name.clone());
            continue;
        };
        // Merge the path into the tree from the root end; the parent of a
        // concept is fixed by the first path that introduced it.
        for t in (0..path.len().saturating_sub(1)).rev() {
            let parent_idx = concept_index[&path[t + 1]];
            if !concept_index.contains_key(&path[t]) {
                let idx = taxonomy.add_internal(parent_idx, path[t].clone());
                concept_index.insert(path[t].clone(), idx);
            }
        }
        let attach_to = concept_index[&path[0]];
        taxonomy.add_leaf(attach_to, class_name.clone(), class_id);
    }

    if !unresolved.is_empty() {
        return Err(Error::UnresolvedClasses(unresolved));
    }
    Ok(taxonomy)
}

/// First DFS path from `start` to `root`, as `[start, …, root]`.
fn dfs_path_to_root(graph: &LexicalGraph, start: &str, root: &str) -> Option<Vec<String>> {
    if !graph.contains_node(start) {
        return None;
    }
    let mut visited: HashSet<&str> = HashSet::new();
    let mut path: Vec<&str> = Vec::new();

    fn dfs<'a>(
        graph: &'a LexicalGraph,
        node: &'a str,
        root: &str,
        visited: &mut HashSet<&'a str>,
        path: &mut Vec<&'a str>,
    ) -> bool {
        visited.insert(node);
        path.push(node);
        if node == root {
            return true;
        }
        if let Some(hypernyms) = graph.hypernyms.get(node) {
            for hypernym in hypernyms {
                if !visited.contains(hypernym.as_str())
                    && dfs(graph, hypernym, root, visited, path)
                {
                    return true;
                }
            }
        }
        path.pop();
        false
    }

    if dfs(graph, start, root, &mut visited, &mut path) {
        Some(path.into_iter().map(String::from).collect())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn bird_graph() -> LexicalGraph {
        let mut g = LexicalGraph::new();
        g.add_edge("sparrow.n.01", "passerine.n.01");
        g.add_edge("warbler.n.01", "passerine.n.01");
        g.add_edge("passerine.n.01", "bird");
        g.set_senses("sparrow", vec!["sparrow.n.01".into()]);
        g.set_senses("warbler", vec!["warbler.n.01".into()]);
        g
    }

    #[test]
    fn two_classes_branch_under_shared_hypernym() {
        let tax = build_hierarchy(
            &names(&["sparrow", "warbler"]),
            &bird_graph(),
            "bird",
            &BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(tax.leaf_class_ids(), vec![0, 1]);
        // root -> passerine -> {sparrow, warbler}
        let root = tax.node(tax.root());
        assert_eq!(root.children.len(), 1);
        let passerine = tax.node(root.children[0]);
        assert_eq!(passerine.name, "passerine.n.01");
        assert_eq!(passerine.children.len(), 2);
    }

    #[test]
    fn degenerate_chain_reaches_root() {
        let mut g = LexicalGraph::new();
        g.add_edge("a1", "a2");
        g.add_edge("a2", "a3");
        g.add_edge("a3", "root");
        g.set_senses("a", vec!["a1".into()]);
        let tax = build_hierarchy(&names(&["a"]), &g, "root", &BTreeMap::new()).unwrap();
        assert_eq!(tax.leaf_class_ids(), vec![0]);
        // Single-child chain is kept; the leaf's first branching ancestor is
        // the root itself, so there are no candidates.
        assert_eq!(tax.node_count(), 5);
        assert!(tax.semantic_candidates(0).unwrap().is_empty());
    }

    #[test]
    fn unresolved_class_is_an_error() {
        let mut g = bird_graph();
        g.add_edge("pigeon.n.01", "dove.n.01");
        g.set_senses("pigeon", vec!["pigeon.n.01".into()]);
        let err = build_hierarchy(
            &names(&["sparrow", "pigeon"]),
            &g,
            "bird",
            &BTreeMap::new(),
        )
        .unwrap_err();
        match err {
            Error::UnresolvedClasses(classes) => assert_eq!(classes, vec!["pigeon".to_string()]),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn override_forces_attachment() {
        let mut g = bird_graph();
        g.set_senses("pigeon", vec!["pigeon.n.01".into()]);
        let mut overrides = BTreeMap::new();
        overrides.insert("pigeon".to_string(), "passerine.n.01".to_string());
        let tax = build_hierarchy(&names(&["sparrow", "pigeon"]), &g, "bird", &overrides).unwrap();
        let candidates = tax.semantic_candidates(1).unwrap();
        assert_eq!(candidates, BTreeSet::from([0]));
    }

    #[test]
    fn sense_order_determines_path() {
        // Two senses of "bass": the fish sense is listed first and reaches
        // the root, so it wins even though the instrument sense also would.
        let mut g = LexicalGraph::new();
        g.add_edge("bass.n.01", "fish.n.01");
        g.add_edge("fish.n.01", "animal");
        g.add_edge("bass.n.07", "instrument.n.01");
        g.add_edge("instrument.n.01", "animal");
        g.set_senses("bass", vec!["bass.n.01".into(), "bass.n.07".into()]);
        let tax = build_hierarchy(&names(&["bass"]), &g, "animal", &BTreeMap::new()).unwrap();
        let leaf = (0..tax.node_count())
            .find(|&i| tax.node(i).class_id == Some(0))
            .unwrap();
        let parent = tax.node(leaf).parent.unwrap();
        assert_eq!(tax.node(parent).name, "bass.n.01");
    }

    fn balanced_four_leaf() -> Taxonomy {
        let mut tax = Taxonomy::with_root("root");
        let left = tax.add_internal(0, "left");
        let right = tax.add_internal(0, "right");
        tax.add_leaf(left, "a", 0);
        tax.add_leaf(left, "b", 1);
        tax.add_leaf(right, "c", 2);
        tax.add_leaf(right, "d", 3);
        tax
    }

    #[test]
    fn candidates_in_balanced_tree() {
        let tax = balanced_four_leaf();
        assert_eq!(tax.semantic_candidates(0).unwrap(), BTreeSet::from([1]));
        assert_eq!(tax.semantic_candidates(3).unwrap(), BTreeSet::from([2]));
    }

    #[test]
    fn candidates_in_star_tree() {
        let mut tax = Taxonomy::with_root("root");
        for c in 0..5 {
            tax.add_leaf(0, format!("leaf{c}"), c);
        }
        assert_eq!(
            tax.semantic_candidates(2).unwrap(),
            BTreeSet::from([0, 1, 3, 4])
        );
    }

    #[test]
    fn candidates_never_contain_self_and_are_symmetric() {
        let tax = balanced_four_leaf();
        for c in 0..4 {
            let candidates = tax.semantic_candidates(c).unwrap();
            assert!(!candidates.contains(&c));
            for &other in &candidates {
                assert!(tax.semantic_candidates(other).unwrap().contains(&c));
            }
        }
    }

    #[test]
    fn prune_keeps_structure() {
        let tax = balanced_four_leaf();
        let all: BTreeSet<usize> = [0, 1, 2, 3].into();
        assert_eq!(tax.prune_to_classes(&all).unwrap(), tax);

        let one: BTreeSet<usize> = [2].into();
        let pruned = tax.prune_to_classes(&one).unwrap();
        assert_eq!(pruned.leaf_class_ids(), vec![2]);
        // root -> right -> c
        assert_eq!(pruned.node_count(), 3);

        assert!(tax.prune_to_classes(&BTreeSet::new()).is_err());
    }

    #[test]
    fn prune_six_leaf_fixture() {
        let mut tax = Taxonomy::with_root("root");
        let x = tax.add_internal(0, "x");
        let y = tax.add_internal(0, "y");
        let z = tax.add_internal(y, "z");
        tax.add_leaf(x, "a", 0);
        tax.add_leaf(x, "b", 1);
        tax.add_leaf(y, "c", 2);
        tax.add_leaf(z, "d", 3);
        tax.add_leaf(z, "e", 4);
        tax.add_leaf(0, "f", 5);

        let keep: BTreeSet<usize> = [0, 3, 4].into();
        let pruned = tax.prune_to_classes(&keep).unwrap();
        assert_eq!(pruned.leaf_class_ids(), vec![0, 3, 4]);
        // Hand-pruned result: root -> {x -> a, y -> z -> {d, e}}.
        let root = pruned.node(pruned.root());
        assert_eq!(root.children.len(), 2);
        let x = pruned.node(root.children[0]);
        assert_eq!((x.name.as_str(), x.children.len()), ("x", 1));
        let y = pruned.node(root.children[1]);
        assert_eq!((y.name.as_str(), y.children.len()), ("y", 1));
        let z = pruned.node(y.children[0]);
        assert_eq!((z.name.as_str(), z.children.len()), ("z", 2));
    }

    #[test]
    fn prune_then_build_matches_build_on_reduced_set() {
        let g = bird_graph();
        let full = build_hierarchy(
            &names(&["sparrow", "warbler"]),
            &g,
            "bird",
            &BTreeMap::new(),
        )
        .unwrap();
        let keep: BTreeSet<usize> = [0].into();
        let pruned = full.prune_to_classes(&keep).unwrap();
        let rebuilt =
            build_hierarchy(&names(&["sparrow"]), &g, "bird", &BTreeMap::new()).unwrap();
        assert_eq!(pruned, rebuilt);
    }

    #[test]
    fn json_round_trip() {
        let tax = balanced_four_leaf();
        let text = tax.to_json().unwrap();
        let back = Taxonomy::from_json(&text).unwrap();
        assert_eq!(tax, back);
    }
}
