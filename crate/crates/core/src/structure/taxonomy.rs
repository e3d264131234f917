use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Index of a label in its taxonomy (preorder position).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelId(pub u32);

impl LabelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// On-disk form of a taxonomy:
///
/// ```json
/// {"label": "chair", "multi_instance": false, "children": [
///   {"label": "base", "children": [{"label": "leg"}]},
///   {"label": "seat"}
/// ]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyTree {
    pub label: String,
    #[serde(default)]
    pub multi_instance: bool,
    #[serde(default)]
    pub children: Vec<TaxonomyTree>,
}

impl TaxonomyTree {
    pub fn leaf(label: &str) -> Self {
        TaxonomyTree {
            label: label.into(),
            multi_instance: false,
            children: Vec::new(),
        }
    }

    pub fn node(label: &str, children: Vec<TaxonomyTree>) -> Self {
        TaxonomyTree {
            label: label.into(),
            multi_instance: false,
            children,
        }
    }

    pub fn multi(mut self) -> Self {
        self.multi_instance = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaxonomyLabel {
    pub name: String,
    pub multi_instance: bool,
    pub parent: Option<LabelId>,
    pub children: Vec<LabelId>,
}

/// Rooted label tree. Label ids are preorder positions, so the root is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    labels: Vec<TaxonomyLabel>,
    by_name: HashMap<String, LabelId>,
}

impl Taxonomy {
    pub fn from_tree(tree: &TaxonomyTree) -> Result<Self> {
        let mut t = Taxonomy {
            labels: Vec::new(),
            by_name: HashMap::new(),
        };
        t.push(tree, None)?;
        Ok(t)
    }

    fn push(&mut self, node: &TaxonomyTree, parent: Option<LabelId>) -> Result<LabelId> {
        if node.label.is_empty() {
            return Err(Error::parse("taxonomy", "empty label name"));
        }
        let id = LabelId(self.labels.len() as u32);
        if self.by_name.insert(node.label.clone(), id).is_some() {
            return Err(Error::parse(
                "taxonomy",
                format!("label {:?} appears twice", node.label),
            ));
        }
        self.labels.push(TaxonomyLabel {
            name: node.label.clone(),
            multi_instance: node.multi_instance,
            parent,
            children: Vec::new(),
        });
        for c in &node.children {
            let cid = self.push(c, Some(id))?;
            self.labels[id.index()].children.push(cid);
        }
        Ok(id)
    }

    pub fn to_tree(&self) -> TaxonomyTree {
        self.subtree(self.root())
    }

    fn subtree(&self, id: LabelId) -> TaxonomyTree {
        let l = self.get(id);
        TaxonomyTree {
            label: l.name.clone(),
            multi_instance: l.multi_instance,
            children: l.children.iter().map(|&c| self.subtree(c)).collect(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let tree: TaxonomyTree =
            serde_json::from_str(s).map_err(|e| Error::parse("taxonomy", e))?;
        Self::from_tree(&tree)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_tree()).expect("taxonomy serializes")
    }

    pub fn root(&self) -> LabelId {
        LabelId(0)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, id: LabelId) -> bool {
        id.index() < self.labels.len()
    }

    pub fn get(&self, id: LabelId) -> &TaxonomyLabel {
        &self.labels[id.index()]
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.labels[id.index()].name
    }

    pub fn id(&self, name: &str) -> Result<LabelId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn check(&self, id: LabelId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::UnknownLabel(format!("#{}", id.0)))
        }
    }

    /// Labels from the root down to `id`, inclusive.
    pub fn chain(&self, id: LabelId) -> Vec<LabelId> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.labels[cur.index()].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    pub fn labels(&self) -> impl Iterator<Item = (LabelId, &TaxonomyLabel)> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| (LabelId(i as u32), l))
    }
}
