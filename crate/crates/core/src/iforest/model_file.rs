//! JSON model files.
//!
//! ```text
//! {"format":"pfliforest-model/1","builder":"federated","seed":7,"max_depth":6,
//!  "train_size":200,"trees":[{"split":21.7,"left":{...},"right":{...}}, ...]}
//! ```
//!
//! A leaf is `{"split":null,"left":null,"right":null}`, optionally followed by
//! `"size"`, the number of training readings that reached it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Builder, Forest, ModelError, NodeId, Tree, TreeNode};

pub const MODEL_FORMAT: &str = "pfliforest-model/1";

#[derive(Serialize)]
struct ModelOut<'a> {
    format: &'static str,
    builder: Builder,
    seed: u64,
    max_depth: usize,
    train_size: usize,
    trees: Vec<NodeOut<'a>>,
}

struct NodeOut<'a> {
    tree: &'a Tree,
    id: NodeId,
}

impl Serialize for NodeOut<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        match *self.tree.node(self.id) {
            TreeNode::Leaf { size } => {
                let mut st = s.serialize_struct("node", 4)?;
                st.serialize_field("split", &None::<f64>)?;
                st.serialize_field("left", &None::<()>)?;
                st.serialize_field("right", &None::<()>)?;
                st.serialize_field("size", &size)?;
                st.end()
            }
            TreeNode::Split { value, left, right } => {
                let mut st = s.serialize_struct("node", 3)?;
                st.serialize_field("split", &value)?;
                st.serialize_field("left", &NodeOut { tree: self.tree, id: left })?;
                st.serialize_field("right", &NodeOut { tree: self.tree, id: right })?;
                st.end()
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    split: Option<f64>,
    left: Option<Box<NodeDoc>>,
    right: Option<Box<NodeDoc>>,
    #[serde(default)]
    size: Option<usize>,
}

#[derive(Deserialize)]
#[serde(try_from = "RawNode")]
enum NodeDoc {
    Leaf(usize),
    Split(f64, Box<NodeDoc>, Box<NodeDoc>),
}

impl TryFrom<RawNode> for NodeDoc {
    type Error = String;

    fn try_from(raw: RawNode) -> Result<Self, Self::Error> {
        match (raw.split, raw.left, raw.right) {
            (None, None, None) => Ok(NodeDoc::Leaf(raw.size.unwrap_or(0))),
            (Some(v), Some(l), Some(r)) => {
                if raw.size.is_some() {
                    return Err("internal node must not carry a size".into());
                }
                Ok(NodeDoc::Split(v, l, r))
            }
            _ => Err("node must have split, left and right all set or all null".into()),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    format: String,
    builder: Builder,
    seed: u64,
    max_depth: usize,
    train_size: usize,
    trees: Vec<NodeDoc>,
}

#[derive(Deserialize)]
#[serde(try_from = "RawModel")]
struct ModelDoc(Forest);

impl TryFrom<RawModel> for ModelDoc {
    type Error = String;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        if raw.format != MODEL_FORMAT {
            return Err(format!("unsupported format `{}`", raw.format));
        }
        let trees = raw
            .trees
            .into_iter()
            .map(|doc| tree_from_doc(doc, raw.train_size))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Forest::new(trees, raw.max_depth, raw.builder, raw.seed)
            .map(ModelDoc)
            .map_err(|e| e.to_string())
    }
}

/// Rebuilds the arena breadth-first, the same order the builders split in.
fn tree_from_doc(doc: NodeDoc, train_size: usize) -> Result<Tree, ModelError> {
    let mut tree = Tree::leaf(train_size)?;
    let mut queue = VecDeque::from([(NodeId::ROOT, doc)]);
    while let Some((id, doc)) = queue.pop_front() {
        match doc {
            NodeDoc::Leaf(size) => tree.set_leaf_size(id, size),
            NodeDoc::Split(value, l, r) => {
                let (li, ri) = tree.split(id, value, 0, 0)?;
                queue.push_back((li, *l));
                queue.push_back((ri, *r));
            }
        }
    }
    Ok(tree)
}

pub fn serialize_model(forest: &Forest) -> String {
    let doc = ModelOut {
        format: MODEL_FORMAT,
        builder: forest.builder(),
        seed: forest.seed(),
        max_depth: forest.max_depth(),
        train_size: forest.train_size(),
        trees: forest.trees().iter().map(|tree| NodeOut { tree, id: NodeId::ROOT }).collect(),
    };
    serde_json::to_string(&doc).expect("model serialization is infallible")
}

pub fn deserialize_model(text: &str) -> Result<Forest, ModelError> {
    serde_json::from_str::<ModelDoc>(text).map(|d| d.0).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iforest::build_iforest_baseline;

    fn two_tree_forest() -> Forest {
        let data = [18.5, 19.25, 21.0, 22.125, 22.5, 23.0, 24.75, 26.0];
        build_iforest_baseline(&data, 2, 3, 5).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let f = two_tree_forest();
        let text = serialize_model(&f);
        let back = deserialize_model(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(serialize_model(&back), text);
    }

    #[test]
    fn leaf_encodes_nulls() {
        let f = Forest::new(vec![Tree::leaf(3).unwrap()], 4, Builder::Federated, 1).unwrap();
        assert_eq!(
            serialize_model(&f),
            r#"{"format":"pfliforest-model/1","builder":"federated","seed":1,"max_depth":4,"train_size":3,"trees":[{"split":null,"left":null,"right":null,"size":3}]}"#
        );
    }

    #[test]
    fn size_is_optional_on_read() {
        let text = r#"{"format":"pfliforest-model/1","builder":"baseline","seed":0,"max_depth":2,"train_size":4,
            "trees":[{"split":21.5,"left":{"split":null,"left":null,"right":null},"right":{"split":null,"left":null,"right":null}}]}"#;
        let f = deserialize_model(text).unwrap();
        assert_eq!(f.trees()[0].root().split_value(), Some(21.5));
    }

    #[test]
    fn truncated_document_reports_location() {
        let text = serialize_model(&two_tree_forest());
        let cut = &text[..text.len() / 2];
        match deserialize_model(cut) {
            Err(ModelError::Parse { line, column, .. }) => {
                assert_eq!(line, 1);
                assert!(column > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn half_leaf_is_rejected() {
        let text = r#"{"format":"pfliforest-model/1","builder":"baseline","seed":0,"max_depth":2,"train_size":4,
            "trees":[{"split":21.5,"left":null,"right":null}]}"#;
        let err = deserialize_model(text).unwrap_err();
        assert!(matches!(err, ModelError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn wrong_format_and_depth_violation_rejected() {
        let leaf = r#"{"split":null,"left":null,"right":null}"#;
        let bad_format = format!(
            r#"{{"format":"other/1","builder":"baseline","seed":0,"max_depth":2,"train_size":4,"trees":[{leaf}]}}"#
        );
        assert!(deserialize_model(&bad_format).is_err());
        let deep = format!(
            r#"{{"format":"pfliforest-model/1","builder":"baseline","seed":0,"max_depth":0,"train_size":4,"trees":[{{"split":1.0,"left":{leaf},"right":{leaf}}}]}}"#
        );
        assert!(deserialize_model(&deep).is_err());
        let empty = r#"{"format":"pfliforest-model/1","builder":"baseline","seed":0,"max_depth":2,"train_size":4,"trees":[]}"#;
        assert!(deserialize_model(empty).is_err());
    }
}
