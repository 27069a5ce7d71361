//! FUNSD-style JSON ingestion and emission.
//!
//! ```json
//! {"form": [{"id": 0, "text": "Date:", "label": "question", "box": [x0, y0, x1, y1],
//!            "words": [{"text": "Date:", "box": [...]}], "linking": []}]}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{BBox, Document, LabelSet, TextNode, OTHER};
use crate::error::{Error, Result};

fn schema(path: &Path, message: String) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        message,
    }
}

fn parse_box(path: &Path, what: &str, v: &Value) -> Result<BBox> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| schema(path, format!("{what}: \"box\" must be 4 integers")))?;
    let mut c = [0i64; 4];
    for (slot, x) in c.iter_mut().zip(arr) {
        *slot = x
            .as_i64()
            .or_else(|| x.as_f64().map(|f| f.round() as i64))
            .ok_or_else(|| schema(path, format!("{what}: non-numeric box coordinate")))?;
    }
    let b = BBox::from(c);
    if !b.is_valid() {
        return Err(schema(path, format!("{what}: inverted box {c:?}")));
    }
    Ok(b)
}

/// Parses one FUNSD form. `path` is used for error messages and the
/// document id (its file stem).
pub fn parse_funsd_str(text: &str, path: &Path, labels: &LabelSet) -> Result<Document> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let form = root
        .get("form")
        .and_then(Value::as_array)
        .ok_or_else(|| schema(path, "missing top-level \"form\" array".into()))?;
    let mut nodes = Vec::with_capacity(form.len());
    for (pos, raw) in form.iter().enumerate() {
        let what = match raw.get("id").and_then(Value::as_i64) {
            Some(id) => format!("node id {id}"),
            None => format!("node #{pos}"),
        };
        let text = raw
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(path, format!("{what}: missing \"text\" field")))?;
        // Nodes with no words produce no tokens; dropping them keeps ids contiguous.
        if text.trim().is_empty() {
            continue;
        }
        let label = raw
            .get("label")
            .and_then(Value::as_str)
            .map(str::to_lowercase)
            .unwrap_or_else(|| OTHER.to_string());
        let label = if labels.index_of(&label).is_some() {
            label
        } else {
            OTHER.to_string()
        };
        let bbox = match raw.get("box") {
            None | Some(Value::Null) => None,
            Some(b) => Some(parse_box(path, &what, b)?),
        };
        nodes.push(TextNode {
            id: nodes.len(),
            text: text.to_string(),
            bbox,
            label,
        });
    }
    let page_size = root.get("page_size").and_then(|p| {
        let a = p.as_array()?;
        Some((a.first()?.as_u64()? as u32, a.get(1)?.as_u64()? as u32))
    });
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Document { id, nodes, page_size })
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let annotations = dir.join("annotations");
    let dir = if annotations.is_dir() { annotations } else { dir.to_path_buf() };
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads one document per form file. `path` may be a single file or a
/// directory of `*.json` files (an `annotations/` subdirectory is used when
/// present); directory entries are read in file-name order.
pub fn load_funsd_json(path: &Path, labels: &LabelSet) -> Result<Vec<Document>> {
    let files = if path.is_dir() {
        json_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
            parse_funsd_str(&text, f, labels)
        })
        .collect()
}

/// FUNSD JSON for `doc`. Word boxes split the node box evenly by word.
pub fn document_to_funsd(doc: &Document) -> Value {
    let form: Vec<Value> = doc
        .nodes
        .iter()
        .map(|n| {
            let words: Vec<&str> = n.words().collect();
            let word_values: Vec<Value> = words
                .iter()
                .enumerate()
                .map(|(k, w)| match n.bbox {
                    Some(b) => {
                        let width = b.x1 - b.x0;
                        let cnt = words.len() as i64;
                        let x0 = b.x0 + width * k as i64 / cnt;
                        let x1 = b.x0 + width * (k as i64 + 1) / cnt;
                        json!({"text": w, "box": [x0, b.y0, x1, b.y1]})
                    }
                    None => json!({"text": w}),
                })
                .collect();
            let mut v = json!({
                "id": n.id,
                "text": n.text,
                "label": n.label,
                "words": word_values,
                "linking": [],
            });
            if let Some(b) = n.bbox {
                v["box"] = json!(<[i64; 4]>::from(b));
            }
            v
        })
        .collect();
    let mut root = json!({ "form": form });
    if let Some((w, h)) = doc.page_size {
        root["page_size"] = json!([w, h]);
    }
    root
}

pub fn save_funsd_json(path: &Path, doc: &Document) -> Result<()> {
    let text = serde_json::to_string_pretty(&document_to_funsd(doc)).expect("json value serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
