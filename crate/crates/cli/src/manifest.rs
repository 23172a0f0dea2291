//! Dataset directories: graph text files plus a `manifest.json` that lists
//! every file with its label, and the split as ordered index lists.

use std::path::{Path, PathBuf};

use leap_core::dataset::DatasetSplit;
use leap_core::graph::{induced_subgraph, Graph};
use leap_core::trainer::{Task, TaskData};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::format::{parse_graph, serialize_graph};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT: &str = "leap-dataset";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub task: Task,
    pub split_ratios: [f64; 3],
    /// Generator parameters that produced the files.
    pub generator: serde_json::Value,
    pub graphs: Vec<Entry>,
    /// Node tasks: one label per node of the single graph.
    pub node_labels: Option<Vec<usize>>,
    /// Indices into `graphs` (graph tasks) or nodes (node tasks), in the
    /// order training visits them.
    pub split: DatasetSplit,
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes one file per graph under `dir/graphs/` and the manifest. Returns
/// the manifest path.
pub fn write_graph_dataset(
    dir: &Path,
    graphs: &[Graph],
    split: &DatasetSplit,
    ratios: [f64; 3],
    generator: serde_json::Value,
) -> CliResult<PathBuf> {
    let gdir = dir.join("graphs");
    std::fs::create_dir_all(&gdir).map_err(|e| CliError::io(&gdir, e))?;
    let width = graphs.len().to_string().len().max(4);
    let mut entries = Vec::with_capacity(graphs.len());
    for (i, g) in graphs.iter().enumerate() {
        let file = format!("graphs/g{i:0width$}.txt");
        write_file(&dir.join(&file), &serialize_graph(g))?;
        entries.push(Entry {
            file,
            label: g.graph_label,
        });
    }
    write_manifest(
        dir,
        &Manifest {
            format: FORMAT.into(),
            version: VERSION,
            task: Task::Graph,
            split_ratios: ratios,
            generator,
            graphs: entries,
            node_labels: None,
            split: split.clone(),
        },
    )
}

/// Writes a single node-labelled graph and its manifest.
pub fn write_node_dataset(
    dir: &Path,
    graph: &Graph,
    split: &DatasetSplit,
    ratios: [f64; 3],
    generator: serde_json::Value,
) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let labels = graph
        .node_labels
        .clone()
        .ok_or_else(|| CliError::Config("node dataset needs node labels".into()))?;
    let file = "graph.txt".to_string();
    write_file(&dir.join(&file), &serialize_graph(graph))?;
    write_manifest(
        dir,
        &Manifest {
            format: FORMAT.into(),
            version: VERSION,
            task: Task::Node,
            split_ratios: ratios,
            generator,
            graphs: vec![Entry { file, label: None }],
            node_labels: Some(labels),
            split: split.clone(),
        },
    )
}

fn write_manifest(dir: &Path, m: &Manifest) -> CliResult<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
    text.push('\n');
    write_file(&path, &text)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(CliError::Config(format!(
            "{}: expected {FORMAT} version {VERSION}, found {} version {}",
            path.display(),
            m.format,
            m.version
        )));
    }
    Ok(m)
}

fn read_graph(base: &Path, file: &str) -> CliResult<Graph> {
    let path = base.join(file);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    parse_graph(&text).map_err(|e| CliError::Parse {
        path,
        line: e.line,
        message: e.message,
    })
}

/// Every index in range and none listed twice.
fn check_split(split: &DatasetSplit, len: usize) -> Result<(), String> {
    let mut seen = vec![false; len];
    for &i in split.train.iter().chain(&split.val).chain(&split.test) {
        if i >= len {
            return Err(format!("split index {i} out of range 0..{len}"));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(format!("split index {i} listed twice"));
        }
    }
    Ok(())
}

/// Loads a manifest and everything it lists. Node tasks are expanded into
/// `hops`-hop induced subgraphs.
pub fn load_dataset(manifest_path: &Path, hops: usize) -> CliResult<TaskData> {
    let m = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", manifest_path.display()));
    match m.task {
        Task::Graph => {
            let mut graphs = Vec::with_capacity(m.graphs.len());
            let mut labels = Vec::with_capacity(m.graphs.len());
            for e in &m.graphs {
                let label = e.label.ok_or_else(|| bad(format!("{} has no label", e.file)))?;
                graphs.push(read_graph(base, &e.file)?.with_graph_label(label));
                labels.push(label);
            }
            check_split(&m.split, graphs.len()).map_err(bad)?;
            Ok(TaskData::from_parts(Task::Graph, graphs, labels, m.split)?)
        }
        Task::Node => {
            let [entry] = m.graphs.as_slice() else {
                return Err(bad("node datasets list exactly one graph".into()));
            };
            let labels = m.node_labels.clone().ok_or_else(|| bad("missing node_labels".into()))?;
            let g = read_graph(base, &entry.file)?;
            if labels.len() != g.num_nodes() {
                return Err(bad(format!("{} nodes but {} labels", g.num_nodes(), labels.len())));
            }
            check_split(&m.split, g.num_nodes()).map_err(bad)?;
            let g = g.with_node_labels(labels.clone())?;
            let instances = (0..g.num_nodes())
                .map(|v| induced_subgraph(&g, v, hops).map(|s| s.subgraph))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TaskData::from_parts(Task::Node, instances, labels, m.split)?)
        }
    }
}
