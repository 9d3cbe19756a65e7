//! Batch data as CSV: one column per node, named by node, one row per
//! batch. An empty cell means the node was not observed in that batch.

use std::io::Read;
use std::path::Path;

use bn_shapley_core::data::{BatchDataset, DataError};
use bn_shapley_core::model::{NodeId, ProcessGraph};

use crate::error::{Error, Result};

pub fn read_data<R: Read>(reader: R, graph: &ProcessGraph) -> Result<BatchDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::HeaderMismatch(e.to_string()))?
        .clone();
    let mut column_node = Vec::with_capacity(header.len());
    let mut seen = vec![false; graph.node_count()];
    for name in header.iter() {
        let id = graph
            .node_id(name)
            .ok_or_else(|| Error::HeaderMismatch(format!("column `{name}` is not a node")))?;
        if std::mem::replace(&mut seen[id.0], true) {
            return Err(Error::HeaderMismatch(format!("column `{name}` appears twice")));
        }
        column_node.push(id);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::HeaderMismatch(format!("no column for node `{}`", graph.name(NodeId(missing)))));
    }

    let mut data = BatchDataset::new(graph.node_count());
    let mut values = vec![None; graph.node_count()];
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::DataRow { row, message: e.to_string() })?;
        for (cell, &node) in record.iter().zip(&column_node) {
            values[node.0] = if cell.is_empty() {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                    row,
                    column: graph.name(node).to_string(),
                    cell: cell.to_string(),
                })?;
                Some(v)
            };
        }
        data.push_partial(graph, &values).map_err(|e| match e {
            DataError::ScopeNotParentClosed { node, .. } => Error::DataRow {
                row,
                message: format!("scope is not parent-closed: `{}` is observed without all its parents", graph.name(node)),
            },
            DataError::NonFinite { node, .. } => Error::NonNumericCell {
                row,
                column: graph.name(node).to_string(),
                cell: "non-finite".into(),
            },
            other => Error::DataRow { row, message: other.to_string() },
        })?;
    }
    Ok(data)
}

pub fn load_data(path: &Path, graph: &ProcessGraph) -> Result<BatchDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_data(file, graph)
}

/// CSV text with columns in node order and shortest round-trip numbers.
pub fn data_to_csv(data: &BatchDataset, graph: &ProcessGraph) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(graph.nodes().map(|n| graph.name(n))).expect("in-memory write");
    for r in 0..data.len() {
        let cells: Vec<String> = graph
            .nodes()
            .map(|n| data.value(r, n).map(|v| format!("{v:?}")).unwrap_or_default())
            .collect();
        wtr.write_record(&cells).expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use bn_shapley_core::model::{build_graph, NodeKind};

    fn graph() -> ProcessGraph {
        build_graph(&[("A", NodeKind::Cpp), ("B", NodeKind::Response)], &[("A", "B")]).unwrap()
    }

    #[test]
    fn columns_in_any_order() {
        let d = read_data("B,A\n2.5,1\n,3\n".as_bytes(), &graph()).unwrap();
        assert_eq!(d.value(0, NodeId(0)), Some(1.0));
        assert_eq!(d.value(1, NodeId(1)), None);
        assert_eq!(d.incomplete_count(), 1);
    }

    #[test]
    fn bad_cells_and_scopes() {
        assert!(matches!(
            read_data("A,B\n1,x\n".as_bytes(), &graph()),
            Err(Error::NonNumericCell { row: 1, .. })
        ));
        assert!(matches!(read_data("A,B\n1,2\n,2\n".as_bytes(), &graph()), Err(Error::DataRow { row: 2, .. })));
        assert!(matches!(read_data("A,C\n".as_bytes(), &graph()), Err(Error::HeaderMismatch(_))));
        assert!(matches!(read_data("A\n1\n".as_bytes(), &graph()), Err(Error::HeaderMismatch(_))));
    }

    #[test]
    fn round_trip() {
        let g = graph();
        let d = read_data("A,B\n0.1,1e-300\n7,\n".as_bytes(), &g).unwrap();
        let again = read_data(data_to_csv(&d, &g).as_bytes(), &g).unwrap();
        assert_eq!(d, again);
    }
}
