//! CSV ingestion for node-classification directories and feature-over-time
//! series. Every schema violation names the file and line.

use std::io::{BufRead, BufReader};
use std::path::Path;

use tdegnn_core::data::{window_series, ForecastDataset, NodeDataset};
use tdegnn_core::graph::Graph;
use tdegnn_core::tensor::Tensor;
use tdegnn_core::{Error, Result};

/// Numeric CSV rows with their 1-based line numbers. A non-numeric first
/// line is treated as a header and skipped.
fn read_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::data(path.display().to_string(), 0, format!("cannot open: {e}"))
    })?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<String> = trimmed.split(',').map(|f| f.trim().to_string()).collect();
        if rows.is_empty() && fields[0].parse::<f64>().is_err() {
            continue; // header
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

fn parse_index(path: &Path, line: usize, field: &str, what: &str) -> Result<usize> {
    field.parse::<usize>().map_err(|_| {
        Error::data(
            file_name(path),
            line,
            format!("{what} '{field}' is not a nonnegative integer"),
        )
    })
}

fn parse_real(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::data(file_name(path), line, format!("{what} '{field}' is not a number"))
    })
}

fn load_edges(path: &Path, node_count: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line, fields) in read_rows(path)? {
        if fields.len() != 2 {
            return Err(Error::data(
                file_name(path),
                line,
                format!("expected 'src,dst', got {} fields", fields.len()),
            ));
        }
        let src = parse_index(path, line, &fields[0], "source node id")?;
        let dst = parse_index(path, line, &fields[1], "destination node id")?;
        for id in [src, dst] {
            if id >= node_count {
                return Err(Error::data(
                    file_name(path),
                    line,
                    format!("dangling node id {id}: features declare {node_count} nodes"),
                ));
            }
        }
        if src == dst {
            return Err(Error::data(
                file_name(path),
                line,
                format!("self-loop on node {src} rejected"),
            ));
        }
        edges.push((src, dst));
    }
    Ok(edges)
}

/// Load `edges.csv`, `features.csv`, `labels.csv`, `splits.csv` from one
/// directory and cross-validate them.
pub fn load_node_dataset(dir: &Path) -> Result<NodeDataset> {
    let features_path = dir.join("features.csv");
    let rows = read_rows(&features_path)?;
    if rows.is_empty() {
        return Err(Error::data(file_name(&features_path), 0, "no feature rows"));
    }
    let node_count = rows.len();
    let width = rows[0].1.len() - 1;
    if width == 0 {
        return Err(Error::data(
            file_name(&features_path),
            rows[0].0,
            "feature rows need at least one feature column",
        ));
    }
    let mut features = vec![0.0; node_count * width];
    let mut seen = vec![false; node_count];
    for (line, fields) in &rows {
        if fields.len() != width + 1 {
            return Err(Error::data(
                file_name(&features_path),
                *line,
                format!("expected {} columns, got {}", width + 1, fields.len()),
            ));
        }
        let id = parse_index(&features_path, *line, &fields[0], "node id")?;
        if id >= node_count {
            return Err(Error::data(
                file_name(&features_path),
                *line,
                format!("node id {id} out of range: {node_count} rows declare ids 0..{node_count}"),
            ));
        }
        if seen[id] {
            return Err(Error::data(
                file_name(&features_path),
                *line,
                format!("duplicate feature row for node {id}"),
            ));
        }
        seen[id] = true;
        for (j, field) in fields[1..].iter().enumerate() {
            features[id * width + j] = parse_real(&features_path, *line, field, "feature")?;
        }
    }

    let edges = load_edges(&dir.join("edges.csv"), node_count)?;
    let graph = Graph::new(node_count, &edges)?;

    let labels_path = dir.join("labels.csv");
    let mut labels: Vec<Option<usize>> = vec![None; node_count];
    for (line, fields) in read_rows(&labels_path)? {
        if fields.len() != 2 {
            return Err(Error::data(
                file_name(&labels_path),
                line,
                format!("expected 'node_id,label', got {} fields", fields.len()),
            ));
        }
        let id = parse_index(&labels_path, line, &fields[0], "node id")?;
        if id >= node_count {
            return Err(Error::data(
                file_name(&labels_path),
                line,
                format!("dangling node id {id}"),
            ));
        }
        if labels[id].is_some() {
            return Err(Error::data(
                file_name(&labels_path),
                line,
                format!("duplicate label for node {id}"),
            ));
        }
        labels[id] = Some(parse_index(&labels_path, line, &fields[1], "label")?);
    }

    let splits_path = dir.join("splits.csv");
    let mut split_of: Vec<Option<u8>> = vec![None; node_count];
    for (line, fields) in read_rows(&splits_path)? {
        if fields.len() != 2 {
            return Err(Error::data(
                file_name(&splits_path),
                line,
                format!("expected 'node_id,split', got {} fields", fields.len()),
            ));
        }
        let id = parse_index(&splits_path, line, &fields[0], "node id")?;
        if id >= node_count {
            return Err(Error::data(
                file_name(&splits_path),
                line,
                format!("dangling node id {id}"),
            ));
        }
        let tag = match fields[1].as_str() {
            "train" => 0u8,
            "val" => 1,
            "test" => 2,
            other => {
                return Err(Error::data(
                    file_name(&splits_path),
                    line,
                    format!("unknown split tag '{other}', expected train | val | test"),
                ))
            }
        };
        if split_of[id].is_some() {
            return Err(Error::data(
                file_name(&splits_path),
                line,
                format!("duplicate split for node {id}"),
            ));
        }
        split_of[id] = Some(tag);
    }

    for id in 0..node_count {
        match (labels[id], split_of[id]) {
            (Some(_), None) => {
                return Err(Error::data(
                    file_name(&splits_path),
                    0,
                    format!("labeled node {id} has no split assignment"),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::data(
                    file_name(&labels_path),
                    0,
                    format!("node {id} has a split but no label"),
                ))
            }
            _ => {}
        }
    }
    let num_classes = labels
        .iter()
        .flatten()
        .copied()
        .max()
        .map(|m| m + 1)
        .ok_or_else(|| Error::data(file_name(&labels_path), 0, "no labeled nodes"))?;
    let train_mask: Vec<bool> = split_of.iter().map(|s| *s == Some(0)).collect();
    let val_mask: Vec<bool> = split_of.iter().map(|s| *s == Some(1)).collect();
    let test_mask: Vec<bool> = split_of.iter().map(|s| *s == Some(2)).collect();
    if !train_mask.iter().any(|m| *m) {
        return Err(Error::data(file_name(&splits_path), 0, "no train nodes"));
    }

    Ok(NodeDataset {
        graph,
        features: Tensor::from_vec(&[node_count, width], features)?,
        labels: labels.into_iter().map(|l| l.unwrap_or(0)).collect(),
        num_classes,
        train_mask,
        val_mask,
        test_mask,
    })
}

/// Load a forecasting directory: `series.csv` rows are `node_id,t,f0,...`
/// on a uniform time grid, `edges.csv` gives the shared graph.
pub fn load_forecast_dataset(
    dir: &Path,
    frames: usize,
    horizon: usize,
    split: (f64, f64, f64),
) -> Result<ForecastDataset> {
    let series_path = dir.join("series.csv");
    let rows = read_rows(&series_path)?;
    if rows.is_empty() {
        return Err(Error::data(file_name(&series_path), 0, "no series rows"));
    }
    let width = rows[0].1.len().saturating_sub(2);
    if width == 0 {
        return Err(Error::data(
            file_name(&series_path),
            rows[0].0,
            "series rows need 'node_id,t' plus at least one feature",
        ));
    }

    struct Entry {
        line: usize,
        node: usize,
        time: f64,
        values: Vec<f64>,
    }
    let mut entries = Vec::with_capacity(rows.len());
    let mut node_count = 0usize;
    for (line, fields) in &rows {
        if fields.len() != width + 2 {
            return Err(Error::data(
                file_name(&series_path),
                *line,
                format!("expected {} columns, got {}", width + 2, fields.len()),
            ));
        }
        let node = parse_index(&series_path, *line, &fields[0], "node id")?;
        let time = parse_real(&series_path, *line, &fields[1], "time")?;
        let values = fields[2..]
            .iter()
            .map(|f| parse_real(&series_path, *line, f, "feature"))
            .collect::<Result<Vec<f64>>>()?;
        node_count = node_count.max(node + 1);
        entries.push(Entry {
            line: *line,
            node,
            time,
            values,
        });
    }

    let mut times: Vec<f64> = entries.iter().map(|e| e.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| a.to_bits() == b.to_bits());
    if times.len() < 2 {
        return Err(Error::data(
            file_name(&series_path),
            0,
            "need at least two distinct time steps",
        ));
    }
    let dt = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
            return Err(Error::data(
                file_name(&series_path),
                0,
                format!(
                    "time grid is not uniform: spacing {} vs {dt} between {} and {}",
                    w[1] - w[0],
                    w[0],
                    w[1]
                ),
            ));
        }
    }

    let step_of = |t: f64| times.partition_point(|x| *x < t);
    let mut per_step = vec![vec![f64::NAN; node_count * width]; times.len()];
    let mut filled = vec![vec![false; node_count]; times.len()];
    for e in &entries {
        let s = step_of(e.time);
        if filled[s][e.node] {
            return Err(Error::data(
                file_name(&series_path),
                e.line,
                format!("duplicate entry for node {} at t = {}", e.node, e.time),
            ));
        }
        filled[s][e.node] = true;
        per_step[s][e.node * width..(e.node + 1) * width].copy_from_slice(&e.values);
    }
    for (s, flags) in filled.iter().enumerate() {
        if let Some(node) = flags.iter().position(|f| !f) {
            return Err(Error::data(
                file_name(&series_path),
                0,
                format!("node {node} has no entry at t = {}", times[s]),
            ));
        }
    }

    let edges = load_edges(&dir.join("edges.csv"), node_count)?;
    let graph = Graph::new(node_count, &edges)?;
    let [train, val, test] =
        window_series(&per_step, &times, node_count, width, frames, horizon, split)?;
    Ok(ForecastDataset {
        graph,
        input_dim: width,
        frames,
        horizon,
        train,
        val,
        test,
    })
}
