//! Reading networks and covariate tables, the preprocessing pipeline, and
//! persistence of decompositions.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv;
use crate::linalg::{max_asymmetry, OrthonormalBasis, SYMMETRY_TOL};
use crate::model::{AdjacencyMatrix, CovariateMatrix, Decomposition, Ranks};

/// Weighted, possibly asymmetric, adjacency with node identifiers in row
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub node_ids: Vec<String>,
    pub weights: DMatrix<f64>,
}

fn strip_eol(line: &str) -> &str {
    line.strip_suffix('\r').unwrap_or(line)
}

fn parse_number(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("{what}: '{}' is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{what}: '{}' is not finite", field.trim())));
    }
    Ok(v)
}

/// `source<TAB>target<TAB>weight` lines after a one-line header. Node IDs
/// are indexed in order of first appearance and repeated pairs add up. With
/// `directed_input = false` each line also contributes to the mirrored
/// entry.
pub fn read_edge_list<R: BufRead>(reader: R, directed_input: bool) -> Result<WeightedGraph> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ids: Vec<String> = Vec::new();
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, raw) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let raw = raw.map_err(|e| Error::parse(line_no, e.to_string()))?;
        if idx == 0 {
            continue;
        }
        let line = strip_eol(&raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let weight = parse_number(fields[2], line_no, "weight")?;
        if weight < 0.0 {
            return Err(Error::NegativeWeight { line: line_no, weight });
        }
        let mut node = |name: &str| -> Result<usize> {
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::parse(line_no, "empty node id"));
            }
            Ok(*index.entry(name.to_string()).or_insert_with(|| {
                ids.push(name.to_string());
                ids.len() - 1
            }))
        };
        let s = node(fields[0])?;
        let t = node(fields[1])?;
        edges.push((s, t, weight));
    }
    if edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let n = ids.len();
    let mut w = DMatrix::zeros(n, n);
    for (s, t, weight) in edges {
        w[(s, t)] += weight;
        if !directed_input && s != t {
            w[(t, s)] += weight;
        }
    }
    Ok(WeightedGraph {
        node_ids: ids,
        weights: w,
    })
}

/// Comma-separated numeric rows without a header, all of equal length.
pub fn read_dense_matrix<R: BufRead>(reader: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let raw = raw.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = strip_eol(&raw);
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| parse_number(f, line_no, "entry"))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    line_no,
                    format!("row has {} fields, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(1, "matrix file has no rows"));
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Square dense matrix; node `i` gets the identifier `i` (0-based).
pub fn read_dense_network<R: BufRead>(reader: R) -> Result<WeightedGraph> {
    let m = read_dense_matrix(reader)?;
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "dense network must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|&v| v < 0.0) {
        let pos = m.iter().position(|&v| v < 0.0).unwrap();
        return Err(Error::NegativeWeight {
            line: pos % m.nrows() + 1,
            weight: m[pos],
        });
    }
    Ok(WeightedGraph {
        node_ids: (0..m.nrows()).map(|i| i.to_string()).collect(),
        weights: m,
    })
}

/// Covariate table with node identifiers and a flag for dummy columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub node_ids: Vec<String>,
    pub column_names: Vec<String>,
    pub values: DMatrix<f64>,
    pub is_dummy: Vec<bool>,
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan")
}

/// Comma-separated table, header row, node ID in the first column. Numeric
/// columns become reals; each listed categorical column becomes one 0/1
/// column per level (levels in order of first appearance, named
/// `column=level`), appended after the numeric columns. Rows with a missing
/// value are dropped.
pub fn read_covariates<R: BufRead>(reader: R, categorical_columns: &[String]) -> Result<CovariateTable> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((idx, raw)) => {
                let raw = raw.map_err(|e| Error::parse(idx + 1, e.to_string()))?;
                if !strip_eol(&raw).trim().is_empty() {
                    break raw;
                }
            }
            None => return Err(Error::parse(1, "covariate file has no header")),
        }
    };
    let names: Vec<String> = strip_eol(&header).split(',').map(|s| s.trim().to_string()).collect();
    if names.len() < 2 {
        return Err(Error::parse(1, "covariate header needs an id column and at least one covariate"));
    }
    let columns = &names[1..];
    for cat in categorical_columns {
        if !columns.contains(cat) {
            return Err(Error::parse(1, format!("categorical column '{cat}' not in header")));
        }
    }
    let is_cat: Vec<bool> = columns.iter().map(|c| categorical_columns.contains(c)).collect();

    let mut ids: Vec<String> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut numeric: Vec<Vec<f64>> = Vec::new();
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); columns.len()];
    let mut raw_cats: Vec<Vec<usize>> = Vec::new();
    let mut dropped = 0usize;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let raw = raw.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = strip_eol(&raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::parse(
                line_no,
                format!("row has {} fields, header has {}", fields.len(), names.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(Error::parse(line_no, "empty node id"));
        }
        if fields[1..].iter().any(|f| is_missing(f)) {
            dropped += 1;
            continue;
        }
        if seen.insert(id.to_string(), line_no).is_some() {
            return Err(Error::parse(line_no, format!("duplicate node id '{id}'")));
        }
        let mut nums = Vec::new();
        let mut cats = Vec::new();
        for (j, field) in fields[1..].iter().enumerate() {
            if is_cat[j] {
                let level = field.trim().to_string();
                let pos = match levels[j].iter().position(|l| *l == level) {
                    Some(p) => p,
                    None => {
                        levels[j].push(level);
                        levels[j].len() - 1
                    }
                };
                cats.push(pos);
            } else {
                nums.push(parse_number(field, line_no, &columns[j])?);
            }
        }
        ids.push(id.to_string());
        numeric.push(nums);
        raw_cats.push(cats);
    }
    if dropped > 0 {
        log::info!("dropped {dropped} covariate rows with missing values");
    }

    let mut column_names: Vec<String> = Vec::new();
    let mut is_dummy: Vec<bool> = Vec::new();
    for (j, c) in columns.iter().enumerate() {
        if !is_cat[j] {
            column_names.push(c.clone());
            is_dummy.push(false);
        }
    }
    let mut dummy_offsets = Vec::new();
    for (j, c) in columns.iter().enumerate() {
        if is_cat[j] {
            dummy_offsets.push(column_names.len());
            for level in &levels[j] {
                column_names.push(format!("{c}={level}"));
                is_dummy.push(true);
            }
        }
    }
    let n_numeric = is_dummy.iter().filter(|d| !**d).count();
    let mut values = DMatrix::zeros(ids.len(), column_names.len());
    for i in 0..ids.len() {
        for j in 0..n_numeric {
            values[(i, j)] = numeric[i][j];
        }
        for (c, &level) in raw_cats[i].iter().enumerate() {
            values[(i, dummy_offsets[c] + level)] = 1.0;
        }
    }
    Ok(CovariateTable {
        node_ids: ids,
        column_names,
        values,
        is_dummy,
    })
}

/// Restricts both sources to the nodes present in each, in network order.
pub fn intersect_nodes(graph: &WeightedGraph, table: &CovariateTable) -> Result<(WeightedGraph, CovariateTable)> {
    let rows: HashMap<&str, usize> = table.node_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let keep: Vec<(usize, usize)> = graph
        .node_ids
        .iter()
        .enumerate()
        .filter_map(|(g, id)| rows.get(id.as_str()).map(|&t| (g, t)))
        .collect();
    if keep.is_empty() {
        return Err(Error::NoOverlap);
    }
    let dropped_net = graph.node_ids.len() - keep.len();
    let dropped_cov = table.node_ids.len() - keep.len();
    if dropped_net + dropped_cov > 0 {
        log::info!(
            "kept {} common nodes; dropped {dropped_net} network-only and {dropped_cov} covariate-only nodes",
            keep.len()
        );
    }
    let k = keep.len();
    let weights = DMatrix::from_fn(k, k, |i, j| graph.weights[(keep[i].0, keep[j].0)]);
    let values = DMatrix::from_fn(k, table.values.ncols(), |i, j| table.values[(keep[i].1, j)]);
    Ok((
        WeightedGraph {
            node_ids: keep.iter().map(|&(g, _)| graph.node_ids[g].clone()).collect(),
            weights,
        },
        CovariateTable {
            node_ids: keep.iter().map(|&(_, t)| table.node_ids[t].clone()).collect(),
            column_names: table.column_names.clone(),
            values,
            is_dummy: table.is_dummy.clone(),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymmetrizeMode {
    #[default]
    AddTranspose,
    Average,
    None,
}

impl FromStr for SymmetrizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add_transpose" | "add-transpose" => Ok(Self::AddTranspose),
            "average" => Ok(Self::Average),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidConfig(format!("unknown symmetrize mode '{other}'"))),
        }
    }
}

impl fmt::Display for SymmetrizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AddTranspose => "add_transpose",
            Self::Average => "average",
            Self::None => "none",
        })
    }
}

pub fn symmetrize(a: &DMatrix<f64>, mode: SymmetrizeMode) -> Result<AdjacencyMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "adjacency must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    match mode {
        SymmetrizeMode::AddTranspose => AdjacencyMatrix::new(a + a.transpose()),
        SymmetrizeMode::Average => AdjacencyMatrix::new((a + a.transpose()) * 0.5),
        SymmetrizeMode::None => {
            let asymmetry = max_asymmetry(a);
            if asymmetry > SYMMETRY_TOL {
                return Err(Error::NotSymmetric {
                    asymmetry,
                    tolerance: SYMMETRY_TOL,
                });
            }
            AdjacencyMatrix::new(a.clone())
        }
    }
}

/// Elementwise `ln(1 + x)`.
pub fn log1p_matrix(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    log1p_columns(a, &vec![true; a.ncols()])
}

fn log1p_columns(a: &DMatrix<f64>, which: &[bool]) -> Result<DMatrix<f64>> {
    let mut out = a.clone();
    for j in 0..a.ncols() {
        if !which[j] {
            continue;
        }
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v < 0.0 {
                return Err(Error::NegativeEntry { row: i, col: j, value: v });
            }
            out[(i, j)] = v.ln_1p();
        }
    }
    Ok(out)
}

/// Centers each column and scales it to unit sample standard deviation.
pub fn standardize_columns(x: &CovariateMatrix) -> Result<CovariateMatrix> {
    standardize_selected(x, &vec![true; x.p()])
}

/// As [`standardize_columns`], leaving columns with `which[j] == false`
/// untouched.
pub fn standardize_selected(x: &CovariateMatrix, which: &[bool]) -> Result<CovariateMatrix> {
    if which.len() != x.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} column flags for {} columns",
            which.len(),
            x.p()
        )));
    }
    let n = x.n();
    let mut out = x.entries().clone();
    for j in 0..x.p() {
        if !which[j] {
            continue;
        }
        let name = x.column_names().get(j).cloned().unwrap_or_else(|| format!("column {}", j + 1));
        if n < 2 {
            return Err(Error::ConstantColumn(name));
        }
        let col = x.entries().column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::ConstantColumn(name));
        }
        for i in 0..n {
            out[(i, j)] = (x.entries()[(i, j)] - mean) / sd;
        }
    }
    CovariateMatrix::new(out, x.column_names().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    #[default]
    AutoElbow,
    Manual,
}

/// Preprocessing choices, applied in the fixed order: read network,
/// symmetrize, log-transform network, read covariates, dummy-encode,
/// log-transform numeric covariates, intersect nodes, standardize.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub log_transform_network: bool,
    pub log_transform_numeric_covariates: bool,
    pub symmetrize: SymmetrizeMode,
    pub standardize_columns: bool,
    /// When false, dummy columns are left as 0/1 during standardization.
    pub standardize_dummies: bool,
    pub categorical_columns: Vec<String>,
    pub ranks: Option<Ranks>,
    pub rank_policy: RankPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            log_transform_network: true,
            log_transform_numeric_covariates: true,
            symmetrize: SymmetrizeMode::AddTranspose,
            standardize_columns: true,
            standardize_dummies: true,
            categorical_columns: Vec::new(),
            ranks: None,
            rank_policy: RankPolicy::AutoElbow,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank_policy == RankPolicy::Manual && self.ranks.is_none() {
            return Err(Error::InvalidConfig("manual rank policy requires ranks".into()));
        }
        Ok(())
    }
}

/// Inputs after preprocessing, aligned by node.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub node_ids: Vec<String>,
    pub adjacency: AdjacencyMatrix,
    pub covariates: CovariateMatrix,
}

pub fn prepare(graph: WeightedGraph, table: CovariateTable, cfg: &PipelineConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let sym = symmetrize(&graph.weights, cfg.symmetrize)?;
    let weights = if cfg.log_transform_network {
        log1p_matrix(sym.entries())?
    } else {
        sym.into_inner()
    };
    let graph = WeightedGraph {
        node_ids: graph.node_ids,
        weights,
    };
    let (graph, table) = intersect_nodes(&graph, &table)?;
    let covariates = prepare_covariates(table, cfg)?;
    Ok(PreparedData {
        node_ids: graph.node_ids,
        adjacency: AdjacencyMatrix::new(graph.weights)?,
        covariates,
    })
}

/// Covariate steps of the pipeline on an already aligned table: log1p of
/// the numeric columns, then standardization.
pub fn prepare_covariates(table: CovariateTable, cfg: &PipelineConfig) -> Result<CovariateMatrix> {
    let values = if cfg.log_transform_numeric_covariates {
        let numeric: Vec<bool> = table.is_dummy.iter().map(|d| !d).collect();
        log1p_columns(&table.values, &numeric)?
    } else {
        table.values
    };
    let covariates = CovariateMatrix::new(values, table.column_names)?;
    if cfg.standardize_columns {
        let which: Vec<bool> = table.is_dummy.iter().map(|d| cfg.standardize_dummies || !d).collect();
        standardize_selected(&covariates, &which)
    } else {
        Ok(covariates)
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let k = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Provenance record stored next to the component files.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub ranks: Ranks,
    pub version: String,
    pub seed: u64,
    /// `(input name, sha256 hex)` pairs.
    pub digests: Vec<(String, String)>,
    /// Further free-form `key = value` entries.
    pub extra: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(ranks: Ranks, seed: u64) -> Self {
        Self {
            ranks,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            digests: Vec::new(),
            extra: Vec::new(),
        }
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = format!("ranks = {}\nversion = {}\nseed = {}\n", self.ranks, self.version, self.seed);
        for (name, digest) in &self.digests {
            out.push_str(&format!("sha256.{name} = {digest}\n"));
        }
        for (k, v) in &self.extra {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let entries = kv::parse(text)?;
        let get = |key: &str| {
            entries
                .get(key)
                .ok_or_else(|| Error::parse(0, format!("manifest lacks '{key}'")))
        };
        let (line, ranks) = get("ranks")?;
        let ranks: Ranks = ranks.parse().map_err(|e: Error| Error::parse(*line, e.to_string()))?;
        let (_, version) = get("version")?;
        let (line, seed) = get("seed")?;
        let seed = seed
            .parse()
            .map_err(|_| Error::parse(*line, format!("seed '{seed}' is not an unsigned integer")))?;
        let mut ordered: Vec<(&String, &(usize, String))> = entries.iter().collect();
        ordered.sort_by_key(|(_, (line, _))| *line);
        let mut digests = Vec::new();
        let mut extra = Vec::new();
        for (k, (line, v)) in ordered {
            if let Some(name) = k.strip_prefix("sha256.") {
                if v.len() != 64 || !v.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(Error::parse(*line, format!("'{v}' is not a sha256 hex digest")));
                }
                digests.push((name.to_string(), v.clone()));
            } else if !matches!(k.as_str(), "ranks" | "version" | "seed") {
                extra.push((k.clone(), v.clone()));
            }
        }
        Ok(Self {
            ranks,
            version: version.clone(),
            seed,
            digests,
            extra,
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rows of `m` as comma-separated shortest round-trip decimals.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 20);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&m[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_file(path, &matrix_to_csv(m))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_dense_matrix(open(path)?)
}

pub const COMPONENT_FILES: [&str; 3] = ["M.csv", "R1.csv", "R2.csv"];
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Writes `M.csv`, `R1.csv`, `R2.csv` and `manifest.txt` into an existing
/// directory.
pub fn write_decomposition(d: &Decomposition, dir: &Path, manifest: &Manifest) -> Result<()> {
    if manifest.ranks != d.ranks() {
        return Err(Error::InvalidConfig(format!(
            "manifest ranks {} disagree with decomposition ranks {}",
            manifest.ranks,
            d.ranks()
        )));
    }
    for (name, block) in COMPONENT_FILES.iter().zip([&d.joint, &d.network, &d.covariate]) {
        write_matrix(block.columns(), &dir.join(name))?;
    }
    write_file(&dir.join(MANIFEST_FILE), &manifest.to_kv_string())
}

/// Reads a directory written by [`write_decomposition`]. The manifest is
/// optional so that hand-made truth directories can be used.
pub fn read_decomposition(dir: &Path) -> Result<(Decomposition, Option<Manifest>)> {
    let mut blocks = Vec::new();
    for name in COMPONENT_FILES {
        let path = dir.join(name);
        let m = read_matrix(&path).map_err(|e| match e {
            Error::Parse { line, message } => Error::parse(line, format!("{}: {message}", path.display())),
            other => other,
        })?;
        blocks.push(OrthonormalBasis::new(m)?);
    }
    let covariate = blocks.pop().unwrap();
    let network = blocks.pop().unwrap();
    let joint = blocks.pop().unwrap();
    let d = Decomposition {
        joint,
        network,
        covariate,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        let mut text = String::new();
        open(&manifest_path)?
            .read_to_string(&mut text)
            .map_err(|e| Error::io(&manifest_path, e))?;
        Some(Manifest::from_kv_str(&text)?)
    } else {
        None
    };
    Ok((d, manifest))
}
