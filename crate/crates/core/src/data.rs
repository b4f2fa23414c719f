//! Fitness case tables: delimiter-separated classification files and
//! generated, bit-packed Boolean multiplexer tables.

use std::collections::HashMap;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use crate::error::DataError;
use crate::genome::FunctionSet;

pub const DEFAULT_BLOCK_SIZE: usize = 2400;
pub const DEFAULT_LANE_WIDTH: u32 = 32;

/// Real-valued features with a binary target, stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct FitnessCaseTable {
    columns: Vec<Vec<f64>>,
    targets: Vec<bool>,
    block_size: usize,
}

impl FitnessCaseTable {
    pub fn new(columns: Vec<Vec<f64>>, targets: Vec<bool>) -> Result<Self, DataError> {
        if targets.is_empty() {
            return Err(DataError::Schema("table has no cases".into()));
        }
        for (c, column) in columns.iter().enumerate() {
            if column.len() != targets.len() {
                return Err(DataError::Schema(format!(
                    "feature column {c} has {} values for {} cases",
                    column.len(),
                    targets.len()
                )));
            }
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NotFinite {
                    line: row + 1,
                    column: c,
                });
            }
        }
        Ok(FitnessCaseTable {
            columns,
            targets,
            block_size: DEFAULT_BLOCK_SIZE,
        })
    }

    /// Builds a table from case-major rows.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<bool>) -> Result<Self, DataError> {
        let width = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(rows.len()); width];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(DataError::Arity {
                    line: i + 1,
                    expected: width,
                    found: row.len(),
                });
            }
            for (column, &v) in columns.iter_mut().zip(row) {
                column.push(v);
            }
        }
        Self::new(columns, targets)
    }

    pub fn with_block_size(mut self, block_size: usize) -> Self {
        assert!(block_size > 0, "block size must be positive");
        self.block_size = block_size;
        self
    }

    /// The first `count` cases.
    pub fn head(&self, count: usize) -> Self {
        let count = count.min(self.case_count());
        FitnessCaseTable {
            columns: self.columns.iter().map(|c| c[..count].to_vec()).collect(),
            targets: self.targets[..count].to_vec(),
            block_size: self.block_size,
        }
    }

    pub fn case_count(&self) -> usize {
        self.targets.len()
    }

    pub fn feature_count(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    pub fn case(&self, index: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[index]).collect()
    }

    pub fn targets(&self) -> &[bool] {
        &self.targets
    }

    pub fn positive_count(&self) -> usize {
        self.targets.iter().filter(|&&t| t).count()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn block_count(&self) -> usize {
        self.case_count().div_ceil(self.block_size)
    }

    pub fn block_range(&self, block: usize) -> Range<usize> {
        let start = block * self.block_size;
        start..(start + self.block_size).min(self.case_count())
    }
}

/// Boolean inputs and targets packed one fitness case per bit.
///
/// Words are stored as `u64`; only the low `lane_width` bits of each word
/// carry cases.
#[derive(Clone, Debug, PartialEq)]
pub struct BitCaseTable {
    inputs: Vec<Vec<u64>>,
    targets: Vec<u64>,
    case_count: usize,
    lane_width: u32,
    block_words: usize,
}

impl BitCaseTable {
    pub fn new(inputs: &[Vec<bool>], targets: &[bool], lane_width: u32) -> Result<Self, DataError> {
        if targets.is_empty() {
            return Err(DataError::Schema("table has no cases".into()));
        }
        if inputs.iter().any(|i| i.len() != targets.len()) {
            return Err(DataError::Schema("input and target lengths differ".into()));
        }
        Ok(BitCaseTable {
            inputs: inputs.iter().map(|v| pack_bits(v, lane_width)).collect(),
            targets: pack_bits(targets, lane_width),
            case_count: targets.len(),
            lane_width,
            block_words: DEFAULT_BLOCK_SIZE,
        })
    }

    /// Block size in packed words.
    pub fn with_block_size(mut self, words: usize) -> Self {
        assert!(words > 0, "block size must be positive");
        self.block_words = words;
        self
    }

    pub fn case_count(&self) -> usize {
        self.case_count
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn lane_width(&self) -> u32 {
        self.lane_width
    }

    pub fn word_count(&self) -> usize {
        self.targets.len()
    }

    pub fn input_words(&self, input: usize) -> &[u64] {
        &self.inputs[input]
    }

    pub fn target_words(&self) -> &[u64] {
        &self.targets
    }

    /// Mask of the bits of word `w` that hold real cases.
    pub fn word_mask(&self, w: usize) -> u64 {
        let lane = self.lane_width as usize;
        let valid = (self.case_count - w * lane).min(lane);
        if valid == 64 {
            u64::MAX
        } else {
            (1u64 << valid) - 1
        }
    }

    pub fn input_bit(&self, input: usize, case: usize) -> bool {
        let lane = self.lane_width as usize;
        self.inputs[input][case / lane] >> (case % lane) & 1 == 1
    }

    pub fn target_bit(&self, case: usize) -> bool {
        let lane = self.lane_width as usize;
        self.targets[case / lane] >> (case % lane) & 1 == 1
    }

    pub fn block_words(&self) -> usize {
        self.block_words
    }

    pub fn block_count(&self) -> usize {
        self.word_count().div_ceil(self.block_words)
    }

    pub fn block_range(&self, block: usize) -> Range<usize> {
        let start = block * self.block_words;
        start..(start + self.block_words).min(self.word_count())
    }

    /// Raw fitness cases covered by a block.
    pub fn block_cases(&self, block: usize) -> usize {
        let words = self.block_range(block);
        let lane = self.lane_width as usize;
        (words.end * lane).min(self.case_count) - words.start * lane
    }
}

/// Packs `values` so that bit `b` of word `w` is `values[w * lane_width + b]`.
pub fn pack_bits(values: &[bool], lane_width: u32) -> Vec<u64> {
    assert!(
        lane_width == 32 || lane_width == 64,
        "lane width must be 32 or 64"
    );
    values
        .chunks(lane_width as usize)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u64, |word, (b, &v)| word | (u64::from(v) << b))
        })
        .collect()
}

pub fn unpack_bits(words: &[u64], lane_width: u32, len: usize) -> Vec<bool> {
    let lane = lane_width as usize;
    (0..len)
        .map(|i| words[i / lane] >> (i % lane) & 1 == 1)
        .collect()
}

/// The full truth table of the multiplexer with `address_bits` address
/// lines, packed at the default lane width.
pub fn build_multiplexer(address_bits: u32) -> BitCaseTable {
    build_multiplexer_with(address_bits, DEFAULT_LANE_WIDTH)
}

/// Terminal `k` takes bit `k` of the case index: A0 is the least
/// significant, the address lines come first and the data lines follow.
pub fn build_multiplexer_with(address_bits: u32, lane_width: u32) -> BitCaseTable {
    let data_bits = 1u32 << address_bits;
    let inputs = address_bits + data_bits;
    assert!(
        address_bits >= 1 && inputs <= 26,
        "unsupported multiplexer size"
    );
    assert!(
        lane_width == 32 || lane_width == 64,
        "lane width must be 32 or 64"
    );
    let cases = 1usize << inputs;
    let lane = lane_width as usize;
    let words = cases.div_ceil(lane);
    let address_mask = (1usize << address_bits) - 1;

    let pack = |bit_of: &dyn Fn(usize) -> bool| -> Vec<u64> {
        (0..words)
            .map(|w| {
                let base = w * lane;
                (0..lane.min(cases - base))
                    .fold(0u64, |word, b| word | (u64::from(bit_of(base + b)) << b))
            })
            .collect()
    };
    let input_words = (0..inputs as usize)
        .map(|k| pack(&|case| case >> k & 1 == 1))
        .collect();
    let target_words = pack(&|case| {
        let address = case & address_mask;
        case >> (address_bits as usize + address) & 1 == 1
    });
    BitCaseTable {
        inputs: input_words,
        targets: target_words,
        case_count: cases,
        lane_width,
        block_words: DEFAULT_BLOCK_SIZE,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Delimiter {
    /// Comma when the first data line contains one, whitespace otherwise.
    Auto,
    Whitespace,
    Char(u8),
}

/// Column layout and label binarization of a classification file.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub delimiter: Delimiter,
    pub header: bool,
    /// Label column; the last column when absent.
    pub label_column: Option<usize>,
    /// Feature columns; every non-label column when absent.
    pub feature_columns: Option<Vec<usize>>,
    /// Columns holding symbolic values; inferred from the first data row
    /// when absent.
    pub symbolic_columns: Option<Vec<usize>>,
    /// Labels mapped to the positive class.
    pub positive_labels: Vec<String>,
}

impl Schema {
    pub fn with_positive(labels: &[&str]) -> Self {
        Schema {
            delimiter: Delimiter::Auto,
            header: false,
            label_column: None,
            feature_columns: None,
            symbolic_columns: None,
            positive_labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Statlog Shuttle: nine numeric features, class 1 positive.
    pub fn shuttle() -> Self {
        Self::with_positive(&["1"])
    }

    /// KDD Cup 1999: 41 features, three symbolic, `normal.` positive.
    pub fn kddcup() -> Self {
        Schema {
            delimiter: Delimiter::Char(b','),
            symbolic_columns: Some(vec![1, 2, 3]),
            ..Self::with_positive(&["normal."])
        }
    }

    /// Parses a flat `key=value` schema description.
    ///
    /// Keys: `delimiter` (`auto`, `whitespace`, `comma`, `tab` or a single
    /// character), `header`, `label_column`, `feature_columns`,
    /// `symbolic_columns`, `positive_labels`. Lists are comma-separated.
    pub fn from_key_values(text: &str) -> Result<Self, DataError> {
        let mut schema = Schema::with_positive(&[]);
        for (key, value) in parse_key_values(text).map_err(DataError::Schema)? {
            let list = |v: &str| -> Result<Vec<usize>, DataError> {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| DataError::Schema(format!("bad column `{s}`")))
                    })
                    .collect()
            };
            match key.as_str() {
                "delimiter" => {
                    schema.delimiter = match value.as_str() {
                        "auto" => Delimiter::Auto,
                        "whitespace" | "space" => Delimiter::Whitespace,
                        "comma" => Delimiter::Char(b','),
                        "tab" => Delimiter::Char(b'\t'),
                        v if v.len() == 1 => Delimiter::Char(v.as_bytes()[0]),
                        v => return Err(DataError::Schema(format!("bad delimiter `{v}`"))),
                    }
                }
                "header" => {
                    schema.header = value
                        .parse()
                        .map_err(|_| DataError::Schema(format!("bad header flag `{value}`")))?
                }
                "label_column" => {
                    schema.label_column =
                        Some(value.parse().map_err(|_| {
                            DataError::Schema(format!("bad label column `{value}`"))
                        })?)
                }
                "feature_columns" => schema.feature_columns = Some(list(&value)?),
                "symbolic_columns" => schema.symbolic_columns = Some(list(&value)?),
                "positive_labels" => {
                    schema.positive_labels =
                        value.split(',').map(|s| s.trim().to_string()).collect()
                }
                other => return Err(DataError::Schema(format!("unknown schema key `{other}`"))),
            }
        }
        if schema.positive_labels.is_empty() {
            return Err(DataError::Schema("positive_labels is required".into()));
        }
        Ok(schema)
    }
}

/// Parses flat `key=value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

enum ColumnKind {
    Numeric,
    Symbolic(HashMap<String, f64>),
}

struct TableBuilder<'a> {
    schema: &'a Schema,
    width: usize,
    label: usize,
    features: Vec<usize>,
    kinds: Vec<ColumnKind>,
    columns: Vec<Vec<f64>>,
    targets: Vec<bool>,
}

impl<'a> TableBuilder<'a> {
    fn start(schema: &'a Schema, line: usize, fields: &[&str]) -> Result<Self, DataError> {
        let width = fields.len();
        let label = schema.label_column.unwrap_or(width.saturating_sub(1));
        if label >= width {
            return Err(DataError::Schema(format!(
                "label column {label} outside {width} columns (line {line})"
            )));
        }
        let features = match &schema.feature_columns {
            Some(cols) => cols.clone(),
            None => (0..width).filter(|&c| c != label).collect(),
        };
        if let Some(&bad) = features.iter().find(|&&c| c >= width || c == label) {
            return Err(DataError::Schema(format!("invalid feature column {bad}")));
        }
        let kinds = features
            .iter()
            .map(|&c| {
                let symbolic = match &schema.symbolic_columns {
                    Some(list) => list.contains(&c),
                    None => fields[c].parse::<f64>().is_err(),
                };
                if symbolic {
                    ColumnKind::Symbolic(HashMap::new())
                } else {
                    ColumnKind::Numeric
                }
            })
            .collect();
        Ok(TableBuilder {
            schema,
            width,
            label,
            columns: vec![Vec::new(); features.len()],
            features,
            kinds,
            targets: Vec::new(),
        })
    }

    fn push(&mut self, line: usize, fields: &[&str]) -> Result<(), DataError> {
        if fields.len() != self.width {
            return Err(DataError::Arity {
                line,
                expected: self.width,
                found: fields.len(),
            });
        }
        for ((&c, kind), column) in self
            .features
            .iter()
            .zip(&mut self.kinds)
            .zip(&mut self.columns)
        {
            let raw = fields[c];
            let value = match kind {
                ColumnKind::Numeric => {
                    let v: f64 = raw.parse().map_err(|_| DataError::NotNumeric {
                        line,
                        column: c,
                        value: raw.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(DataError::NotFinite { line, column: c });
                    }
                    v
                }
                ColumnKind::Symbolic(codes) => {
                    let next = codes.len() as f64;
                    *codes.entry(raw.to_string()).or_insert(next)
                }
            };
            column.push(value);
        }
        let label = fields[self.label];
        self.targets
            .push(self.schema.positive_labels.iter().any(|p| p == label));
        Ok(())
    }
}

/// Parses classification text. Line numbers in errors are 1-based physical
/// lines of `text`.
pub fn parse_classification(
    text: &str,
    schema: &Schema,
    origin: &Path,
) -> Result<FitnessCaseTable, DataError> {
    let delimiter = match &schema.delimiter {
        Delimiter::Auto => {
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            if first.contains(',') {
                Delimiter::Char(b',')
            } else {
                Delimiter::Whitespace
            }
        }
        d => d.clone(),
    };

    let mut builder: Option<TableBuilder> = None;
    let mut skip_header = schema.header;
    let mut accept = |line: usize, fields: &[&str]| -> Result<(), DataError> {
        if std::mem::take(&mut skip_header) {
            return Ok(());
        }
        match builder.as_mut() {
            Some(b) => b.push(line, fields),
            None => {
                let mut b = TableBuilder::start(schema, line, fields)?;
                b.push(line, fields)?;
                builder = Some(b);
                Ok(())
            }
        }
    };

    match delimiter {
        Delimiter::Whitespace | Delimiter::Auto => {
            for (i, raw) in text.lines().enumerate() {
                let fields: Vec<&str> = raw.split_whitespace().collect();
                if !fields.is_empty() {
                    accept(i + 1, &fields)?;
                }
            }
        }
        Delimiter::Char(byte) => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(byte)
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            let mut record = csv::StringRecord::new();
            loop {
                match reader.read_record(&mut record) {
                    Ok(true) => {}
                    Ok(false) => break,
                    Err(e) => {
                        let line = e.position().map_or(0, |p| p.line() as usize);
                        return Err(DataError::Csv {
                            line,
                            message: e.to_string(),
                        });
                    }
                }
                let line = record.position().map_or(0, |p| p.line() as usize);
                let fields: Vec<&str> = record.iter().collect();
                if fields.iter().all(|f| f.is_empty()) {
                    continue;
                }
                accept(line, &fields)?;
            }
        }
    }

    let builder = builder.ok_or_else(|| DataError::Empty(origin.to_path_buf()))?;
    FitnessCaseTable::new(builder.columns, builder.targets)
}

pub fn load_classification_file(
    path: &Path,
    schema: &Schema,
) -> Result<FitnessCaseTable, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: PathBuf::from(path),
        source,
    })?;
    parse_classification(&text, schema, path)
}

/// A problem's fitness cases.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Real(FitnessCaseTable),
    Bits(BitCaseTable),
}

impl Dataset {
    pub fn function_set(&self) -> FunctionSet {
        match self {
            Dataset::Real(t) => FunctionSet::Classification {
                features: t.feature_count(),
            },
            Dataset::Bits(t) => FunctionSet::Boolean {
                inputs: t.input_count(),
            },
        }
    }

    /// Block size in cases for real tables, in packed words for bit tables.
    pub fn with_block_size(self, block_size: usize) -> Self {
        match self {
            Dataset::Real(t) => Dataset::Real(t.with_block_size(block_size)),
            Dataset::Bits(t) => Dataset::Bits(t.with_block_size(block_size)),
        }
    }

    pub fn total_cases(&self) -> u64 {
        match self {
            Dataset::Real(t) => t.case_count() as u64,
            Dataset::Bits(t) => t.case_count() as u64,
        }
    }

    pub fn block_count(&self) -> usize {
        match self {
            Dataset::Real(t) => t.block_count(),
            Dataset::Bits(t) => t.block_count(),
        }
    }

    /// Raw fitness cases in a block.
    pub fn block_cases(&self, block: usize) -> u64 {
        match self {
            Dataset::Real(t) => t.block_range(block).len() as u64,
            Dataset::Bits(t) => t.block_cases(block) as u64,
        }
    }

    /// Interpreter passes needed per node for a block: one per case, or one
    /// per packed word.
    pub fn block_steps(&self, block: usize) -> u64 {
        match self {
            Dataset::Real(t) => t.block_range(block).len() as u64,
            Dataset::Bits(t) => t.block_range(block).len() as u64,
        }
    }

    pub fn lanes(&self) -> u32 {
        match self {
            Dataset::Real(_) => 1,
            Dataset::Bits(t) => t.lane_width(),
        }
    }
}
