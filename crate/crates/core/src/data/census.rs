//! Adult (Census income) CSV loader.
//!
//! Accepts both the original headerless UCI files and the Kaggle export with
//! a header row. Categorical attributes are one-hot encoded against the fixed
//! published vocabulary, continuous ones are z-normalized with statistics of
//! the file the encoder was fitted on. Rows containing `?` are dropped.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const WORKCLASS: &[&str] = &[
    "Private",
    "Self-emp-not-inc",
    "Self-emp-inc",
    "Federal-gov",
    "Local-gov",
    "State-gov",
    "Without-pay",
    "Never-worked",
];
const EDUCATION: &[&str] = &[
    "Bachelors",
    "Some-college",
    "11th",
    "HS-grad",
    "Prof-school",
    "Assoc-acdm",
    "Assoc-voc",
    "9th",
    "7th-8th",
    "12th",
    "Masters",
    "1st-4th",
    "10th",
    "Doctorate",
    "5th-6th",
    "Preschool",
];
const MARITAL: &[&str] = &[
    "Married-civ-spouse",
    "Divorced",
    "Never-married",
    "Separated",
    "Widowed",
    "Married-spouse-absent",
    "Married-AF-spouse",
];
const OCCUPATION: &[&str] = &[
    "Tech-support",
    "Craft-repair",
    "Other-service",
    "Sales",
    "Exec-managerial",
    "Prof-specialty",
    "Handlers-cleaners",
    "Machine-op-inspct",
    "Adm-clerical",
    "Farming-fishing",
    "Transport-moving",
    "Priv-house-serv",
    "Protective-serv",
    "Armed-Forces",
];
const RELATIONSHIP: &[&str] = &["Wife", "Own-child", "Husband", "Not-in-family", "Other-relative", "Unmarried"];
const RACE: &[&str] = &["White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"];
const SEX: &[&str] = &["Female", "Male"];
const COUNTRY: &[&str] = &[
    "United-States",
    "Cambodia",
    "England",
    "Puerto-Rico",
    "Canada",
    "Germany",
    "Outlying-US(Guam-USVI-etc)",
    "India",
    "Japan",
    "Greece",
    "South",
    "China",
    "Cuba",
    "Iran",
    "Honduras",
    "Philippines",
    "Italy",
    "Poland",
    "Jamaica",
    "Vietnam",
    "Mexico",
    "Portugal",
    "Ireland",
    "France",
    "Dominican-Republic",
    "Laos",
    "Ecuador",
    "Taiwan",
    "Haiti",
    "Columbia",
    "Hungary",
    "Guatemala",
    "Nicaragua",
    "Scotland",
    "Thailand",
    "Yugoslavia",
    "El-Salvador",
    "Trinadad&Tobago",
    "Peru",
    "Hong",
    "Holand-Netherlands",
];

#[derive(Debug, Clone, Copy)]
enum Column {
    Continuous,
    Categorical(&'static [&'static str]),
}

const SCHEMA: [(&str, Column); 14] = [
    ("age", Column::Continuous),
    ("workclass", Column::Categorical(WORKCLASS)),
    ("fnlwgt", Column::Continuous),
    ("education", Column::Categorical(EDUCATION)),
    ("education-num", Column::Continuous),
    ("marital-status", Column::Categorical(MARITAL)),
    ("occupation", Column::Categorical(OCCUPATION)),
    ("relationship", Column::Categorical(RELATIONSHIP)),
    ("race", Column::Categorical(RACE)),
    ("sex", Column::Categorical(SEX)),
    ("capital-gain", Column::Continuous),
    ("capital-loss", Column::Continuous),
    ("hours-per-week", Column::Continuous),
    ("native-country", Column::Categorical(COUNTRY)),
];

/// Number of encoded feature columns: 6 continuous plus 99 one-hot columns.
pub fn census_width() -> usize {
    SCHEMA
        .iter()
        .map(|(_, c)| match c {
            Column::Continuous => 1,
            Column::Categorical(v) => v.len(),
        })
        .sum()
}

enum Cell {
    Value(f64),
    Category(usize),
}

struct RawRow {
    cells: Vec<Cell>,
    label: usize,
}

fn parse_rows(path: &Path) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Schema(format!("{}: {other:?}", path.display())),
        })?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if line == 0 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("age")) {
            continue;
        }
        if record.len() != SCHEMA.len() + 1 {
            return Err(Error::Schema(format!(
                "{} line {}: expected {} fields, found {}",
                path.display(),
                line + 1,
                SCHEMA.len() + 1,
                record.len()
            )));
        }
        if record.iter().any(|f| f == "?") {
            continue;
        }
        let mut cells = Vec::with_capacity(SCHEMA.len());
        for ((name, column), field) in SCHEMA.iter().zip(record.iter()) {
            let cell = match column {
                Column::Continuous => Cell::Value(field.parse::<f64>().map_err(|_| {
                    Error::Schema(format!("line {}: {name} value {field:?} is not numeric", line + 1))
                })?),
                Column::Categorical(vocab) => {
                    Cell::Category(vocab.iter().position(|v| *v == field).ok_or_else(|| {
                        Error::Schema(format!("line {}: unknown {name} category {field:?}", line + 1))
                    })?)
                }
            };
            cells.push(cell);
        }
        let label = match record[SCHEMA.len()].trim_end_matches('.') {
            "<=50K" => 0,
            ">50K" => 1,
            other => {
                return Err(Error::Schema(format!("line {}: unknown income label {other:?}", line + 1)));
            }
        };
        rows.push(RawRow { cells, label });
    }
    Ok(rows)
}

/// Normalization statistics for the continuous columns, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusEncoder {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl CensusEncoder {
    /// Fits mean and population standard deviation on a training file.
    pub fn fit(path: &Path) -> Result<Self> {
        let rows = parse_rows(path)?;
        Self::fit_rows(&rows)
    }

    fn fit_rows(rows: &[RawRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        let n = rows.len() as f64;
        let mut means = Vec::new();
        let mut stds = Vec::new();
        for (col, (_, kind)) in SCHEMA.iter().enumerate() {
            if !matches!(kind, Column::Continuous) {
                continue;
            }
            let values = rows.iter().map(|r| match r.cells[col] {
                Cell::Value(v) => v,
                Cell::Category(_) => unreachable!(),
            });
            let mean = values.clone().sum::<f64>() / n;
            let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means.push(mean);
            stds.push(var.sqrt());
        }
        Ok(Self { means, stds })
    }

    pub fn encode(&self, path: &Path) -> Result<LabeledDataset> {
        let rows = parse_rows(path)?;
        self.encode_rows(&rows)
    }

    fn encode_rows(&self, rows: &[RawRow]) -> Result<LabeledDataset> {
        if rows.is_empty() {
            return Err(Error::EmptyData);
        }
        let width = census_width();
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in rows {
            let mut cont = 0;
            for (cell, (_, kind)) in row.cells.iter().zip(SCHEMA.iter()) {
                match (cell, kind) {
                    (Cell::Value(v), Column::Continuous) => {
                        let std = self.stds[cont];
                        // Constant columns carry no information; emit zeros.
                        data.push(if std > 0.0 { (v - self.means[cont]) / std } else { 0.0 });
                        cont += 1;
                    }
                    (Cell::Category(c), Column::Categorical(vocab)) => {
                        data.extend((0..vocab.len()).map(|i| if i == *c { 1.0 } else { 0.0 }));
                    }
                    _ => unreachable!(),
                }
            }
        }
        let features = Tensor::new(vec![rows.len(), width], data)?;
        LabeledDataset::new(features, rows.iter().map(|r| r.label).collect(), 2)
    }
}

/// Loads a training file, normalizing with its own statistics. Label 1 is `>50K`.
pub fn load_census(csv_path: &Path) -> Result<LabeledDataset> {
    let rows = parse_rows(csv_path)?;
    CensusEncoder::fit_rows(&rows)?.encode_rows(&rows)
}
