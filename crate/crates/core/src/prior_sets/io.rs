//! CSV readers for prior specifications and failure data.
//!
//! Prior CSV: `type,t[,n_lower,n_upper,y_lower,y_upper]`. `type` may be `*`
//! (all types without their own rows) and `t` may be `*` (every grid point).
//! Parameter columns missing from the file come from scalar settings.

use std::collections::BTreeMap;
use std::io::Read;

use super::{fill_backward_upper, fill_forward_lower, PriorError, PriorRectangle, PriorSpec, TestData};
use crate::grid::TimeGrid;

const PARAMS: [&str; 4] = ["n_lower", "n_upper", "y_lower", "y_upper"];
const DEFAULTS: [f64; 4] = [2.0, 2.0, 0.5, 0.5];

#[derive(Debug, Clone, PartialEq)]
pub struct PriorRow {
    pub line: u64,
    /// `None` for the `*` wildcard.
    pub label: Option<String>,
    /// `None` for the `*` wildcard.
    pub t: Option<f64>,
    /// Indexed like `n_lower, n_upper, y_lower, y_upper`; `None` where the
    /// column is absent.
    pub values: [Option<f64>; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriorTable {
    pub rows: Vec<PriorRow>,
    pub columns: [bool; 4],
}

/// Scalar prior settings, usually from the command line.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScalarPrior {
    pub n_lower: Option<f64>,
    pub n_upper: Option<f64>,
    pub y_lower: Option<f64>,
    pub y_upper: Option<f64>,
}

impl ScalarPrior {
    fn get(&self, i: usize) -> Option<f64> {
        [self.n_lower, self.n_upper, self.y_lower, self.y_upper][i]
    }
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).flexible(false).from_reader(input)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn from_csv_error(e: csv::Error) -> PriorError {
    let line = e.position().map_or(0, |p| p.line());
    PriorError::csv(line, e.to_string())
}

fn parse_number(field: &str, what: &str, line: u64) -> Result<f64, PriorError> {
    field
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| PriorError::csv(line, format!("invalid {what} `{field}`")))
}

pub fn read_prior_csv<R: Read>(input: R) -> Result<PriorTable, PriorError> {
    let mut reader = csv_reader(input);
    let headers = reader.headers().map_err(from_csv_error)?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let type_col = find("type").ok_or_else(|| PriorError::csv(1, "missing column `type`"))?;
    let t_col = find("t").ok_or_else(|| PriorError::csv(1, "missing column `t`"))?;
    let param_cols = PARAMS.map(find);
    for h in headers.iter() {
        if h != "type" && h != "t" && !PARAMS.contains(&h) {
            return Err(PriorError::csv(1, format!("unknown column `{h}`")));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(from_csv_error)?;
        let line = line_of(&record);
        let label = match &record[type_col] {
            "" => return Err(PriorError::csv(line, "empty type")),
            "*" => None,
            l => Some(l.to_string()),
        };
        let t = match &record[t_col] {
            "*" => None,
            f => {
                let t = parse_number(f, "time", line)?;
                if t < 0.0 {
                    return Err(PriorError::csv(line, format!("negative time {t}")));
                }
                Some(t)
            }
        };
        let mut values = [None; 4];
        for (i, col) in param_cols.iter().enumerate() {
            if let Some(c) = col {
                values[i] = Some(parse_number(&record[*c], PARAMS[i], line)?);
            }
        }
        rows.push(PriorRow { line, label, t, values });
    }
    Ok(PriorTable { rows, columns: param_cols.map(|c| c.is_some()) })
}

/// Expands a prior table and scalar settings into a dense [`PriorSpec`] for
/// `labels`.
///
/// A type uses its own rows if it has any, otherwise the `*` rows. Its rows
/// are either one `t = *` row or rows at explicit grid times. Sparse `y`
/// bounds are densified with the least committal fill; sparse `n` bounds
/// take the latest elicited row at or before `t`, else the earliest row.
/// A parameter given both as a column and as a scalar is an error; one given
/// by neither takes its default (`n = 2`, `y = 0.5`).
pub fn build_prior_spec(
    table: Option<&PriorTable>,
    scalars: &ScalarPrior,
    grid: &TimeGrid,
    labels: &[String],
    eps: f64,
) -> Result<PriorSpec, PriorError> {
    if let Some(table) = table {
        for i in 0..4 {
            if table.columns[i] && scalars.get(i).is_some() {
                return Err(PriorError::Invalid(format!(
                    "{} is given both in the prior file and as a scalar setting",
                    PARAMS[i]
                )));
            }
        }
        if let Some(row) = table.rows.iter().find(|r| r.label.as_ref().is_some_and(|l| !labels.contains(l))) {
            return Err(PriorError::csv(row.line, format!("unknown component type `{}`", row.label.as_ref().unwrap())));
        }
    }
    let mut rects = BTreeMap::new();
    for label in labels {
        let dense = match table {
            Some(table) => dense_from_table(table, scalars, grid, label, eps)?,
            None => (0..4).map(|i| vec![scalars.get(i).unwrap_or(DEFAULTS[i]); grid.len()]).collect(),
        };
        let row = (0..grid.len())
            .map(|j| {
                PriorRectangle::new(dense[0][j], dense[1][j], dense[2][j], dense[3][j], eps).map_err(|e| {
                    PriorError::Invalid(format!("type {label} at t = {}: {e}", grid.times()[j]))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rects.insert(label.clone(), row);
    }
    PriorSpec::new(grid.clone(), rects)
}

fn dense_from_table(
    table: &PriorTable,
    scalars: &ScalarPrior,
    grid: &TimeGrid,
    label: &str,
    eps: f64,
) -> Result<Vec<Vec<f64>>, PriorError> {
    let own: Vec<&PriorRow> = table.rows.iter().filter(|r| r.label.as_deref() == Some(label)).collect();
    let rows = if own.is_empty() { table.rows.iter().filter(|r| r.label.is_none()).collect() } else { own };
    if rows.is_empty() {
        return Err(PriorError::Invalid(format!("prior file has no rows for type `{label}` and no `*` rows")));
    }
    let wildcard: Vec<&&PriorRow> = rows.iter().filter(|r| r.t.is_none()).collect();
    if !wildcard.is_empty() && rows.len() > 1 {
        return Err(PriorError::csv(
            rows[1].line,
            format!("type `{label}` mixes a `t = *` row with other rows"),
        ));
    }
    let mut points: Vec<(usize, &PriorRow)> = Vec::new();
    if wildcard.is_empty() {
        for r in &rows {
            let t = r.t.expect("explicit time");
            let idx = grid.position(t).ok_or_else(|| PriorError::csv(r.line, format!("time {t} is not a grid point")))?;
            if points.iter().any(|p| p.0 == idx) {
                return Err(PriorError::csv(r.line, format!("time {t} repeated for type `{label}`")));
            }
            points.push((idx, r));
        }
        points.sort_by_key(|p| p.0);
    }
    let len = grid.len();
    Ok((0..4)
        .map(|i| {
            if !table.columns[i] {
                return vec![scalars.get(i).unwrap_or(DEFAULTS[i]); len];
            }
            if let Some(r) = wildcard.first() {
                return vec![r.values[i].expect("column present"); len];
            }
            let sparse: Vec<(usize, f64)> = points.iter().map(|(j, r)| (*j, r.values[i].expect("column present"))).collect();
            match i {
                2 => fill_forward_lower(&sparse, len, eps),
                3 => fill_backward_upper(&sparse, len, eps),
                _ => (0..len)
                    .map(|j| sparse.iter().rev().find(|p| p.0 <= j).unwrap_or(&sparse[0]).1)
                    .collect(),
            }
        })
        .collect())
}

/// Reads `type,failure_time` rows.
pub fn read_test_data_csv<R: Read>(input: R) -> Result<TestData, PriorError> {
    let mut reader = csv_reader(input);
    let headers = reader.headers().map_err(from_csv_error)?.clone();
    let type_col = headers.iter().position(|h| h == "type").ok_or_else(|| PriorError::csv(1, "missing column `type`"))?;
    let time_col = headers
        .iter()
        .position(|h| h == "failure_time")
        .ok_or_else(|| PriorError::csv(1, "missing column `failure_time`"))?;
    let mut failures: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(from_csv_error)?;
        let line = line_of(&record);
        let label = &record[type_col];
        if label.is_empty() || label == "*" {
            return Err(PriorError::csv(line, format!("invalid type `{label}`")));
        }
        let t = parse_number(&record[time_col], "failure time", line)?;
        if t < 0.0 {
            return Err(PriorError::csv(line, format!("negative failure time {t}")));
        }
        failures.entry(label.to_string()).or_default().push(t);
    }
    TestData::new(failures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DEFAULT_EPSILON as EPS;

    fn labels(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    fn unit_grid(n: usize) -> TimeGrid {
        TimeGrid::new((0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn scalar_defaults() {
        let spec = build_prior_spec(None, &ScalarPrior::default(), &unit_grid(3), &labels(&["A"]), EPS).unwrap();
        let r = spec.rects("A").unwrap()[2];
        assert_eq!((r.n_lower(), r.n_upper(), r.y_lower(), r.y_upper()), (2.0, 2.0, 0.5, 0.5));
    }

    #[test]
    fn wildcard_rows_and_own_rows() {
        let text = "type,t,n_lower,n_upper,y_lower,y_upper\n*,*,1,2,0,1\nB,0,1,4,0.6,0.9\nB,2,1,4,0.2,0.5\n";
        let table = read_prior_csv(text.as_bytes()).unwrap();
        let spec = build_prior_spec(Some(&table), &ScalarPrior::default(), &unit_grid(4), &labels(&["A", "B"]), EPS).unwrap();
        let a = spec.rects("A").unwrap();
        assert!(a.iter().all(|r| r.y_lower() == EPS && r.y_upper() == 1.0 - EPS && r.n_upper() == 2.0));
        let b: Vec<_> = spec.rects("B").unwrap().iter().map(|r| (r.y_lower(), r.y_upper())).collect();
        assert_eq!(b, vec![(0.6, 0.9), (0.2, 0.9), (0.2, 0.5), (EPS, 0.5)]);
    }

    #[test]
    fn missing_columns_come_from_scalars() {
        let text = "type,t,y_lower,y_upper\nA,*,0.3,0.6\n";
        let table = read_prior_csv(text.as_bytes()).unwrap();
        let scalars = ScalarPrior { n_lower: Some(1.0), n_upper: Some(8.0), ..Default::default() };
        let spec = build_prior_spec(Some(&table), &scalars, &unit_grid(2), &labels(&["A"]), EPS).unwrap();
        let r = spec.rects("A").unwrap()[0];
        assert_eq!((r.n_lower(), r.n_upper(), r.y_lower(), r.y_upper()), (1.0, 8.0, 0.3, 0.6));

        let clash = ScalarPrior { y_lower: Some(0.1), ..Default::default() };
        assert!(build_prior_spec(Some(&table), &clash, &unit_grid(2), &labels(&["A"]), EPS).is_err());
    }

    #[test]
    fn table_errors() {
        let grid = unit_grid(3);
        let ls = labels(&["A"]);
        let build = |text: &str| {
            let table = read_prior_csv(text.as_bytes())?;
            build_prior_spec(Some(&table), &ScalarPrior::default(), &grid, &ls, EPS)
        };
        assert!(build("type,t,y_lower\nZ,*,0.1\n").is_err());
        assert!(build("type,t,y_lower\nB,*,0.1\n").is_err());
        assert!(build("type,t,y_lower\nA,*,0.1\nA,1,0.1\n").is_err());
        assert!(build("type,t,y_lower\nA,0.5,0.1\n").is_err());
        assert!(build("type,t,y_lower\nA,1,0.1\nA,1,0.1\n").is_err());
        assert!(build("type,t,y_lower\nA,0,0.1\nA,1,0.2\n").is_err());
        assert!(build("type,t,bogus\nA,0,0.1\n").is_err());
        assert!(build("type,t,y_lower\nA,0,abc\n").is_err());
        assert!(build("type,t,n_lower\nA,*,0\n").is_err());
    }

    #[test]
    fn sparse_strength_uses_latest_row() {
        let text = "type,t,n_lower,n_upper\nA,1,1,3\nA,3,1,5\n";
        let table = read_prior_csv(text.as_bytes()).unwrap();
        let spec = build_prior_spec(Some(&table), &ScalarPrior::default(), &unit_grid(5), &labels(&["A"]), EPS).unwrap();
        let nu: Vec<_> = spec.rects("A").unwrap().iter().map(|r| r.n_upper()).collect();
        assert_eq!(nu, vec![3.0, 3.0, 3.0, 5.0, 5.0]);
    }

    #[test]
    fn data_csv() {
        let d = read_test_data_csv("type,failure_time\n# comment\nT1,2.2\nT1,2.4\nT2,3.2\n".as_bytes()).unwrap();
        assert_eq!(d.failures("T1"), &[2.2, 2.4]);
        assert_eq!(d.n_obs("T3"), 0);
        assert!(read_test_data_csv("type,failure_time\nT1,-1\n".as_bytes()).is_err());
        assert!(read_test_data_csv("type,time\nT1,1\n".as_bytes()).is_err());
        let err = read_test_data_csv("type,failure_time\nT1,1\nT1,x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
