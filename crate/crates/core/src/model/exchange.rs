//! Text exchange format for similarity matrices produced by external
//! models.
//!
//! ```text
//! stea-sim<TAB>1
//! direction<TAB>source_to_target
//! shape<TAB><rows><TAB><cols>
//! layout<TAB>dense                      (or: layout<TAB>topk)
//! fill<TAB><score>                      (topk only)
//! columns<TAB><label><TAB><label>...    (dense only; column order)
//! rows
//! <row label><TAB><score><TAB><score>...                    (dense)
//! <row label><TAB><label><TAB><score><TAB><label><TAB><score>...  (topk)
//! ```
//!
//! Labels refer to entities of the loaded graphs: rows come from the
//! direction's source graph, columns from its target graph. Every row
//! entity must appear exactly once; rows may come in any order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{check_fit_args, EaModel, FitReport, SimData, SimMatrix};
use crate::error::{Error, Result};
use crate::kg::{Direction, EntityId, Kg, KgPair, MappingSet};

const MAGIC: &str = "stea-sim";

pub fn write_sim_matrix(path: &Path, sim: &SimMatrix, pair: &KgPair) -> Result<()> {
    let view = pair.oriented(sim.direction());
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}\t1");
    let _ = writeln!(out, "direction\t{}", sim.direction());
    let _ = writeln!(out, "shape\t{}\t{}", sim.n_rows(), sim.n_cols());
    match sim.data() {
        SimData::Dense(_) => {
            out.push_str("layout\tdense\ncolumns");
            for l in view.target.entity_labels() {
                out.push('\t');
                out.push_str(l);
            }
            out.push_str("\nrows\n");
            for i in 0..sim.n_rows() {
                out.push_str(view.source.entity_label(i));
                for v in sim.row(i) {
                    let _ = write!(out, "\t{v}");
                }
                out.push('\n');
            }
        }
        SimData::TopK { rows, fill } => {
            let _ = writeln!(out, "layout\ttopk\nfill\t{fill}\nrows");
            for (i, row) in rows.iter().enumerate() {
                out.push_str(view.source.entity_label(i));
                for &(c, v) in row {
                    let _ = write!(out, "\t{}\t{v}", view.target.entity_label(c));
                }
                out.push('\n');
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_owned(),
            line,
            msg: msg.into(),
        }
    }

    fn next_fields(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, raw) in self.lines.by_ref() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.is_empty() {
                continue;
            }
            return Some((i + 1, line.split('\t').collect()));
        }
        None
    }

    fn header(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.next_fields() {
            Some((n, f)) if f[0] == key => Ok((n, f[1..].to_vec())),
            Some((n, f)) => Err(self.err(n, format!("expected `{key}`, found `{}`", f[0]))),
            None => Err(self.err(0, format!("missing `{key}` header"))),
        }
    }
}

fn parse_score(r: &Reader<'_>, line: usize, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(r.err(line, format!("bad score {s:?}"))),
    }
}

fn resolve(r: &Reader<'_>, line: usize, kg: &Kg, label: &str) -> Result<EntityId> {
    kg.entity_id(label)
        .ok_or_else(|| r.err(line, format!("unknown entity {label:?}")))
}

/// Reads a similarity file and maps it onto the internal ids of `pair`.
pub fn read_sim_matrix(path: &Path, pair: &KgPair) -> Result<SimMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        path,
        lines: text.lines().enumerate(),
    };
    let (n, magic) = r.header(MAGIC)?;
    if magic != ["1"] {
        return Err(r.err(n, "unsupported format version"));
    }
    let (n, dir) = r.header("direction")?;
    let direction = dir
        .first()
        .and_then(|d| Direction::parse(d))
        .ok_or_else(|| r.err(n, "bad direction"))?;
    let view = pair.oriented(direction);
    let (n, shape) = r.header("shape")?;
    let dims: Vec<usize> = shape.iter().filter_map(|s| s.parse().ok()).collect();
    if dims.len() != 2 || shape.len() != 2 {
        return Err(r.err(n, "shape needs two integers"));
    }
    if dims[0] != view.source.num_entities() || dims[1] != view.target.num_entities() {
        return Err(r.err(
            n,
            format!(
                "shape {}x{} does not match the loaded graphs ({}x{})",
                dims[0],
                dims[1],
                view.source.num_entities(),
                view.target.num_entities()
            ),
        ));
    }
    let (n_rows, n_cols) = (dims[0], dims[1]);
    let (n, layout) = r.header("layout")?;
    let dense = match layout.first().copied() {
        Some("dense") => true,
        Some("topk") => false,
        _ => return Err(r.err(n, "layout must be dense or topk")),
    };

    let mut seen = vec![false; n_rows];
    let mark = |r: &Reader<'_>, seen: &mut Vec<bool>, line: usize, id: EntityId| {
        if std::mem::replace(&mut seen[id], true) {
            Err(r.err(line, "row listed twice"))
        } else {
            Ok(())
        }
    };
    let sim = if dense {
        let (n, cols) = r.header("columns")?;
        if cols.len() != n_cols {
            return Err(r.err(n, "column list does not match shape"));
        }
        let mut col_ids = Vec::with_capacity(n_cols);
        let mut col_seen = vec![false; n_cols];
        for c in &cols {
            let id = resolve(&r, n, view.target, c)?;
            if std::mem::replace(&mut col_seen[id], true) {
                return Err(r.err(n, format!("column {c:?} listed twice")));
            }
            col_ids.push(id);
        }
        r.header("rows")?;
        let mut data = vec![0.0; n_rows * n_cols];
        while let Some((n, f)) = r.next_fields() {
            if f.len() != n_cols + 1 {
                return Err(r.err(n, format!("expected {} scores", n_cols)));
            }
            let row = resolve(&r, n, view.source, f[0])?;
            mark(&r, &mut seen, n, row)?;
            for (k, s) in f[1..].iter().enumerate() {
                data[row * n_cols + col_ids[k]] = parse_score(&r, n, s)?;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(r.err(0, "not every row entity is present"));
        }
        SimMatrix::dense(direction, n_rows, n_cols, data)?
    } else {
        let (n, fill) = r.header("fill")?;
        let fill = parse_score(&r, n, fill.first().copied().unwrap_or(""))?;
        r.header("rows")?;
        let mut rows = vec![Vec::new(); n_rows];
        while let Some((n, f)) = r.next_fields() {
            if f.len() % 2 != 1 {
                return Err(r.err(n, "expected label/score pairs"));
            }
            let row = resolve(&r, n, view.source, f[0])?;
            mark(&r, &mut seen, n, row)?;
            for kv in f[1..].chunks(2) {
                rows[row].push((resolve(&r, n, view.target, kv[0])?, parse_score(&r, n, kv[1])?));
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(r.err(0, "not every row entity is present"));
        }
        SimMatrix::top_k(direction, n_cols, rows, fill)?
    };
    Ok(sim)
}

/// Wraps similarity matrices computed outside this crate.
///
/// If only one direction is supplied the other is its transpose.
#[derive(Clone, Debug)]
pub struct PrecomputedModel {
    forward: SimMatrix,
    backward: Option<SimMatrix>,
}

impl PrecomputedModel {
    /// `first` may be of either direction; `second`, if given, must be the
    /// opposite one.
    pub fn new(first: SimMatrix, second: Option<SimMatrix>) -> Result<Self> {
        let (forward, backward) = match first.direction() {
            Direction::SourceToTarget => (first, second),
            Direction::TargetToSource => match second {
                Some(s) => (s, Some(first)),
                None => (first.transpose(), None),
            },
        };
        if forward.direction() != Direction::SourceToTarget {
            return Err(Error::InvalidArgument(
                "both similarity matrices have the same direction".into(),
            ));
        }
        if let Some(b) = &backward {
            if b.direction() != Direction::TargetToSource
                || b.n_rows() != forward.n_cols()
                || b.n_cols() != forward.n_rows()
            {
                return Err(Error::InvalidArgument(
                    "reverse similarity matrix does not match the forward one".into(),
                ));
            }
        }
        Ok(Self { forward, backward })
    }
}

impl EaModel for PrecomputedModel {
    fn name(&self) -> &str {
        "import"
    }

    fn fit(&mut self, pair: &KgPair, train: &MappingSet, epochs: usize) -> Result<FitReport> {
        check_fit_args(train, epochs)?;
        train.validate(pair.as_ref())?;
        Ok(FitReport::default())
    }

    fn similarities(&self, pair: &KgPair, direction: Direction) -> Result<SimMatrix> {
        if self.forward.n_rows() != pair.source.num_entities()
            || self.forward.n_cols() != pair.target.num_entities()
        {
            return Err(Error::InvalidArgument(
                "graph pair does not match the imported matrix".into(),
            ));
        }
        Ok(match direction {
            Direction::SourceToTarget => self.forward.clone(),
            Direction::TargetToSource => match &self.backward {
                Some(b) => b.clone(),
                None => self.forward.transpose(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KgBuilder;

    fn pair() -> KgPair {
        let mut a = KgBuilder::new();
        a.triple("a", "r", "b");
        a.entity("c");
        let mut b = KgBuilder::new();
        b.triple("x", "r", "y");
        KgPair::new(a.build(), b.build())
    }

    #[test]
    fn dense_and_sparse_survive_a_file_round_trip() {
        let p = pair();
        let dir = tempfile::tempdir().unwrap();
        let m = SimMatrix::dense(Direction::SourceToTarget, 3, 2, vec![0.1, 0.2, -0.3, 0.4, 1.0 / 3.0, 0.0]).unwrap();
        let f = dir.path().join("m.sim");
        write_sim_matrix(&f, &m, &p).unwrap();
        assert_eq!(read_sim_matrix(&f, &p).unwrap(), m);

        let t = m.transpose().truncate(2);
        write_sim_matrix(&f, &t, &p).unwrap();
        assert_eq!(read_sim_matrix(&f, &p).unwrap(), t);
    }

    #[test]
    fn columns_and_rows_may_be_reordered() {
        let p = pair();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("m.sim");
        fs::write(
            &f,
            "stea-sim\t1\ndirection\tsource_to_target\nshape\t3\t2\nlayout\tdense\ncolumns\ty\tx\nrows\nc\t5\t6\na\t1\t2\nb\t3\t4\n",
        )
        .unwrap();
        let m = read_sim_matrix(&f, &p).unwrap();
        assert_eq!(m.row(0), vec![2.0, 1.0]);
        assert_eq!(m.row(2), vec![6.0, 5.0]);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let p = pair();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("m.sim");
        let head = "stea-sim\t1\ndirection\tsource_to_target\nshape\t3\t2\nlayout\tdense\ncolumns\tx\ty\nrows\n";
        for body in [
            "a\t1\t2\nb\t3\t4\n",              // missing row c
            "a\t1\t2\nb\t3\t4\nc\t5\n",        // short row
            "a\t1\t2\nb\t3\t4\nc\t5\tNaN\n",   // non-finite
            "a\t1\t2\na\t3\t4\nc\t5\t6\n",     // duplicate row
            "a\t1\t2\nb\t3\t4\nzz\t5\t6\n",    // unknown label
        ] {
            fs::write(&f, format!("{head}{body}")).unwrap();
            assert!(read_sim_matrix(&f, &p).is_err(), "{body:?}");
        }
        fs::write(&f, "stea-sim\t1\ndirection\tsource_to_target\nshape\t2\t2\n").unwrap();
        assert!(read_sim_matrix(&f, &p).is_err());
    }

    #[test]
    fn precomputed_model_fills_missing_direction() {
        let p = pair();
        let m = SimMatrix::dense(Direction::SourceToTarget, 3, 2, vec![0.0; 6]).unwrap();
        let model = PrecomputedModel::new(m.clone(), None).unwrap();
        assert_eq!(model.similarities(&p, Direction::TargetToSource).unwrap(), m.transpose());
        assert!(PrecomputedModel::new(m.clone(), Some(m)).is_err());
    }
}
