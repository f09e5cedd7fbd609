use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsdp::{BoxSet, ConstraintMap, DualIterate, QOperatorSpec, QsdpProblem};
use crate::svec::svec_len;

pub const FORMAT_VERSION: &str = "sgs-admm/1";

/// Entrywise bounds of `N`; `null` stands for an infinite bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoxFile {
    Nonneg,
    Box {
        lower: Vec<Vec<Option<f64>>>,
        upper: Vec<Vec<Option<f64>>>,
    },
}

/// `Q` as stored on disk. Explicit operators act on `svec` coordinates and
/// are given either densely or as triplets of one triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QFile {
    Vacuous,
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        triplets: Option<Vec<(usize, usize, f64)>>,
    },
    SymKronecker {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    },
    Lyapunov {
        a: Vec<Vec<f64>>,
    },
}

/// JSON problem file. Constraint rows are `[row, svec column, value]`
/// triplets; the row counts are the lengths of `b_E`, `b_I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub version: String,
    pub n: usize,
    #[serde(rename = "box")]
    pub set: BoxFile,
    #[serde(rename = "Q")]
    pub q: QFile,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "A_E")]
    pub a_e: Vec<(usize, usize, f64)>,
    #[serde(rename = "b_E")]
    pub b_e: Vec<f64>,
    #[serde(rename = "A_I")]
    pub a_i: Vec<(usize, usize, f64)>,
    #[serde(rename = "b_I")]
    pub b_i: Vec<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Format(format!("{what} must be {n} x {n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn bound_rows(m: &DMatrix<f64>) -> Vec<Vec<Option<f64>>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|&v| v.is_finite().then_some(v)).collect())
        .collect()
}

fn bounds_from_rows(rows: &[Vec<Option<f64>>], n: usize, missing: f64, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Format(format!("{what} must be {n} x {n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j].unwrap_or(missing)))
}

impl ProblemFile {
    pub fn from_problem(p: &QsdpProblem<f64>) -> Self {
        let set = if p.set == BoxSet::nonneg(p.n) {
            BoxFile::Nonneg
        } else {
            BoxFile::Box {
                lower: bound_rows(&p.set.lower),
                upper: bound_rows(&p.set.upper),
            }
        };
        let q = match &p.q {
            QOperatorSpec::Vacuous => QFile::Vacuous,
            QOperatorSpec::Explicit(m) => QFile::Explicit {
                matrix: Some(rows(m)),
                triplets: None,
            },
            QOperatorSpec::SymKron { a, b } => QFile::SymKronecker { a: rows(a), b: rows(b) },
            QOperatorSpec::Lyapunov { a } => QFile::Lyapunov { a: rows(a) },
        };
        Self {
            version: FORMAT_VERSION.to_string(),
            n: p.n,
            set,
            q,
            c: rows(&p.c),
            a_e: p.a_e.triplets(),
            b_e: p.b_e.iter().copied().collect(),
            a_i: p.a_i.triplets(),
            b_i: p.b_i.iter().copied().collect(),
        }
    }

    pub fn into_problem(self) -> Result<QsdpProblem<f64>> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {:?}, expected {FORMAT_VERSION:?}",
                self.version
            )));
        }
        let n = self.n;
        let set = match &self.set {
            BoxFile::Nonneg => BoxSet::nonneg(n),
            BoxFile::Box { lower, upper } => BoxSet {
                lower: bounds_from_rows(lower, n, f64::NEG_INFINITY, "box lower")?,
                upper: bounds_from_rows(upper, n, f64::INFINITY, "box upper")?,
            },
        };
        let q = match &self.q {
            QFile::Vacuous => QOperatorSpec::Vacuous,
            QFile::Explicit { matrix, triplets } => {
                let nv = svec_len(n);
                let m = match (matrix, triplets) {
                    (Some(m), None) => from_rows(m, nv, "explicit Q")?,
                    (None, Some(t)) => {
                        let mut m = DMatrix::zeros(nv, nv);
                        for &(i, j, v) in t {
                            if i >= nv || j >= nv {
                                return Err(Error::Format(format!("explicit Q entry ({i}, {j}) outside {nv} x {nv}")));
                            }
                            m[(i, j)] += v;
                            if i != j {
                                m[(j, i)] += v;
                            }
                        }
                        m
                    }
                    _ => return Err(Error::Format("explicit Q needs exactly one of matrix, triplets".into())),
                };
                QOperatorSpec::Explicit(m)
            }
            QFile::SymKronecker { a, b } => QOperatorSpec::SymKron {
                a: from_rows(a, n, "Q operand A")?,
                b: from_rows(b, n, "Q operand B")?,
            },
            QFile::Lyapunov { a } => QOperatorSpec::Lyapunov {
                a: from_rows(a, n, "Q operand A")?,
            },
        };
        QsdpProblem::new(
            n,
            q,
            from_rows(&self.c, n, "C")?,
            ConstraintMap::from_triplets(self.b_e.len(), n, &self.a_e)?,
            DVector::from_vec(self.b_e),
            ConstraintMap::from_triplets(self.b_i.len(), n, &self.a_i)?,
            DVector::from_vec(self.b_i),
            set,
        )
    }
}

pub fn load_problem(path: &Path) -> Result<QsdpProblem<f64>> {
    let file: ProblemFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    file.into_problem()
}

pub fn save_problem(path: &Path, problem: &QsdpProblem<f64>) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, &ProblemFile::from_problem(problem))?;
    Ok(())
}

/// A [`DualIterate`] on disk, e.g. a reference point for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateFile {
    pub version: String,
    pub n: usize,
    #[serde(rename = "Z")]
    pub z: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    pub y_e: Vec<f64>,
    pub y_i: Vec<f64>,
    #[serde(rename = "X")]
    pub x: Vec<Vec<f64>>,
    pub u: Vec<f64>,
}

impl IterateFile {
    pub fn from_iterate(it: &DualIterate<f64>) -> Self {
        let v = |d: &DVector<f64>| d.iter().copied().collect();
        Self {
            version: FORMAT_VERSION.to_string(),
            n: it.x.nrows(),
            z: rows(&it.z),
            v: v(&it.v),
            w: rows(&it.w),
            s: rows(&it.s),
            y_e: v(&it.y_e),
            y_i: v(&it.y_i),
            x: rows(&it.x),
            u: v(&it.u),
        }
    }

    pub fn into_iterate(self) -> Result<DualIterate<f64>> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported iterate version {:?}", self.version)));
        }
        let n = self.n;
        Ok(DualIterate {
            z: from_rows(&self.z, n, "Z")?,
            v: DVector::from_vec(self.v),
            w: from_rows(&self.w, n, "W")?,
            s: from_rows(&self.s, n, "S")?,
            y_e: DVector::from_vec(self.y_e),
            y_i: DVector::from_vec(self.y_i),
            x: from_rows(&self.x, n, "X")?,
            u: DVector::from_vec(self.u),
        })
    }
}

pub fn load_iterate(path: &Path) -> Result<DualIterate<f64>> {
    let file: IterateFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    file.into_iterate()
}

pub fn save_iterate(path: &Path, it: &DualIterate<f64>) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, &IterateFile::from_iterate(it))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsdp::{random_biq, BiqVariant};
    use crate::random::rng;

    #[test]
    fn problem_round_trip() {
        let mut r = rng(11);
        let dir = tempfile::tempdir().unwrap();
        for v in BiqVariant::ALL {
            let p = random_biq(&mut r, 4, v).unwrap();
            let path = dir.path().join(format!("{}.json", v.name()));
            save_problem(&path, &p).unwrap();
            let back = load_problem(&path).unwrap();
            assert_eq!(back.q, p.q);
            assert_eq!(back.c, p.c);
            assert_eq!(back.set, p.set);
            assert_eq!(back.a_e.dense(), p.a_e.dense());
            assert_eq!(back.a_i.dense(), p.a_i.dense());
            assert_eq!(back.b_i, p.b_i);
        }
    }

    #[test]
    fn box_with_open_bounds() {
        let text = r#"{
            "version": "sgs-admm/1", "n": 2,
            "box": {"kind": "box", "lower": [[0, null], [null, 0]], "upper": [[1, 2], [2, null]]},
            "Q": {"kind": "explicit", "triplets": [[0, 0, 1.0], [0, 1, 0.5], [1, 1, 1.0], [2, 2, 1.0]]},
            "C": [[1, 0], [0, 1]],
            "A_E": [[0, 0, 1.0], [0, 2, 1.0]], "b_E": [1.0],
            "A_I": [], "b_I": []
        }"#;
        let f: ProblemFile = serde_json::from_str(text).unwrap();
        let p = f.into_problem().unwrap();
        assert_eq!(p.set.lower[(0, 1)], f64::NEG_INFINITY);
        assert_eq!(p.set.upper[(1, 1)], f64::INFINITY);
        match &p.q {
            QOperatorSpec::Explicit(m) => assert_eq!(m[(1, 0)], 0.5),
            other => panic!("unexpected {other:?}"),
        }
        let again = ProblemFile::from_problem(&p);
        assert!(matches!(again.set, BoxFile::Box { .. }));
        assert_eq!(again.into_problem().unwrap().set, p.set);
    }

    #[test]
    fn rejects_wrong_version_and_shapes() {
        let mut r = rng(12);
        let p = random_biq(&mut r, 3, BiqVariant::Linear).unwrap();
        let mut f = ProblemFile::from_problem(&p);
        f.version = "other/0".into();
        assert!(f.clone().into_problem().is_err());
        f.version = FORMAT_VERSION.into();
        f.c.pop();
        assert!(f.into_problem().is_err());
    }

    #[test]
    fn iterate_round_trip() {
        let mut it = DualIterate::<f64>::zeros(3, 2, 1);
        it.x[(0, 1)] = 0.5;
        it.x[(1, 0)] = 0.5;
        it.y_e[1] = -2.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("it.json");
        save_iterate(&path, &it).unwrap();
        assert_eq!(load_iterate(&path).unwrap(), it);
    }
}
