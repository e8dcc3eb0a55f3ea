//! JSON problem documents. Matrices are row-major nested arrays, state
//! indices are 1-based and bounds may use the strings "inf" / "-inf".

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    augment_for_rate_constraints, discretize_zoh, ConstraintSpec, CostWeights, LtiModel, MpcProblem,
    SoftBound, StateBox,
};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// A real number or an infinity sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Value(f64),
    Sentinel(String),
}

impl Bound {
    fn value(&self) -> Result<f64> {
        match self {
            Bound::Value(v) => Ok(*v),
            Bound::Sentinel(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(Error::Config(format!("bad bound {other:?}, expected a number, \"inf\" or \"-inf\""))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousDoc {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub continuous: Option<ContinuousDoc>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    #[serde(default)]
    pub s: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub qn: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sigma1: f64,
    #[serde(default)]
    pub sigma2: f64,
    pub horizon: usize,
    pub u_min: Vec<Bound>,
    pub u_max: Vec<Bound>,
    #[serde(default)]
    pub free: Option<Vec<usize>>,
    #[serde(default)]
    pub hard: Vec<usize>,
    #[serde(default)]
    pub x_min: Vec<Bound>,
    #[serde(default)]
    pub x_max: Vec<Bound>,
    #[serde(default)]
    pub soft: Vec<usize>,
    #[serde(default)]
    pub x_center: Vec<f64>,
    #[serde(default)]
    pub radius: Vec<f64>,
    #[serde(default)]
    pub du_min: Option<Vec<Bound>>,
    #[serde(default)]
    pub du_max: Option<Vec<Bound>>,
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::Dimension(format!("{name}: row {} has {} entries, expected {c}", bad + 1, rows[bad].len())));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Mat::from_row_slice(r, c, &flat))
}

fn bounds(v: &[Bound]) -> Result<Vec<f64>> {
    v.iter().map(Bound::value).collect()
}

fn zero_based(name: &str, idx: &[usize]) -> Result<Vec<usize>> {
    idx.iter()
        .map(|&i| {
            i.checked_sub(1)
                .ok_or_else(|| Error::Config(format!("{name}: indices are 1-based, got 0")))
        })
        .collect()
}

impl ProblemDoc {
    pub fn into_problem(self) -> Result<MpcProblem> {
        let model = match (&self.a, &self.b, &self.continuous) {
            (Some(a), Some(b), None) => LtiModel::new(matrix("a", a)?, matrix("b", b)?)?,
            (None, None, Some(c)) => discretize_zoh(&matrix("continuous.a", &c.a)?, &matrix("continuous.b", &c.b)?, c.ts)?,
            _ => {
                return Err(Error::Config(
                    "give either both \"a\" and \"b\" or a \"continuous\" block".into(),
                ))
            }
        };
        let nx = model.nx();
        let q = matrix("q", &self.q)?;
        let r = matrix("r", &self.r)?;
        let mut w = CostWeights::new(q, r);
        if let Some(s) = &self.s {
            w.s = matrix("s", s)?;
        }
        if let Some(qn) = &self.qn {
            w.qn = matrix("qn", qn)?;
        }
        w.sigma1 = self.sigma1;
        w.sigma2 = self.sigma2;

        let hard = zero_based("hard", &self.hard)?;
        let soft = zero_based("soft", &self.soft)?;
        if self.x_min.len() != hard.len() || self.x_max.len() != hard.len() {
            return Err(Error::Dimension("x_min / x_max must have one entry per hard index".into()));
        }
        if self.x_center.len() != soft.len() || self.radius.len() != soft.len() {
            return Err(Error::Dimension("x_center / radius must have one entry per soft index".into()));
        }
        let free = match &self.free {
            Some(f) => zero_based("free", f)?,
            None => (0..nx).filter(|i| !hard.contains(i) && !soft.contains(i)).collect(),
        };
        let x_min = bounds(&self.x_min)?;
        let x_max = bounds(&self.x_max)?;
        let constraints = ConstraintSpec {
            u_min: bounds(&self.u_min)?,
            u_max: bounds(&self.u_max)?,
            free,
            hard: hard
                .iter()
                .enumerate()
                .map(|(k, &index)| StateBox {
                    index,
                    min: x_min[k],
                    max: x_max[k],
                })
                .collect(),
            soft: soft
                .iter()
                .enumerate()
                .map(|(k, &index)| SoftBound {
                    index,
                    center: self.x_center[k],
                    radius: self.radius[k],
                })
                .collect(),
        };
        let p = MpcProblem::new(model, w, constraints, self.horizon)?;
        match (&self.du_min, &self.du_max) {
            (None, None) => Ok(p),
            (Some(lo), Some(hi)) => augment_for_rate_constraints(&p, &bounds(lo)?, &bounds(hi)?),
            _ => Err(Error::Config("du_min and du_max must be given together".into())),
        }
    }
}

/// Parses a problem document. Convexity is not checked here; see [`super::validate`].
pub fn parse_problem(text: &str) -> Result<MpcProblem> {
    let doc: ProblemDoc = serde_json::from_str(text)?;
    doc.into_problem()
}

pub fn load_problem(path: &Path) -> Result<MpcProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_problem(&text)
}
