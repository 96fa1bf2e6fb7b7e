//! `PPMD` model container: magic, u32 version, u8 kind, feature names, then a
//! kind-specific payload. All integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{ClassifierKind, Knn, LinearSvm, ModelBody, NaiveBayes, Node, RandomForest, TrainedModel, Tree};
use crate::error::{Error, Result};
use crate::features::Label;

pub const MODEL_MAGIC: &[u8; 4] = b"PPMD";
pub const MODEL_VERSION: u32 = 1;

fn kind_code(kind: ClassifierKind) -> u8 {
    match kind {
        ClassifierKind::Nb => 0,
        ClassifierKind::Knn => 1,
        ClassifierKind::Svm => 2,
        ClassifierKind::Rf => 3,
    }
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    w.write_u32::<LE>(len_u32(v.len())?)?;
    for x in v {
        w.write_f64::<LE>(*x)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = r.read_u32::<LE>()? as usize;
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v)?;
    Ok(v)
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("length {n} does not fit the container")))
}

impl TrainedModel {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LE>(MODEL_VERSION)?;
        w.write_u8(kind_code(self.kind()))?;
        w.write_u32::<LE>(len_u32(self.feature_names.len())?)?;
        for name in &self.feature_names {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Format(format!("feature name too long: {name}")))?;
            w.write_u16::<LE>(len)?;
            w.write_all(name.as_bytes())?;
        }
        match &self.body {
            ModelBody::Nb(m) => {
                write_f64s(w, &m.priors)?;
                for c in 0..2 {
                    write_f64s(w, &m.means[c])?;
                    write_f64s(w, &m.variances[c])?;
                }
            }
            ModelBody::Knn(m) => {
                w.write_u32::<LE>(len_u32(m.k)?)?;
                w.write_u32::<LE>(len_u32(m.width)?)?;
                w.write_u32::<LE>(len_u32(m.labels.len())?)?;
                for l in &m.labels {
                    w.write_u8(l.is_pain() as u8)?;
                }
                write_f64s(w, &m.rows)?;
            }
            ModelBody::Svm(m) => {
                write_f64s(w, &m.weights)?;
                w.write_f64::<LE>(m.bias)?;
            }
            ModelBody::Rf(m) => {
                w.write_u32::<LE>(len_u32(m.width)?)?;
                w.write_u32::<LE>(len_u32(m.trees.len())?)?;
                for t in &m.trees {
                    w.write_u32::<LE>(len_u32(t.nodes.len())?)?;
                    for node in &t.nodes {
                        match *node {
                            Node::Leaf { pain } => {
                                w.write_u8(0)?;
                                w.write_u8(pain as u8)?;
                            }
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => {
                                w.write_u8(1)?;
                                w.write_u32::<LE>(len_u32(feature)?)?;
                                w.write_f64::<LE>(threshold)?;
                                w.write_u32::<LE>(len_u32(left)?)?;
                                w.write_u32::<LE>(len_u32(right)?)?;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format(format!("bad model magic {magic:?}")));
        }
        let version = r.read_u32::<LE>()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let kind = r.read_u8()?;
        let count = r.read_u32::<LE>()? as usize;
        let mut names = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.read_u16::<LE>()? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            names.push(
                String::from_utf8(buf).map_err(|e| Error::Format(format!("feature name: {e}")))?,
            );
        }
        let body = match kind {
            0 => {
                let priors = read_f64s(r)?;
                let (m0, v0, m1, v1) = (read_f64s(r)?, read_f64s(r)?, read_f64s(r)?, read_f64s(r)?);
                if priors.len() != 2 {
                    return Err(Error::Format("naive Bayes needs two priors".into()));
                }
                let same = [&v0, &m1, &v1].iter().all(|v| v.len() == m0.len());
                if !same {
                    return Err(Error::Format("naive Bayes parameter widths differ".into()));
                }
                ModelBody::Nb(NaiveBayes {
                    priors: [priors[0], priors[1]],
                    means: [m0, m1],
                    variances: [v0, v1],
                })
            }
            1 => {
                let k = r.read_u32::<LE>()? as usize;
                let width = r.read_u32::<LE>()? as usize;
                let n = r.read_u32::<LE>()? as usize;
                let mut labels = Vec::with_capacity(n.min(1 << 20));
                for _ in 0..n {
                    labels.push(Label::from_pain(r.read_u8()? != 0));
                }
                let rows = read_f64s(r)?;
                if rows.len() != n * width || k == 0 || k > n {
                    return Err(Error::Format("inconsistent kNN payload".into()));
                }
                ModelBody::Knn(Knn {
                    k,
                    width,
                    rows,
                    labels,
                })
            }
            2 => {
                let weights = read_f64s(r)?;
                let bias = r.read_f64::<LE>()?;
                ModelBody::Svm(LinearSvm { weights, bias })
            }
            3 => {
                let width = r.read_u32::<LE>()? as usize;
                let n_trees = r.read_u32::<LE>()? as usize;
                if n_trees == 0 {
                    return Err(Error::Format("random forest without trees".into()));
                }
                let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
                for _ in 0..n_trees {
                    let n_nodes = r.read_u32::<LE>()? as usize;
                    let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
                    for _ in 0..n_nodes {
                        nodes.push(match r.read_u8()? {
                            0 => Node::Leaf {
                                pain: r.read_u8()? != 0,
                            },
                            1 => Node::Split {
                                feature: r.read_u32::<LE>()? as usize,
                                threshold: r.read_f64::<LE>()?,
                                left: r.read_u32::<LE>()? as usize,
                                right: r.read_u32::<LE>()? as usize,
                            },
                            t => return Err(Error::Format(format!("unknown tree node tag {t}"))),
                        });
                    }
                    let valid = !nodes.is_empty()
                        && nodes.iter().all(|n| match *n {
                            Node::Leaf { .. } => true,
                            Node::Split {
                                feature,
                                left,
                                right,
                                ..
                            } => feature < width && left < n_nodes && right < n_nodes,
                        });
                    if !valid {
                        return Err(Error::Format("malformed tree".into()));
                    }
                    trees.push(Tree { nodes });
                }
                ModelBody::Rf(RandomForest { width, trees })
            }
            other => return Err(Error::Format(format!("unknown model kind {other}"))),
        };
        TrainedModel::new(names, body).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
