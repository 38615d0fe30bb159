//! Labelling functions over finite unions of boxes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Bounds, Grid};
use crate::par::Exec;

/// At most this many propositions fit in a [`PropSet`].
pub const MAX_PROPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("duplicate proposition `{0}`")]
    Duplicate(String),
    #[error("at most {MAX_PROPS} propositions are supported, got {0}")]
    TooMany(usize),
    #[error("proposition `{name}`: box has dimension {got}, expected {expected}")]
    Dimension {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("proposition `{name}` declares unknown complement `{complement}`")]
    UnknownComplement { name: String, complement: String },
    #[error("complements of `{a}` and `{b}` disagree")]
    AsymmetricComplement { a: String, b: String },
}

/// Set of propositions as a bitmask over the alphabet of a [`LabellingSpec`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PropSet(pub u64);

impl PropSet {
    pub const EMPTY: PropSet = PropSet(0);

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn with(mut self, i: usize) -> Self {
        self.insert(i);
        self
    }

    pub fn is_subset(self, other: PropSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_PROPS).filter(move |&i| self.contains(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposition {
    pub name: String,
    pub boxes: Vec<Bounds>,
    /// Name of the proposition standing for the negation of this one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabellingSpec {
    props: Vec<Proposition>,
}

impl LabellingSpec {
    pub fn new(props: Vec<Proposition>) -> Result<Self, LabelError> {
        if props.len() > MAX_PROPS {
            return Err(LabelError::TooMany(props.len()));
        }
        for (i, p) in props.iter().enumerate() {
            if props[..i].iter().any(|q| q.name == p.name) {
                return Err(LabelError::Duplicate(p.name.clone()));
            }
        }
        let spec = LabellingSpec { props };
        for p in &spec.props {
            if let Some(c) = &p.complement {
                let Some(j) = spec.index(c) else {
                    return Err(LabelError::UnknownComplement {
                        name: p.name.clone(),
                        complement: c.clone(),
                    });
                };
                if let Some(back) = &spec.props[j].complement {
                    if back != &p.name {
                        return Err(LabelError::AsymmetricComplement {
                            a: p.name.clone(),
                            b: c.clone(),
                        });
                    }
                }
            }
        }
        Ok(spec)
    }

    /// Checks dimensions and clips every box to `x_box`, returning a warning
    /// for each box that had to be changed.
    pub fn clip_to(&mut self, x_box: &Bounds) -> Result<Vec<String>, LabelError> {
        let mut warnings = Vec::new();
        for p in &mut self.props {
            let mut kept = Vec::with_capacity(p.boxes.len());
            for b in &p.boxes {
                if b.dim() != x_box.dim() {
                    return Err(LabelError::Dimension {
                        name: p.name.clone(),
                        expected: x_box.dim(),
                        got: b.dim(),
                    });
                }
                match b.intersection(x_box) {
                    Some(c) if &c == b => kept.push(c),
                    Some(c) => {
                        warnings.push(format!("proposition `{}`: box {:?} clipped to the state box", p.name, b));
                        kept.push(c);
                    }
                    None => warnings.push(format!(
                        "proposition `{}`: box {:?} lies outside the state box and was dropped",
                        p.name, b
                    )),
                }
            }
            p.boxes = kept;
        }
        Ok(warnings)
    }

    pub fn len(&self) -> usize {
        self.props.len()
    }

    pub fn is_empty(&self) -> bool {
        self.props.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.props.iter().map(|p| p.name.as_str())
    }

    pub fn props(&self) -> &[Proposition] {
        &self.props
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|p| p.name == name)
    }

    /// Complement declared for `name`, in either direction.
    pub fn complement_of(&self, name: &str) -> Option<&str> {
        if let Some(c) = self.props.iter().find(|p| p.name == name).and_then(|p| p.complement.as_deref()) {
            return Some(c);
        }
        self.props
            .iter()
            .find(|p| p.complement.as_deref() == Some(name))
            .map(|p| p.name.as_str())
    }

    pub fn set_of<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Option<PropSet> {
        let mut s = PropSet::EMPTY;
        for n in names {
            s.insert(self.index(n)?);
        }
        Some(s)
    }

    pub fn names_of(&self, s: PropSet) -> Vec<&str> {
        s.iter().map(|i| self.props[i].name.as_str()).collect()
    }

    /// `L(x)`: propositions whose (closed) region contains `x`.
    pub fn label(&self, x: &[f64]) -> PropSet {
        let mut s = PropSet::EMPTY;
        for (i, p) in self.props.iter().enumerate() {
            if p.boxes.iter().any(|b| b.contains(x)) {
                s.insert(i);
            }
        }
        s
    }

    /// Erodes every box by `eps`. For single-box regions this is exactly the
    /// ε-strengthening; for unions it under-approximates it.
    pub fn strengthen(&self, eps: f64) -> LabellingSpec {
        LabellingSpec {
            props: self
                .props
                .iter()
                .map(|p| Proposition {
                    name: p.name.clone(),
                    boxes: p.boxes.iter().filter_map(|b| b.erode(eps)).collect(),
                    complement: p.complement.clone(),
                })
                .collect(),
        }
    }

    /// Labels for every cell: `π` iff the closed cell (within the covered
    /// box) fits inside one box of `π`'s region.
    pub fn cell_label(&self, grid: &Grid, exec: Exec) -> Vec<PropSet> {
        exec.map_range(grid.len(), |flat| {
            let cell = grid.cell_box_clipped(&grid.unflatten(flat));
            let mut s = PropSet::EMPTY;
            for (i, p) in self.props.iter().enumerate() {
                if p.boxes.iter().any(|b| b.contains_box(&cell)) {
                    s.insert(i);
                }
            }
            s
        })
    }
}
