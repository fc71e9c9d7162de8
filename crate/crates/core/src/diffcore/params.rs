use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::DiffError;

/// One named block of a flat parameter array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Shape of a parameter block together with its initialisation bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDef {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Entries are drawn from `U(-bound, bound)`.
    pub bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    /// Packs segments back to back in the given order.
    pub fn from_defs(defs: &[ParamDef]) -> Self {
        let mut offset = 0;
        let segments = defs
            .iter()
            .map(|d| {
                let s = Segment { name: d.name.clone(), offset, rows: d.rows, cols: d.cols };
                offset += s.len();
                s
            })
            .collect();
        Layout { segments }
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn find(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Offsets must tile `0..total_len` without gaps or overlap.
    pub fn is_partition(&self) -> bool {
        let mut next = 0;
        for s in &self.segments {
            if s.offset != next {
                return false;
            }
            next += s.len();
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        ParamVector { values: vec![0.0; layout.total_len()], layout }
    }

    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self, DiffError> {
        if values.len() != layout.total_len() || !layout.is_partition() {
            return Err(DiffError::LayoutMismatch {
                expected: layout.total_len(),
                found: values.len(),
            });
        }
        Ok(ParamVector { values, layout })
    }

    /// Scaled-uniform draw for every segment.
    pub fn random(defs: &[ParamDef], rng: &mut impl Rng) -> Self {
        let layout = Layout::from_defs(defs);
        let mut values = Vec::with_capacity(layout.total_len());
        for d in defs {
            for _ in 0..d.rows * d.cols {
                values.push(if d.bound > 0.0 { rng.gen_range(-d.bound..d.bound) } else { 0.0 });
            }
        }
        ParamVector { values, layout }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.find(name).map(|s| &self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.layout.find(name)?.range();
        Some(&mut self.values[r])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<(), DiffError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => {
                let seg = self
                    .layout
                    .segments
                    .iter()
                    .find(|s| s.range().contains(&i))
                    .map_or_else(|| "?".to_string(), |s| s.name.clone());
                Err(DiffError::NumericFault { layer: format!("parameter {seg}[{i}]") })
            }
        }
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.layout == other.layout
    }

    /// Records one leaf per segment, in layout order.
    pub fn record(&self, tape: &mut Tape) -> Vec<Var> {
        self.layout
            .segments
            .iter()
            .map(|s| tape.leaf(s.rows, s.cols, &self.values[s.range()]))
            .collect()
    }

    /// Collects per-segment gradient nodes back into a flat vector.
    pub fn gather(&self, tape: &Tape, grads: &[Var]) -> ParamVector {
        let mut values = Vec::with_capacity(self.len());
        for (s, &g) in self.layout.segments.iter().zip(grads) {
            debug_assert_eq!(tape.shape(g), (s.rows, s.cols));
            values.extend_from_slice(tape.value(g));
        }
        ParamVector { values, layout: self.layout.clone() }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Adds `other` into `self` element-wise.
    pub fn accumulate(&mut self, other: &ParamVector) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.values {
            *a *= c;
        }
    }
}
