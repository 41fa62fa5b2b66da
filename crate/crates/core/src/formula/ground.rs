use std::collections::{BTreeMap, HashMap};

use super::cnf::CnfTemplate;
use super::FormulaError;

/// Anything that maps a slot name to that slot's output vector.
pub trait Bindings {
    fn outputs(&self, slot: &str) -> Option<&[f64]>;
}

impl Bindings for BTreeMap<String, Vec<f64>> {
    fn outputs(&self, slot: &str) -> Option<&[f64]> {
        self.get(slot).map(Vec::as_slice)
    }
}

impl Bindings for HashMap<String, Vec<f64>> {
    fn outputs(&self, slot: &str) -> Option<&[f64]> {
        self.get(slot).map(Vec::as_slice)
    }
}

impl Bindings for [(&str, &[f64])] {
    fn outputs(&self, slot: &str) -> Option<&[f64]> {
        self.iter().find(|(s, _)| *s == slot).map(|(_, v)| *v)
    }
}

/// Flat indexing of the outputs of all slots a template mentions.
///
/// Slots are laid out in sorted name order; `offsets[k]` is where slot `k`
/// starts in the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayout {
    pub slots: Vec<String>,
    pub offsets: Vec<usize>,
    pub arities: Vec<usize>,
}

impl OutputLayout {
    pub fn len(&self) -> usize {
        self.offsets.last().map_or(0, |o| o + self.arities.last().unwrap())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot_index(&self, slot: &str) -> Option<usize> {
        self.slots.iter().position(|s| s == slot)
    }

    /// Maps a flat index back to `(slot position, output index)`.
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let k = self.offsets.partition_point(|&o| o <= flat) - 1;
        (k, flat - self.offsets[k])
    }

    /// Splits a flat vector into per-slot pieces.
    pub fn split<'a>(&self, flat: &'a [f64]) -> Vec<(&str, &'a [f64])> {
        self.slots
            .iter()
            .zip(self.offsets.iter().zip(&self.arities))
            .map(|(s, (&o, &n))| (s.as_str(), &flat[o..o + n]))
            .collect()
    }
}

/// Atom values of a template on concrete outputs, with the linear rows
/// `dv/d outputs` for each atom (sparse, over the flat layout).
#[derive(Debug, Clone, PartialEq)]
pub struct Grounding {
    pub values: Vec<f64>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub layout: OutputLayout,
}

pub fn ground<B: Bindings + ?Sized>(
    template: &CnfTemplate,
    bindings: &B,
) -> Result<Grounding, FormulaError> {
    let mut slots = Vec::new();
    let mut offsets = Vec::new();
    let mut arities = Vec::new();
    let mut flat: Vec<&[f64]> = Vec::new();
    let mut acc = 0;
    for name in &template.slot_names {
        let out = bindings
            .outputs(name)
            .ok_or_else(|| FormulaError::UnknownSlot(name.clone()))?;
        slots.push(name.clone());
        offsets.push(acc);
        arities.push(out.len());
        flat.push(out);
        acc += out.len();
    }
    let layout = OutputLayout {
        slots,
        offsets,
        arities,
    };

    let mut values = Vec::with_capacity(template.atom_count());
    let mut rows = Vec::with_capacity(template.atom_count());
    for atom in template.atoms() {
        let mut v = atom.term.offset;
        let mut row = Vec::with_capacity(atom.term.refs.len());
        for r in &atom.term.refs {
            let k = layout.slot_index(&r.slot).expect("slot collected above");
            let out = flat[k];
            if r.index >= out.len() {
                return Err(FormulaError::IndexOutOfRange {
                    slot: r.slot.clone(),
                    index: r.index,
                    arity: out.len(),
                });
            }
            v += r.coef * out[r.index];
            row.push((layout.offsets[k] + r.index, r.coef));
        }
        values.push(v);
        rows.push(row);
    }
    Ok(Grounding {
        values,
        rows,
        layout,
    })
}
