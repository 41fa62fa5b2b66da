//! Constraint templates from the handwritten-formula and superclass tasks.
//! They exercise the parser and encoder; no experiment trains on them.

use std::collections::BTreeMap;

use crate::formula::{compile, CnfTemplate, CompileOptions};

use super::HarnessError;

/// Classes 0..10 are digits, 10..14 the four operators.
pub const HWF_DIGITS: usize = 10;
pub const HWF_CLASSES: usize = 14;

fn sum(slot: &str, range: std::ops::Range<usize>) -> String {
    range
        .map(|c| format!("{}.p[{}]", slot, c))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Adjacent symbols are either both digits or exactly one is an operator.
/// Symbols live in slots `s0 .. s<k-1>`.
pub fn hwf_source(k: usize) -> String {
    (0..k.saturating_sub(1))
        .map(|i| {
            let (a, b) = (format!("s{}", i), format!("s{}", i + 1));
            format!(
                "({} + {} == 2 | {} + {} == 1)",
                sum(&a, 0..HWF_DIGITS),
                sum(&b, 0..HWF_DIGITS),
                sum(&a, HWF_DIGITS..HWF_CLASSES),
                sum(&b, HWF_DIGITS..HWF_CLASSES)
            )
        })
        .collect::<Vec<_>>()
        .join(" & ")
}

/// Each superclass has either no mass or all of it. `groups[s]` lists the
/// classes of superclass `s` in slot `x`.
pub fn superclass_source(groups: &[Vec<usize>]) -> String {
    groups
        .iter()
        .map(|g| {
            let p = g.iter().map(|c| format!("x.p[{}]", c)).collect::<Vec<_>>().join(" + ");
            format!("({p} <= 0 | {p} >= 1)")
        })
        .collect::<Vec<_>>()
        .join(" & ")
}

/// The named fixtures at small sizes.
pub fn fixture_constraints() -> Result<BTreeMap<String, (String, CnfTemplate)>, HarnessError> {
    let opts = CompileOptions::default();
    let mut out = BTreeMap::new();
    for (name, src) in [
        ("hwf_k4", hwf_source(4)),
        ("superclass_2x2", superclass_source(&[vec![0, 1], vec![2, 3]])),
        ("superclass_cifar10", superclass_source(&[vec![0, 1, 8, 9], vec![2, 3, 4, 5, 6, 7]])),
    ] {
        let t = compile(&src, &opts)?;
        out.insert(name.to_string(), (src, t));
    }
    Ok(out)
}
