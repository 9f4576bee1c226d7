use crate::ad::Scalar;
use crate::error::{Error, Result};

/// Index of a scalar inside the [`ParamVector`].
pub type Slot = usize;

/// A named, contiguous run of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Flat vector of every differentiable scene quantity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    blocks: Vec<ParamBlock>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a named block and return its first slot.
    pub fn push_block(&mut self, name: impl Into<String>, values: &[f64]) -> Result<Slot> {
        let name = name.into();
        if self.blocks.iter().any(|b| b.name == name) {
            return Err(Error::config(format!("duplicate parameter name `{name}`")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(format!("parameter `{name}` is not finite")));
        }
        let start = self.values.len();
        self.values.extend_from_slice(values);
        self.blocks.push(ParamBlock {
            name,
            start,
            len: values.len(),
        });
        Ok(start)
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, value: f64) -> Result<Slot> {
        self.push_block(name, &[value])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Replace all values; the length must not change.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::config(format!(
                "parameter length mismatch: expected {}, got {}",
                self.values.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("parameter vector".into()));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Resolve `name` or `name[i]` to a slot.
    pub fn resolve(&self, reference: &str) -> Result<Slot> {
        let (name, idx) = match reference.split_once('[') {
            Some((n, rest)) => {
                let i = rest
                    .strip_suffix(']')
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| Error::config(format!("bad parameter reference `{reference}`")))?;
                (n, Some(i))
            }
            None => (reference, None),
        };
        let block = self
            .block(name)
            .ok_or_else(|| Error::config(format!("unknown parameter `{name}`")))?;
        match idx {
            Some(i) if i < block.len => Ok(block.start + i),
            Some(i) => Err(Error::config(format!(
                "index {i} out of range for `{name}` (len {})",
                block.len
            ))),
            None if block.len == 1 => Ok(block.start),
            None => Err(Error::config(format!(
                "`{name}` has {} entries; reference one element as `{name}[i]`",
                block.len
            ))),
        }
    }

    /// Canonical textual reference for a slot (`name` or `name[i]`).
    pub fn name_of(&self, slot: Slot) -> String {
        for b in &self.blocks {
            if slot >= b.start && slot < b.start + b.len {
                return if b.len == 1 {
                    b.name.clone()
                } else {
                    format!("{}[{}]", b.name, slot - b.start)
                };
            }
        }
        format!("#{slot}")
    }

    /// Find a slot by canonical reference or raw index.
    pub fn lookup(&self, selector: &str) -> Result<Slot> {
        if let Ok(i) = selector.parse::<usize>() {
            if i < self.len() {
                return Ok(i);
            }
            return Err(Error::config(format!("parameter index {i} out of range")));
        }
        self.resolve(selector)
    }
}

/// Parameter access for generic evaluation: either plain values, or values
/// already lifted into the scalar type being differentiated.
#[derive(Clone, Copy, Debug)]
pub enum Theta<'a, S> {
    Plain(&'a [f64]),
    Lifted(&'a [S]),
}

impl<S: Scalar> Theta<'_, S> {
    #[inline]
    pub fn get(&self, slot: Slot) -> S {
        match self {
            Theta::Plain(v) => S::cst(v[slot]),
            Theta::Lifted(v) => v[slot],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Theta::Plain(v) => v.len(),
            Theta::Lifted(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_scalar_and_indexed_refs() {
        let mut p = ParamVector::new();
        p.push_scalar("r", 1.0).unwrap();
        p.push_block("c", &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(p.resolve("r").unwrap(), 0);
        assert_eq!(p.resolve("c[2]").unwrap(), 3);
        assert!(p.resolve("c").is_err());
        assert!(p.resolve("c[3]").is_err());
        assert!(p.resolve("nope").is_err());
        assert_eq!(p.name_of(2), "c[1]");
        assert_eq!(p.lookup("3").unwrap(), 3);
    }

    #[test]
    fn rejects_duplicates_and_non_finite() {
        let mut p = ParamVector::new();
        p.push_scalar("a", 1.0).unwrap();
        assert!(p.push_scalar("a", 2.0).is_err());
        assert!(p.push_scalar("b", f64::NAN).is_err());
        assert!(p.set_values(&[1.0, 2.0]).is_err());
        assert!(p.set_values(&[f64::INFINITY]).is_err());
    }
}
