use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegistryEntry {
    pub k: usize,
    pub label: String,
    /// Which sweep or analysis produced the label.
    pub provenance: String,
    /// Which sign of the offset raises the labelled property; may be empty.
    pub orientation: String,
}

/// Human-readable labels for principal directions. Relabelling appends; the
/// latest entry for an index is current and earlier ones stay as history.
///
/// Text form: a `#directions<TAB>p` header, then one
/// `k<TAB>label<TAB>provenance[<TAB>orientation]` line per entry in
/// registration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectionRegistry {
    directions: usize,
    entries: Vec<RegistryEntry>,
}

fn check_field(name: &str, v: &str, allow_empty: bool) -> Result<()> {
    if !allow_empty && v.trim().is_empty() {
        return Err(Error::contract(format!("{name} must be nonempty")));
    }
    if v.contains(['\t', '\n', '\r']) {
        return Err(Error::contract(format!("{name} must not contain tabs or line breaks")));
    }
    Ok(())
}

impl DirectionRegistry {
    pub fn new(directions: usize) -> Self {
        Self {
            directions,
            entries: Vec::new(),
        }
    }

    pub fn directions(&self) -> usize {
        self.directions
    }

    pub fn register_label(
        &mut self,
        k: usize,
        label: &str,
        provenance: &str,
        orientation: &str,
    ) -> Result<()> {
        if k >= self.directions {
            return Err(Error::contract(format!("direction {k} out of range 0..{}", self.directions)));
        }
        check_field("label", label, false)?;
        check_field("provenance", provenance, false)?;
        check_field("orientation", orientation, true)?;
        self.entries.push(RegistryEntry {
            k,
            label: label.to_string(),
            provenance: provenance.to_string(),
            orientation: orientation.to_string(),
        });
        Ok(())
    }

    /// Current entry for `k`.
    pub fn lookup(&self, k: usize) -> Option<&RegistryEntry> {
        self.entries.iter().rev().find(|e| e.k == k)
    }

    /// All entries for `k`, oldest first.
    pub fn history(&self, k: usize) -> Vec<&RegistryEntry> {
        self.entries.iter().filter(|e| e.k == k).collect()
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#directions\t{}\n", self.directions);
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}", e.k, e.label, e.provenance));
            if !e.orientation.is_empty() {
                out.push('\t');
                out.push_str(&e.orientation);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let directions = match lines.next().map(|(_, l)| l.split('\t').collect::<Vec<_>>()) {
            Some(h) if h.len() == 2 && h[0] == "#directions" => h[1]
                .parse::<usize>()
                .map_err(|_| Error::format(0, format!("bad direction count {:?}", h[1])))?,
            _ => return Err(Error::format(0, "expected `#directions<TAB>p` header")),
        };
        let mut reg = Self::new(directions);
        let mut offset = text.lines().next().map_or(0, |l| l.len() + 1);
        for (lineno, line) in lines {
            let at = offset;
            offset += line.len() + 1;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&f.len()) {
                return Err(Error::format(at, format!("line {}: expected 3 or 4 tab-separated fields", lineno + 1)));
            }
            let k = f[0]
                .parse::<usize>()
                .map_err(|_| Error::format(at, format!("line {}: bad index {:?}", lineno + 1, f[0])))?;
            reg.register_label(k, f[1], f[2], f.get(3).copied().unwrap_or(""))
                .map_err(|e| Error::format(at, format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(reg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_and_lookup() {
        let mut r = DirectionRegistry::new(4);
        r.register_label(2, "binary-like", "flip sweep seed 0", "+").unwrap();
        assert_eq!(r.lookup(2).unwrap().label, "binary-like");
        assert!(r.lookup(1).is_none());
    }

    #[test]
    fn out_of_range_and_empty_rejected() {
        let mut r = DirectionRegistry::new(2);
        assert!(matches!(r.register_label(2, "x", "y", ""), Err(Error::Contract(_))));
        assert!(r.register_label(0, " ", "y", "").is_err());
        assert!(r.register_label(0, "a\tb", "y", "").is_err());
    }

    #[test]
    fn overwrite_keeps_history() {
        let mut r = DirectionRegistry::new(3);
        r.register_label(0, "first", "sweep a", "").unwrap();
        r.register_label(0, "second", "sweep b", "-").unwrap();
        assert_eq!(r.lookup(0).unwrap().label, "second");
        assert_eq!(r.history(0).len(), 2);
    }

    #[test]
    fn text_round_trip() {
        let mut r = DirectionRegistry::new(12);
        r.register_label(0, "scalar-like", "range sweep, 300 seeds", "").unwrap();
        r.register_label(5, "binary-like", "flip sweep", "positive offsets raise score").unwrap();
        r.register_label(0, "scalar-like v2", "range sweep rerun", "+").unwrap();
        let back = DirectionRegistry::from_text(&r.to_text()).unwrap();
        assert_eq!(back, r);
        assert!(DirectionRegistry::from_text("0\tx\ty\n").is_err());
        assert!(DirectionRegistry::from_text("#directions\t2\n5\tx\ty\n").is_err());
    }
}
