use std::fmt;

use super::GraphError;

/// A `(src_type, relation, dst_type)` triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeType {
    pub src_type: String,
    pub relation: String,
    pub dst_type: String,
    /// Materialize `(dst, relation, src)` for every edge of this type.
    pub symmetric: bool,
}

const DELIM: char = '2';

fn check_name(name: &str) -> Result<(), GraphError> {
    if name.is_empty() {
        return Err(GraphError::InvalidName { name: name.into(), reason: "empty" });
    }
    if name.contains(DELIM) {
        return Err(GraphError::InvalidName { name: name.into(), reason: "contains the reserved delimiter '2'" });
    }
    if name.chars().any(char::is_whitespace) {
        return Err(GraphError::InvalidName { name: name.into(), reason: "contains whitespace" });
    }
    Ok(())
}

/// Splits an edge-type spec on `'2'`.
///
/// Three parts give `(src, relation, dst)`. Two parts give `(src, dst)` and the
/// relation is named by the whole spec. The result is not symmetric; callers
/// set that flag from configuration.
pub fn parse_edge_type(spec: &str) -> Result<EdgeType, GraphError> {
    if spec.is_empty() {
        return Err(GraphError::EmptySpec);
    }
    let parts: Vec<&str> = spec.split(DELIM).collect();
    if parts.iter().any(|p| p.is_empty()) && matches!(parts.len(), 2 | 3) {
        return Err(GraphError::EmptyPart { spec: spec.into() });
    }
    let (src, rel, dst) = match parts.as_slice() {
        [s, d] => (*s, spec, *d),
        [s, r, d] => (*s, *r, *d),
        _ => return Err(GraphError::Arity { spec: spec.into(), parts: parts.len() }),
    };
    check_name(src)?;
    check_name(dst)?;
    if parts.len() == 3 {
        check_name(rel)?;
    }
    Ok(EdgeType { src_type: src.into(), relation: rel.into(), dst_type: dst.into(), symmetric: false })
}

impl EdgeType {
    pub fn new(src_type: &str, relation: &str, dst_type: &str, symmetric: bool) -> Result<Self, GraphError> {
        check_name(src_type)?;
        check_name(dst_type)?;
        let t = EdgeType { src_type: src_type.into(), relation: relation.into(), dst_type: dst_type.into(), symmetric };
        if !t.is_compact() {
            check_name(relation)?;
        }
        Ok(t)
    }

    pub fn with_symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    /// True for the two-part `src2dst` form.
    pub fn is_compact(&self) -> bool {
        self.relation.len() == self.src_type.len() + 1 + self.dst_type.len()
            && self.relation.starts_with(self.src_type.as_str())
            && self.relation.ends_with(self.dst_type.as_str())
            && self.relation.as_bytes()[self.src_type.len()] == DELIM as u8
    }

    /// Canonical spec string; parsing it yields this triple again.
    pub fn name(&self) -> String {
        if self.is_compact() {
            self.relation.clone()
        } else {
            format!("{}{DELIM}{}{DELIM}{}", self.src_type, self.relation, self.dst_type)
        }
    }

    /// The triple traversed backwards, e.g. `i2click2u` for `u2click2i`.
    pub fn reversed(&self) -> EdgeType {
        let relation = if self.is_compact() {
            format!("{}{DELIM}{}", self.dst_type, self.src_type)
        } else {
            self.relation.clone()
        };
        EdgeType { src_type: self.dst_type.clone(), relation, dst_type: self.src_type.clone(), symmetric: self.symmetric }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}
