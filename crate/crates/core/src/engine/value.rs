use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lang::{Literal, TypeExpr};

/// Runtime value. Enumerated members are carried by name so that values can
/// move between machines that declare the same set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Elem(Arc<str>),
    Set(BTreeSet<Arc<str>>),
}

impl Value {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn from_literal(lit: &Literal) -> Value {
        match lit {
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Int(n) => Value::Int(*n),
            Literal::Member(m) => Value::Elem(Arc::from(m.as_str())),
            Literal::Set(ms) => Value::Set(ms.iter().map(|m| Arc::from(m.as_str())).collect()),
        }
    }

    pub fn to_literal(&self) -> Literal {
        match self {
            Value::Bool(b) => Literal::Bool(*b),
            Value::Int(n) => Literal::Int(*n),
            Value::Elem(m) => Literal::Member(m.to_string()),
            Value::Set(ms) => Literal::Set(ms.iter().map(|m| m.to_string()).collect()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Elem(m) => f.write_str(m),
            Value::Set(ms) => {
                f.write_str("{")?;
                for (i, m) in ms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(m)?;
                }
                f.write_str("}")
            }
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Int(n) => s.serialize_i64(*n),
            Value::Elem(m) => s.serialize_str(m),
            Value::Set(ms) => s.collect_seq(ms.iter().map(|m| m.as_ref())),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bool(bool),
            Int(i64),
            Elem(String),
            Set(Vec<String>),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Bool(b) => Value::Bool(b),
            Raw::Int(n) => Value::Int(n),
            Raw::Elem(m) => Value::Elem(Arc::from(m)),
            Raw::Set(ms) => Value::Set(ms.into_iter().map(Arc::from).collect()),
        })
    }
}

/// Canonical enumeration order of a finite type: `false, true`; ascending
/// integers; declaration order of members; subsets by ascending bitmask over
/// declaration order.
pub fn domain(ty: &TypeExpr, members_of: impl Fn(&str) -> Vec<Arc<str>>) -> Vec<Value> {
    match ty {
        TypeExpr::Bool => vec![Value::Bool(false), Value::Bool(true)],
        TypeExpr::Range(lo, hi) => (*lo..=*hi).map(Value::Int).collect(),
        TypeExpr::Enum(s) => members_of(s).into_iter().map(Value::Elem).collect(),
        TypeExpr::SetOf(s) => {
            let members = members_of(s);
            let n = members.len().min(20);
            (0u32..(1 << n))
                .map(|mask| {
                    Value::Set(
                        (0..n)
                            .filter(|i| mask & (1 << i) != 0)
                            .map(|i| members[i].clone())
                            .collect(),
                    )
                })
                .collect()
        }
    }
}

/// Number of values in a finite type, saturating.
pub fn domain_size(ty: &TypeExpr, members: impl Fn(&str) -> usize) -> u128 {
    match ty {
        TypeExpr::Bool => 2,
        TypeExpr::Range(lo, hi) => (*hi as i128 - *lo as i128 + 1).max(0) as u128,
        TypeExpr::Enum(s) => members(s) as u128,
        TypeExpr::SetOf(s) => 1u128.checked_shl(members(s) as u32).unwrap_or(u128::MAX),
    }
}
