//! The supported query family (COUNT, GROUP-BY-COUNT, SUM, AVG with a
//! predicate tree), its JSON form, exact evaluation, and global sensitivity.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{Cell, Cells, Dataset};
use crate::error::{Error, Result};
use crate::fsum::ExactSum;
use crate::schema::{ColumnKind, Schema};
use crate::sensitivity::Norm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "between")]
    Between,
    #[serde(rename = "in")]
    In,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
    List(Vec<Literal>),
}

impl From<f64> for Literal {
    fn from(v: f64) -> Self {
        Literal::Number(v)
    }
}

impl From<i64> for Literal {
    fn from(v: i64) -> Self {
        Literal::Number(v as f64)
    }
}

impl From<&str> for Literal {
    fn from(v: &str) -> Self {
        Literal::Text(v.to_string())
    }
}

impl std::fmt::Display for Literal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Literal::Number(v) => write!(f, "{v}"),
            Literal::Text(s) => write!(f, "'{s}'"),
            Literal::List(items) => {
                f.write_str("(")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{it}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Boolean expression tree over attribute comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Predicate {
    And { and: Vec<Predicate> },
    Or { or: Vec<Predicate> },
    Compare { attr: String, op: CmpOp, value: Literal },
}

impl Predicate {
    pub fn cmp(attr: impl Into<String>, op: CmpOp, value: impl Into<Literal>) -> Self {
        Predicate::Compare {
            attr: attr.into(),
            op,
            value: value.into(),
        }
    }

    pub fn eq(attr: impl Into<String>, value: impl Into<Literal>) -> Self {
        Self::cmp(attr, CmpOp::Eq, value)
    }

    pub fn ne(attr: impl Into<String>, value: impl Into<Literal>) -> Self {
        Self::cmp(attr, CmpOp::Ne, value)
    }

    pub fn between(attr: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self::cmp(attr, CmpOp::Between, Literal::List(vec![lo.into(), hi.into()]))
    }

    pub fn is_in<L: Into<Literal>>(attr: impl Into<String>, values: impl IntoIterator<Item = L>) -> Self {
        Self::cmp(
            attr,
            CmpOp::In,
            Literal::List(values.into_iter().map(Into::into).collect()),
        )
    }

    pub fn and(parts: impl IntoIterator<Item = Predicate>) -> Self {
        Predicate::And {
            and: parts.into_iter().collect(),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Predicate>) -> Self {
        Predicate::Or {
            or: parts.into_iter().collect(),
        }
    }

    fn collect_attrs<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Predicate::And { and: ps } | Predicate::Or { or: ps } => {
                ps.iter().for_each(|p| p.collect_attrs(out))
            }
            Predicate::Compare { attr, .. } => {
                out.insert(attr.as_str());
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Count,
    GroupByCount,
    Sum,
    Avg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub kind: QueryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub group_domain: Vec<Literal>,
}

impl Query {
    pub fn count(predicate: Option<Predicate>) -> Self {
        Self {
            kind: QueryKind::Count,
            predicate,
            group_by: None,
            target: None,
            group_domain: Vec::new(),
        }
    }

    pub fn group_by_count<L: Into<Literal>>(
        predicate: Option<Predicate>,
        group_by: impl Into<String>,
        domain: impl IntoIterator<Item = L>,
    ) -> Self {
        Self {
            kind: QueryKind::GroupByCount,
            predicate,
            group_by: Some(group_by.into()),
            target: None,
            group_domain: domain.into_iter().map(Into::into).collect(),
        }
    }

    pub fn sum(target: impl Into<String>, predicate: Option<Predicate>) -> Self {
        Self {
            kind: QueryKind::Sum,
            predicate,
            group_by: None,
            target: Some(target.into()),
            group_domain: Vec::new(),
        }
    }

    pub fn avg(target: impl Into<String>, predicate: Option<Predicate>) -> Self {
        Self {
            kind: QueryKind::Avg,
            ..Self::sum(target, predicate)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Output dimension.
    pub fn k(&self) -> usize {
        match self.kind {
            QueryKind::GroupByCount => self.group_domain.len(),
            _ => 1,
        }
    }

    /// Every attribute the query reads: predicate, group-by, and target.
    pub fn referenced_attrs(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        if let Some(p) = &self.predicate {
            p.collect_attrs(&mut out);
        }
        out.extend(self.group_by.as_deref());
        out.extend(self.target.as_deref());
        out
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        for attr in self.referenced_attrs() {
            schema.column(attr)?;
        }
        match self.kind {
            QueryKind::Count => {
                if self.group_by.is_some() || self.target.is_some() || !self.group_domain.is_empty() {
                    return Err(Error::InvalidQuery(
                        "count takes no group_by, target, or group_domain".into(),
                    ));
                }
            }
            QueryKind::GroupByCount => {
                let Some(g) = &self.group_by else {
                    return Err(Error::InvalidQuery("group_by_count requires group_by".into()));
                };
                if self.target.is_some() {
                    return Err(Error::InvalidQuery("group_by_count takes no target".into()));
                }
                if self.group_domain.is_empty() {
                    return Err(Error::InvalidQuery(
                        "group_by_count requires a non-empty group_domain".into(),
                    ));
                }
                let kind = schema.column(g)?.kind;
                GroupKeys::compile(kind, &self.group_domain)?;
            }
            QueryKind::Sum | QueryKind::Avg => {
                let Some(t) = &self.target else {
                    return Err(Error::InvalidQuery("sum/avg require a target".into()));
                };
                if self.group_by.is_some() || !self.group_domain.is_empty() {
                    return Err(Error::InvalidQuery("sum/avg take no group_by".into()));
                }
                let col = schema.column(t)?;
                if !col.kind.is_numeric() {
                    return Err(Error::InvalidQuery(format!("target `{t}` is not numeric")));
                }
                if col.bounds.is_none() {
                    return Err(Error::MissingBounds(t.clone()));
                }
            }
        }
        if let Some(p) = &self.predicate {
            CompiledPredicate::compile(p, &schema.layout())?;
        }
        Ok(())
    }

    pub(crate) fn compile(&self, layout: &[(&str, ColumnKind)]) -> Result<CompiledQuery> {
        let pos = |name: &str| {
            layout
                .iter()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
        };
        let predicate = self
            .predicate
            .as_ref()
            .map(|p| CompiledPredicate::compile(p, layout))
            .transpose()?;
        let group = match (&self.kind, &self.group_by) {
            (QueryKind::GroupByCount, Some(g)) => {
                let p = pos(g)?;
                Some((p, GroupKeys::compile(layout[p].1, &self.group_domain)?))
            }
            _ => None,
        };
        let target = match (&self.kind, &self.target) {
            (QueryKind::Sum | QueryKind::Avg, Some(t)) => Some(pos(t)?),
            _ => None,
        };
        Ok(CompiledQuery {
            kind: self.kind,
            predicate,
            group,
            target,
            k: self.k(),
        })
    }
}

/// Exact query answer `q(x)`, a vector of `k` finite reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryOutput {
    values: Vec<f64>,
}

impl QueryOutput {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite output value {v}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug)]
enum LeafTest {
    Num(CmpOp, f64),
    NumBetween(f64, f64),
    NumIn(Vec<f64>),
    TextEq(String),
    TextNe(String),
    TextIn(Vec<String>),
}

impl LeafTest {
    fn matches(&self, cell: Cell<'_>) -> bool {
        match (self, cell) {
            (LeafTest::TextEq(s), Cell::Categorical(v)) => v == s,
            (LeafTest::TextNe(s), Cell::Categorical(v)) => v != s,
            (LeafTest::TextIn(set), Cell::Categorical(v)) => set.iter().any(|s| s == v),
            (test, cell) => {
                let Some(v) = cell.as_f64() else { return false };
                match test {
                    LeafTest::Num(op, lit) => match op {
                        CmpOp::Eq => v == *lit,
                        CmpOp::Ne => v != *lit,
                        CmpOp::Lt => v < *lit,
                        CmpOp::Le => v <= *lit,
                        CmpOp::Gt => v > *lit,
                        CmpOp::Ge => v >= *lit,
                        CmpOp::Between | CmpOp::In => unreachable!("compiled separately"),
                    },
                    LeafTest::NumBetween(lo, hi) => *lo <= v && v <= *hi,
                    LeafTest::NumIn(set) => set.iter().any(|x| *x == v),
                    _ => false,
                }
            }
        }
    }
}

#[derive(Debug)]
enum CompiledPredicate {
    And(Vec<CompiledPredicate>),
    Or(Vec<CompiledPredicate>),
    Leaf { pos: usize, test: LeafTest },
}

impl CompiledPredicate {
    fn compile(p: &Predicate, layout: &[(&str, ColumnKind)]) -> Result<Self> {
        Ok(match p {
            Predicate::And { and } => CompiledPredicate::And(
                and.iter().map(|p| Self::compile(p, layout)).collect::<Result<_>>()?,
            ),
            Predicate::Or { or } => CompiledPredicate::Or(
                or.iter().map(|p| Self::compile(p, layout)).collect::<Result<_>>()?,
            ),
            Predicate::Compare { attr, op, value } => {
                let pos = layout
                    .iter()
                    .position(|(n, _)| n == attr)
                    .ok_or_else(|| Error::UnknownAttribute(attr.clone()))?;
                let kind = layout[pos].1;
                let bad = || {
                    Error::InvalidQuery(format!(
                        "`{attr} {} {value}` does not fit a {kind:?} column",
                        serde_json::to_string(op).unwrap_or_default().trim_matches('"')
                    ))
                };
                let test = if kind.is_numeric() {
                    match (op, value) {
                        (CmpOp::Between, Literal::List(items)) => match items.as_slice() {
                            [Literal::Number(lo), Literal::Number(hi)] => LeafTest::NumBetween(*lo, *hi),
                            _ => return Err(bad()),
                        },
                        (CmpOp::In, Literal::List(items)) => LeafTest::NumIn(
                            items
                                .iter()
                                .map(|l| match l {
                                    Literal::Number(v) => Ok(*v),
                                    _ => Err(bad()),
                                })
                                .collect::<Result<_>>()?,
                        ),
                        (CmpOp::Between | CmpOp::In, _) => return Err(bad()),
                        (op, Literal::Number(v)) => LeafTest::Num(*op, *v),
                        _ => return Err(bad()),
                    }
                } else {
                    match (op, value) {
                        (CmpOp::Eq, Literal::Text(s)) => LeafTest::TextEq(s.trim().to_string()),
                        (CmpOp::Ne, Literal::Text(s)) => LeafTest::TextNe(s.trim().to_string()),
                        (CmpOp::In, Literal::List(items)) => LeafTest::TextIn(
                            items
                                .iter()
                                .map(|l| match l {
                                    Literal::Text(s) => Ok(s.trim().to_string()),
                                    _ => Err(bad()),
                                })
                                .collect::<Result<_>>()?,
                        ),
                        _ => return Err(bad()),
                    }
                };
                CompiledPredicate::Leaf { pos, test }
            }
        })
    }

    fn matches<C: Cells + ?Sized>(&self, row: &C) -> bool {
        match self {
            CompiledPredicate::And(ps) => ps.iter().all(|p| p.matches(row)),
            CompiledPredicate::Or(ps) => ps.iter().any(|p| p.matches(row)),
            CompiledPredicate::Leaf { pos, test } => test.matches(row.cell(*pos)),
        }
    }
}

#[derive(Debug)]
enum GroupKeys {
    Text(HashMap<String, usize>),
    Num(Vec<f64>),
}

impl GroupKeys {
    fn compile(kind: ColumnKind, domain: &[Literal]) -> Result<Self> {
        if kind.is_numeric() {
            let mut keys = Vec::with_capacity(domain.len());
            for l in domain {
                match l {
                    Literal::Number(v) if !keys.contains(v) => keys.push(*v),
                    Literal::Number(v) => {
                        return Err(Error::InvalidQuery(format!("duplicate group key {v}")))
                    }
                    other => {
                        return Err(Error::InvalidQuery(format!(
                            "group key {other} does not fit a numeric column"
                        )))
                    }
                }
            }
            Ok(GroupKeys::Num(keys))
        } else {
            let mut keys = HashMap::with_capacity(domain.len());
            for (i, l) in domain.iter().enumerate() {
                match l {
                    Literal::Text(s) => {
                        if keys.insert(s.trim().to_string(), i).is_some() {
                            return Err(Error::InvalidQuery(format!("duplicate group key '{s}'")));
                        }
                    }
                    other => {
                        return Err(Error::InvalidQuery(format!(
                            "group key {other} does not fit a categorical column"
                        )))
                    }
                }
            }
            Ok(GroupKeys::Text(keys))
        }
    }

    fn index_of(&self, cell: Cell<'_>) -> Result<usize> {
        let found = match (self, cell) {
            (GroupKeys::Text(m), Cell::Categorical(s)) => m.get(s).copied(),
            (GroupKeys::Num(keys), c) => c.as_f64().and_then(|v| keys.iter().position(|k| *k == v)),
            _ => None,
        };
        found.ok_or_else(|| Error::GroupOutsideDomain(cell.to_string()))
    }
}

/// What one record adds to the aggregate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Contribution {
    Nothing,
    One,
    Group(usize),
    Value(f64),
}

#[derive(Debug)]
pub(crate) struct CompiledQuery {
    kind: QueryKind,
    predicate: Option<CompiledPredicate>,
    group: Option<(usize, GroupKeys)>,
    target: Option<usize>,
    k: usize,
}

impl CompiledQuery {
    pub fn contribution<C: Cells + ?Sized>(&self, row: &C) -> Result<Contribution> {
        if let Some(p) = &self.predicate {
            if !p.matches(row) {
                return Ok(Contribution::Nothing);
            }
        }
        Ok(match self.kind {
            QueryKind::Count => Contribution::One,
            QueryKind::GroupByCount => {
                let (pos, keys) = self.group.as_ref().expect("compiled with group");
                Contribution::Group(keys.index_of(row.cell(*pos))?)
            }
            QueryKind::Sum | QueryKind::Avg => {
                let pos = self.target.expect("compiled with target");
                Contribution::Value(row.cell(pos).as_f64().expect("numeric target"))
            }
        })
    }

    pub fn accumulator(&self) -> Accumulator {
        match self.kind {
            QueryKind::Count => Accumulator::Count(0),
            QueryKind::GroupByCount => Accumulator::Groups(vec![0; self.k]),
            QueryKind::Sum => Accumulator::Sum(ExactSum::new()),
            QueryKind::Avg => Accumulator::Avg(ExactSum::new(), 0),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Accumulator {
    Count(u64),
    Groups(Vec<u64>),
    Sum(ExactSum),
    Avg(ExactSum, u64),
}

impl Accumulator {
    #[inline]
    pub fn add(&mut self, c: Contribution) {
        match (self, c) {
            (_, Contribution::Nothing) => {}
            (Accumulator::Count(n), Contribution::One) => *n += 1,
            (Accumulator::Groups(g), Contribution::Group(i)) => g[i] += 1,
            (Accumulator::Sum(s), Contribution::Value(v)) => s.add(v),
            (Accumulator::Avg(s, n), Contribution::Value(v)) => {
                s.add(v);
                *n += 1;
            }
            (acc, c) => unreachable!("contribution {c:?} does not fit {acc:?}"),
        }
    }

    pub fn finish(self) -> Result<QueryOutput> {
        let values = match self {
            Accumulator::Count(n) => vec![n as f64],
            Accumulator::Groups(g) => g.into_iter().map(|n| n as f64).collect(),
            Accumulator::Sum(s) => vec![s.value()],
            Accumulator::Avg(_, 0) => return Err(Error::EmptyAvg),
            Accumulator::Avg(s, n) => vec![s.value() / n as f64],
        };
        QueryOutput::new(values)
    }
}

/// Anything a query can be evaluated on.
pub trait QueryTarget {
    fn evaluate(&self, q: &Query) -> Result<QueryOutput>;
}

impl QueryTarget for Dataset {
    fn evaluate(&self, q: &Query) -> Result<QueryOutput> {
        q.validate(self.schema())?;
        let compiled = q.compile(&self.schema().layout())?;
        let mut acc = compiled.accumulator();
        for r in 0..self.n() {
            acc.add(compiled.contribution(&self.row(r))?);
        }
        acc.finish()
    }
}

/// Exact, deterministic answer `q(x)`. GROUP-BY-COUNT emits counts in
/// `group_domain` order, with zero for absent groups.
pub fn evaluate_query<T: QueryTarget + ?Sized>(target: &T, q: &Query) -> Result<QueryOutput> {
    target.evaluate(q)
}

/// Global sensitivity of `q` under the removal neighbor relation.
///
/// AVG uses `(hi - lo) / n`, which bounds the change when every row matches
/// the predicate. Callers that need a different bound pass an override to the
/// search routines instead.
pub fn global_sensitivity(q: &Query, schema: &Schema, n: usize, _norm: Norm) -> Result<f64> {
    match q.kind {
        QueryKind::Count | QueryKind::GroupByCount => Ok(1.0),
        QueryKind::Sum | QueryKind::Avg => {
            let target = q
                .target
                .as_deref()
                .ok_or_else(|| Error::InvalidQuery("sum/avg require a target".into()))?;
            let bounds = schema
                .column(target)?
                .bounds
                .ok_or_else(|| Error::MissingBounds(target.to_string()))?;
            if q.kind == QueryKind::Sum {
                Ok(bounds.lo().abs().max(bounds.hi().abs()))
            } else {
                if n == 0 {
                    return Err(Error::EmptyDataset);
                }
                Ok(bounds.width() / n as f64)
            }
        }
    }
}
