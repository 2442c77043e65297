//! Sufficient statistics and their change statistics.
//!
//! A [`StatisticSpec`] is an ordered list of named terms. Before counting, a
//! spec is resolved against one network's attributes into a
//! [`PreparedSpec`]: attribute-based terms become dyad bitsets or node masks,
//! so every statistic and change statistic afterwards is plain integer
//! arithmetic on the adjacency structure.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Env, Expr, ExprError};
use crate::graph::{AttrColumn, Dyad, Network};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StatsError {
    #[error("term `{term}` references attribute `{attr}` which network `{net}` lacks")]
    MissingAttribute { term: String, attr: String, net: String },
    #[error("term `{term}`: attribute `{attr}` must be categorical")]
    NotCategorical { term: String, attr: String },
    #[error("duplicate term name `{0}`")]
    DuplicateName(String),
    #[error("term `{term}`: {source}")]
    Expr { term: String, source: ExprError },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Edges,
    TwoStars,
    Triangles,
    /// Edges whose endpoints carry the (unordered) category pair, counted
    /// only in networks satisfying `condition` when one is given.
    Mixing { attr: String, pair: (String, String), condition: Option<Expr> },
    /// Sum of degrees of the actors whose `attr` value satisfies `predicate`.
    IncidentEdges { attr: String, predicate: Expr },
    /// Edges `{i, j}` for which `predicate(i, j)` or `predicate(j, i)` holds.
    CustomIndicator { predicate: Expr },
}

impl Term {
    pub fn default_name(&self) -> String {
        match self {
            Term::Edges => "edges".into(),
            Term::TwoStars => "twostars".into(),
            Term::Triangles => "triangles".into(),
            Term::Mixing { attr, pair, condition } => {
                let (a, b) = if pair.0 <= pair.1 { (&pair.0, &pair.1) } else { (&pair.1, &pair.0) };
                match condition {
                    Some(c) => format!("mix.{attr}.{a}.{b}|{c}"),
                    None => format!("mix.{attr}.{a}.{b}"),
                }
            }
            Term::IncidentEdges { attr, predicate } => format!("incident.{attr}[{predicate}]"),
            Term::CustomIndicator { predicate } => format!("dyad[{predicate}]"),
        }
    }

    /// Whether the term's change statistic is free of the rest of the graph.
    pub fn is_dyad_independent(&self) -> bool {
        !matches!(self, Term::TwoStars | Term::Triangles)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTerm {
    pub name: String,
    pub term: Term,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatisticSpec {
    terms: Vec<NamedTerm>,
}

impl StatisticSpec {
    pub fn new(terms: Vec<NamedTerm>) -> Result<Self, StatsError> {
        let mut seen = HashSet::new();
        for t in &terms {
            if !seen.insert(t.name.as_str()) {
                return Err(StatsError::DuplicateName(t.name.clone()));
            }
        }
        Ok(StatisticSpec { terms })
    }

    /// Spec from unnamed terms using their default names.
    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> Result<Self, StatsError> {
        Self::new(terms.into_iter().map(|term| NamedTerm { name: term.default_name(), term }).collect())
    }

    /// `[edges, twostars, triangles]`.
    pub fn edges_twostars_triangles() -> Self {
        Self::from_terms([Term::Edges, Term::TwoStars, Term::Triangles]).unwrap()
    }

    pub fn p(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[NamedTerm] {
        &self.terms
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }

    /// Concatenation `self ++ other`.
    pub fn concat(&self, other: &StatisticSpec) -> Result<Self, StatsError> {
        Self::new(self.terms.iter().chain(&other.terms).cloned().collect())
    }

    pub fn prepare(&self, net: &Network) -> Result<PreparedSpec, StatsError> {
        let terms = self
            .terms
            .iter()
            .map(|t| compile(t, net))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PreparedSpec { n: net.n(), terms })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Compiled {
    Edges,
    TwoStars,
    Triangles,
    DyadSet(Vec<u64>),
    NodeWeight(u64),
}

/// A spec resolved against one network's node attributes.
///
/// Two networks with equal prepared specs have identical statistics on
/// identical adjacency, which makes this a sound cache key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PreparedSpec {
    n: usize,
    terms: Vec<Compiled>,
}

fn expr_err(term: &NamedTerm) -> impl Fn(ExprError) -> StatsError + '_ {
    move |source| StatsError::Expr { term: term.name.clone(), source }
}

fn check_attrs(term: &NamedTerm, e: &Expr, net: &Network) -> Result<(), StatsError> {
    for attr in e.attributes() {
        if net.attr(&attr).is_none() {
            return Err(StatsError::MissingAttribute {
                term: term.name.clone(),
                attr,
                net: net.id().to_string(),
            });
        }
    }
    Ok(())
}

fn compile(t: &NamedTerm, net: &Network) -> Result<Compiled, StatsError> {
    let missing = |attr: &str| StatsError::MissingAttribute {
        term: t.name.clone(),
        attr: attr.to_string(),
        net: net.id().to_string(),
    };
    let words = net.num_dyads().div_ceil(64).max(1);
    Ok(match &t.term {
        Term::Edges => Compiled::Edges,
        Term::TwoStars => Compiled::TwoStars,
        Term::Triangles => Compiled::Triangles,
        Term::Mixing { attr, pair, condition } => {
            let col = net.attr(attr).ok_or_else(|| missing(attr))?;
            let (levels, codes) = match col {
                AttrColumn::Categorical { levels, codes } => (levels, codes),
                AttrColumn::Real(_) => {
                    return Err(StatsError::NotCategorical { term: t.name.clone(), attr: attr.clone() })
                }
            };
            let mut set = vec![0u64; words];
            let active = match condition {
                Some(c) => {
                    check_attrs(t, c, net)?;
                    c.eval_bool(&Env::network(net)).map_err(expr_err(t))?
                }
                None => true,
            };
            let code = |name: &str| levels.iter().position(|l| l == name).map(|k| k as u32);
            if let (true, Some(a), Some(b)) = (active, code(&pair.0), code(&pair.1)) {
                for d in net.dyads() {
                    let (ci, cj) = (codes[d.i], codes[d.j]);
                    if (ci == a && cj == b) || (ci == b && cj == a) {
                        let k = net.dyad_index(d);
                        set[k >> 6] |= 1 << (k & 63);
                    }
                }
            }
            Compiled::DyadSet(set)
        }
        Term::IncidentEdges { attr, predicate } => {
            let col = net.attr(attr).ok_or_else(|| missing(attr))?;
            check_attrs(t, predicate, net)?;
            let mut mask = 0u64;
            for i in 0..net.n() {
                let env = Env::node(net, i, Some(col.value(i)));
                if predicate.eval_bool(&env).map_err(expr_err(t))? {
                    mask |= 1 << i;
                }
            }
            Compiled::NodeWeight(mask)
        }
        Term::CustomIndicator { predicate } => {
            check_attrs(t, predicate, net)?;
            let mut set = vec![0u64; words];
            for d in net.dyads() {
                let hit = predicate.eval_bool(&Env::dyad(net, d.i, d.j)).map_err(expr_err(t))?
                    || predicate.eval_bool(&Env::dyad(net, d.j, d.i)).map_err(expr_err(t))?;
                if hit {
                    let k = net.dyad_index(d);
                    set[k >> 6] |= 1 << (k & 63);
                }
            }
            Compiled::DyadSet(set)
        }
    })
}

#[inline]
fn choose2(d: usize) -> i64 {
    (d * d.saturating_sub(1) / 2) as i64
}

impl PreparedSpec {
    pub fn p(&self) -> usize {
        self.terms.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Exact integer statistics.
    pub fn eval(&self, net: &Network) -> Vec<i64> {
        let mut out = vec![0; self.terms.len()];
        self.eval_into(net, &mut out);
        out
    }

    pub fn eval_into(&self, net: &Network, out: &mut [i64]) {
        debug_assert_eq!(net.n(), self.n);
        for (slot, term) in out.iter_mut().zip(&self.terms) {
            *slot = match term {
                Compiled::Edges => net.edge_count() as i64,
                Compiled::TwoStars => (0..net.n()).map(|i| choose2(net.degree(i))).sum(),
                Compiled::Triangles => {
                    let mut t = 0usize;
                    for i in 0..net.n() {
                        let mut higher = net.neighbor_mask(i) & !((2u64 << i).wrapping_sub(1));
                        while higher != 0 {
                            let j = higher.trailing_zeros() as usize;
                            higher &= higher - 1;
                            t += net.common_neighbors_unchecked(Dyad { i, j });
                        }
                    }
                    (t / 3) as i64
                }
                Compiled::DyadSet(set) => net
                    .adjacency_words()
                    .iter()
                    .zip(set)
                    .map(|(a, s)| (a & s).count_ones() as i64)
                    .sum(),
                Compiled::NodeWeight(mask) => (0..net.n())
                    .filter(|&i| mask >> i & 1 == 1)
                    .map(|i| net.degree(i) as i64)
                    .sum(),
            };
        }
    }

    /// `g(y with d toggled) - g(y)`, written into `out`.
    #[inline]
    pub fn change_into(&self, net: &Network, d: Dyad, out: &mut [i64]) {
        let present = net.has_edge(d);
        let sign: i64 = if present { -1 } else { 1 };
        for (slot, term) in out.iter_mut().zip(&self.terms) {
            *slot = sign
                * match term {
                    Compiled::Edges => 1,
                    Compiled::TwoStars => {
                        let s = net.degree(d.i) + net.degree(d.j);
                        (if present { s - 2 } else { s }) as i64
                    }
                    Compiled::Triangles => net.common_neighbors_unchecked(d) as i64,
                    Compiled::DyadSet(set) => {
                        let k = net.dyad_index(d);
                        (set[k >> 6] >> (k & 63) & 1) as i64
                    }
                    Compiled::NodeWeight(mask) => ((mask >> d.i & 1) + (mask >> d.j & 1)) as i64,
                };
        }
    }

    pub fn change(&self, net: &Network, d: Dyad) -> Vec<i64> {
        let mut out = vec![0; self.terms.len()];
        self.change_into(net, d, &mut out);
        out
    }
}

pub fn widen(v: &[i64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Statistic vector `g(y)`.
pub fn eval_stats(net: &Network, spec: &StatisticSpec) -> Result<Vec<f64>, StatsError> {
    Ok(widen(&spec.prepare(net)?.eval(net)))
}

/// Change statistic `g(y ⊕ d) − g(y)`.
pub fn change_stats(net: &Network, dyad: Dyad, spec: &StatisticSpec) -> Result<Vec<f64>, StatsError> {
    Ok(widen(&spec.prepare(net)?.change(net, dyad)))
}

/// Serializable description of a term, shared by the model config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TermDef {
    Edges,
    #[serde(alias = "2-stars", alias = "two-stars")]
    Twostars,
    Triangles,
    Mixing {
        attr: String,
        pair: (String, String),
        #[serde(default)]
        condition: Option<String>,
    },
    IncidentEdges {
        attr: String,
        predicate: String,
    },
    Custom {
        predicate: String,
    },
}

impl TermDef {
    pub fn to_term(&self) -> Result<Term, ExprError> {
        Ok(match self {
            TermDef::Edges => Term::Edges,
            TermDef::Twostars => Term::TwoStars,
            TermDef::Triangles => Term::Triangles,
            TermDef::Mixing { attr, pair, condition } => Term::Mixing {
                attr: attr.clone(),
                pair: pair.clone(),
                condition: condition.as_deref().map(Expr::parse).transpose()?,
            },
            TermDef::IncidentEdges { attr, predicate } => {
                Term::IncidentEdges { attr: attr.clone(), predicate: Expr::parse(predicate)? }
            }
            TermDef::Custom { predicate } => Term::CustomIndicator { predicate: Expr::parse(predicate)? },
        })
    }
}
