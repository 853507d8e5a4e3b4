use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LmmError;
use crate::ingest::{AnalysisTable, ColumnRef};

/// A fixed-effect term: a single column, or the product of two.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Main(String),
    Interaction(String, String),
}

impl Term {
    pub fn main(name: impl Into<String>) -> Self {
        Term::Main(name.into())
    }

    pub fn interaction(a: impl Into<String>, b: impl Into<String>) -> Self {
        Term::Interaction(a.into(), b.into())
    }

    pub fn columns(&self) -> Vec<&str> {
        match self {
            Term::Main(a) => vec![a],
            Term::Interaction(a, b) => vec![a, b],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Main(a) => f.write_str(a),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

impl FromStr for Term {
    type Err = LmmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        match parts.as_slice() {
            [a] if !a.is_empty() => Ok(Term::main(*a)),
            [a, b] if !a.is_empty() && !b.is_empty() => Ok(Term::interaction(*a, *b)),
            _ => Err(LmmError::InvalidTerm(s.to_string())),
        }
    }
}

/// Outcome, fixed terms and random-intercept grouping factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub outcome: String,
    pub fixed: Vec<Term>,
    pub random: Vec<String>,
}

impl ModelSpec {
    pub fn new(outcome: impl Into<String>) -> Self {
        Self {
            outcome: outcome.into(),
            fixed: Vec::new(),
            random: Vec::new(),
        }
    }

    pub fn fixed(mut self, term: Term) -> Self {
        self.fixed.push(term);
        self
    }

    pub fn random(mut self, factor: impl Into<String>) -> Self {
        self.random.push(factor.into());
        self
    }

    /// `amplitude ~ roi + (1|subject) + (1|frame_id) + (1|electrode)`
    pub fn roi_baseline() -> Self {
        Self::new("amplitude")
            .fixed(Term::main("roi"))
            .random("subject")
            .random("frame_id")
            .random("electrode")
    }

    pub fn fixed_formula(&self) -> String {
        if self.fixed.is_empty() {
            return "1".to_string();
        }
        self.fixed.iter().map(Term::to_string).collect::<Vec<_>>().join(" + ")
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ~ {}", self.outcome, self.fixed_formula())?;
        for g in &self.random {
            write!(f, " + (1|{g})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
enum Component {
    Numeric(String),
    Indicator { factor: String, level: String },
}

/// One column of the fixed-effects matrix: the product of its components
/// (empty product = intercept).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    components: Vec<Component>,
}

impl DesignColumn {
    fn intercept() -> Self {
        Self {
            name: "(Intercept)".into(),
            components: Vec::new(),
        }
    }

    fn product(a: &DesignColumn, b: &DesignColumn) -> Self {
        let mut components = a.components.clone();
        components.extend(b.components.iter().cloned());
        Self {
            name: format!("{}:{}", a.name, b.name),
            components,
        }
    }
}

/// Recipe for rebuilding the fixed-effects matrix on any table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub columns: Vec<DesignColumn>,
    /// Sorted levels of every factor used in a fixed term; the first is the
    /// reference level.
    pub factor_levels: BTreeMap<String, Vec<String>>,
}

impl DesignLayout {
    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    /// Row-major `n x p` fixed-effects matrix for `table`.
    pub fn materialize(&self, table: &AnalysisTable) -> Result<Vec<f64>, LmmError> {
        let n = table.len();
        let mut factor_codes: HashMap<&str, Vec<usize>> = HashMap::new();
        for (factor, levels) in &self.factor_levels {
            let values = factor_column(table, factor)?;
            let lookup: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let codes = values
                .iter()
                .map(|v| {
                    lookup.get(v).copied().ok_or_else(|| LmmError::UnseenLevel {
                        factor: factor.clone(),
                        level: v.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            factor_codes.insert(factor.as_str(), codes);
        }
        let p = self.p();
        let mut x = vec![1.0; n * p];
        for (j, col) in self.columns.iter().enumerate() {
            for comp in &col.components {
                match comp {
                    Component::Numeric(name) => {
                        let v = numeric_column(table, name)?;
                        for i in 0..n {
                            x[i * p + j] *= v[i];
                        }
                    }
                    Component::Indicator { factor, level } => {
                        let codes = &factor_codes[factor.as_str()];
                        let target = self.factor_levels[factor]
                            .iter()
                            .position(|l| l == level)
                            .expect("indicator level is registered");
                        for i in 0..n {
                            if codes[i] != target {
                                x[i * p + j] = 0.0;
                            }
                        }
                    }
                }
            }
        }
        Ok(x)
    }

    fn retain(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.columns.retain(|_| *it.next().unwrap());
    }
}

/// Random-intercept grouping factor: sorted levels and per-row level index.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingFactor {
    pub name: String,
    pub levels: Vec<String>,
    pub index: Vec<usize>,
}

impl GroupingFactor {
    pub fn q(&self) -> usize {
        self.levels.len()
    }
}

/// Response, fixed-effects matrix and random-effects indicators for a fit.
///
/// `Z` is kept in indicator form: each grouping factor contributes one
/// block of columns and each row has exactly one 1 per block.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub spec: ModelSpec,
    pub layout: DesignLayout,
    pub y: Vec<f64>,
    /// Row-major `n x p`.
    pub x: Vec<f64>,
    pub groups: Vec<GroupingFactor>,
    /// Columns removed by the rank guard (empty for strict builds).
    pub dropped: Vec<String>,
}

impl DesignMatrices {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.layout.p()
    }

    pub fn q(&self) -> usize {
        self.groups.iter().map(GroupingFactor::q).sum()
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.x[i * p..(i + 1) * p]
    }

    /// Identifies the response and grouping structure; two fits share a
    /// fingerprint exactly when they were fit to the same data.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write(&(self.n() as u64).to_le_bytes());
        for y in &self.y {
            h.write(&y.to_bits().to_le_bytes());
        }
        for g in &self.groups {
            h.write(g.name.as_bytes());
            for &i in &g.index {
                h.write(&(i as u64).to_le_bytes());
            }
        }
        h.finish()
    }

    /// Wrap raw arrays as a design. Columns are treated as plain numeric
    /// columns named by `column_names`; `x` is row-major.
    pub fn from_dense(
        y: Vec<f64>,
        x: Vec<f64>,
        column_names: &[&str],
        groups: Vec<GroupingFactor>,
    ) -> Result<Self, LmmError> {
        let p = column_names.len();
        if x.len() != y.len() * p {
            return Err(LmmError::ParameterLength {
                expected: y.len() * p,
                got: x.len(),
            });
        }
        if groups
            .iter()
            .any(|g| g.index.len() != y.len() || g.index.iter().any(|&i| i >= g.levels.len()))
        {
            return Err(LmmError::ParameterLength {
                expected: y.len(),
                got: groups
                    .iter()
                    .map(|g| g.index.len())
                    .find(|&l| l != y.len())
                    .unwrap_or(y.len()),
            });
        }
        let columns = column_names
            .iter()
            .map(|n| DesignColumn {
                name: n.to_string(),
                components: vec![Component::Numeric(n.to_string())],
            })
            .collect();
        Ok(Self {
            spec: ModelSpec::new("y"),
            layout: DesignLayout {
                columns,
                factor_levels: BTreeMap::new(),
            },
            y,
            x,
            groups,
            dropped: Vec::new(),
        })
    }

    /// Rows at `indices`, in that order.
    pub fn permuted(&self, indices: &[usize]) -> Self {
        let p = self.p();
        let mut x = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            x.extend_from_slice(self.x_row(i));
        }
        Self {
            spec: self.spec.clone(),
            layout: self.layout.clone(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            x,
            groups: self
                .groups
                .iter()
                .map(|g| GroupingFactor {
                    name: g.name.clone(),
                    levels: g.levels.clone(),
                    index: indices.iter().map(|&i| g.index[i]).collect(),
                })
                .collect(),
            dropped: self.dropped.clone(),
        }
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

fn factor_column<'a>(table: &'a AnalysisTable, name: &str) -> Result<Vec<&'a str>, LmmError> {
    match table.column(name) {
        Some(ColumnRef::Factor(v)) => Ok(v),
        Some(ColumnRef::Numeric(_)) => Err(LmmError::NotFactor(name.to_string())),
        None => Err(LmmError::UnknownColumn(name.to_string())),
    }
}

fn numeric_column<'a>(table: &'a AnalysisTable, name: &str) -> Result<&'a [f64], LmmError> {
    match table.column(name) {
        Some(ColumnRef::Numeric(v)) => Ok(v),
        Some(ColumnRef::Factor(_)) => Err(LmmError::NotNumeric(name.to_string())),
        None => Err(LmmError::UnknownColumn(name.to_string())),
    }
}

fn sorted_levels(values: &[&str]) -> Vec<String> {
    values
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect()
}

/// Build the design with a full-rank check: aliased fixed-effect columns are an error.
pub fn build_design(table: &AnalysisTable, spec: &ModelSpec) -> Result<DesignMatrices, LmmError> {
    let design = assemble(table, spec)?;
    let aliased = aliased_columns(&design.x, design.n(), design.p());
    if !aliased.is_empty() {
        return Err(LmmError::RankDeficient {
            columns: aliased.iter().map(|&j| design.layout.columns[j].name.clone()).collect(),
        });
    }
    check_size(&design)?;
    Ok(design)
}

/// Build the design, dropping fixed-effect columns that are linear
/// combinations of earlier columns. Dropped names land in `dropped`.
pub fn build_design_pruned(table: &AnalysisTable, spec: &ModelSpec) -> Result<DesignMatrices, LmmError> {
    let mut design = assemble(table, spec)?;
    let (n, p) = (design.n(), design.p());
    let aliased = aliased_columns(&design.x, n, p);
    if !aliased.is_empty() {
        let keep: Vec<bool> = (0..p).map(|j| !aliased.contains(&j)).collect();
        design.dropped = aliased.iter().map(|&j| design.layout.columns[j].name.clone()).collect();
        let kept = keep.iter().filter(|k| **k).count();
        let mut x = Vec::with_capacity(n * kept);
        for i in 0..n {
            let row = &design.x[i * p..(i + 1) * p];
            x.extend(row.iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| *v));
        }
        design.x = x;
        design.layout.retain(&keep);
    }
    check_size(&design)?;
    Ok(design)
}

fn check_size(design: &DesignMatrices) -> Result<(), LmmError> {
    let needed = design.p() + design.groups.len() + 1;
    if design.n() < needed {
        return Err(LmmError::TooFewObservations { n: design.n(), needed });
    }
    Ok(())
}

fn assemble(table: &AnalysisTable, spec: &ModelSpec) -> Result<DesignMatrices, LmmError> {
    let y = numeric_column(table, &spec.outcome)?.to_vec();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(LmmError::NonFiniteOutcome);
    }

    let mut factor_levels: BTreeMap<String, Vec<String>> = BTreeMap::new();
    // columns contributed by each referenced variable (non-reference indicators for factors)
    let mut expand = |name: &str| -> Result<Vec<DesignColumn>, LmmError> {
        match table.column(name) {
            None => Err(LmmError::UnknownColumn(name.to_string())),
            Some(ColumnRef::Numeric(_)) => Ok(vec![DesignColumn {
                name: name.to_string(),
                components: vec![Component::Numeric(name.to_string())],
            }]),
            Some(ColumnRef::Factor(values)) => {
                let levels = sorted_levels(&values);
                if levels.len() < 2 {
                    return Err(LmmError::TooFewLevels {
                        factor: name.to_string(),
                        levels: levels.len(),
                    });
                }
                let cols = levels[1..]
                    .iter()
                    .map(|l| DesignColumn {
                        name: format!("{name}[{l}]"),
                        components: vec![Component::Indicator {
                            factor: name.to_string(),
                            level: l.clone(),
                        }],
                    })
                    .collect();
                factor_levels.insert(name.to_string(), levels);
                Ok(cols)
            }
        }
    };

    let mut columns = vec![DesignColumn::intercept()];
    let mut seen_terms = BTreeSet::new();
    for term in &spec.fixed {
        if !seen_terms.insert(term.to_string()) {
            return Err(LmmError::DuplicateTerm(term.to_string()));
        }
        match term {
            Term::Main(a) => columns.extend(expand(a)?),
            Term::Interaction(a, b) => {
                let left = expand(a)?;
                let right = expand(b)?;
                for l in &left {
                    for r in &right {
                        columns.push(DesignColumn::product(l, r));
                    }
                }
            }
        }
    }

    let mut groups = Vec::with_capacity(spec.random.len());
    for name in &spec.random {
        if groups.iter().any(|g: &GroupingFactor| &g.name == name) {
            return Err(LmmError::DuplicateTerm(format!("(1|{name})")));
        }
        let values = factor_column(table, name)?;
        let levels = sorted_levels(&values);
        if levels.len() < 2 {
            return Err(LmmError::TooFewLevels {
                factor: name.clone(),
                levels: levels.len(),
            });
        }
        let lookup: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let index = values.iter().map(|v| lookup[v]).collect();
        groups.push(GroupingFactor {
            name: name.clone(),
            levels,
            index,
        });
    }

    let layout = DesignLayout { columns, factor_levels };
    let x = layout.materialize(table)?;
    Ok(DesignMatrices {
        spec: spec.clone(),
        layout,
        y,
        x,
        groups,
        dropped: Vec::new(),
    })
}

/// Indices of columns that are (numerically) linear combinations of the
/// columns before them. Modified Gram-Schmidt with re-orthogonalization.
pub(crate) fn aliased_columns(x: &[f64], n: usize, p: usize) -> Vec<usize> {
    const TOL: f64 = 1e-8;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut aliased = Vec::new();
    for j in 0..p {
        let mut v: Vec<f64> = (0..n).map(|i| x[i * p + j]).collect();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            aliased.push(j);
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm <= TOL * norm0 {
            aliased.push(j);
        } else {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    aliased
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Condition, Roi, RowKey};

    fn table(rows: usize) -> AnalysisTable {
        let keys: Vec<RowKey> = (0..rows)
            .map(|i| RowKey {
                subject: format!("s{}", i % 3),
                frame_id: format!("f{}", i % 4),
                condition: Condition::ALL[i % 4],
                electrode: format!("e{}", i % 6),
                roi: Roi::ALL[i % 6],
            })
            .collect();
        let amp = (0..rows).map(|i| (i as f64 * 0.37).sin()).collect();
        let s: Vec<f64> = (0..rows).map(|i| (i as f64 * 1.3).cos() + 2.0).collect();
        let copy = s.clone();
        AnalysisTable::new(keys, amp, vec![("surprisal".into(), s), ("copy".into(), copy)]).unwrap()
    }

    #[test]
    fn roi_treatment_coding() {
        let t = table(60);
        let d = build_design(&t, &ModelSpec::new("amplitude").fixed(Term::main("roi"))).unwrap();
        assert_eq!(d.p(), 6);
        let names = d.layout.column_names();
        assert_eq!(names[0], "(Intercept)");
        // alphabetical reference: central
        assert_eq!(d.layout.factor_levels["roi"][0], "central");
        assert_eq!(names[1], "roi[frontocentral]");
    }

    #[test]
    fn interaction_column_count() {
        let t = table(60);
        let spec = ModelSpec::new("amplitude")
            .fixed(Term::main("roi"))
            .fixed(Term::main("surprisal"))
            .fixed(Term::interaction("surprisal", "roi"));
        let d = build_design(&t, &spec).unwrap();
        assert_eq!(d.p(), 12);
        assert_eq!(d.layout.column_names()[7], "surprisal:roi[frontocentral]");
        // product column = surprisal * indicator
        let s = t.numeric("surprisal").unwrap();
        for i in 0..t.len() {
            let ind = d.x_row(i)[1];
            assert_eq!(d.x_row(i)[7], s[i] * ind);
        }
    }

    #[test]
    fn crossed_grouping_block_sizes() {
        let t = table(24);
        let spec = ModelSpec::new("amplitude").random("subject").random("frame_id");
        let d = build_design(&t, &spec).unwrap();
        assert_eq!(d.q(), 7);
        assert_eq!(d.groups[0].levels, vec!["s0", "s1", "s2"]);
        for i in 0..t.len() {
            assert!(d.groups[1].index[i] < 4);
        }
    }

    #[test]
    fn rank_deficiency() {
        let t = table(60);
        let spec = ModelSpec::new("amplitude")
            .fixed(Term::main("surprisal"))
            .fixed(Term::main("copy"));
        match build_design(&t, &spec) {
            Err(LmmError::RankDeficient { columns }) => assert_eq!(columns, vec!["copy"]),
            other => panic!("unexpected {other:?}"),
        }
        let pruned = build_design_pruned(&t, &spec).unwrap();
        assert_eq!(pruned.dropped, vec!["copy"]);
        assert_eq!(pruned.p(), 2);
        assert_eq!(pruned.x.len(), 60 * 2);
    }

    #[test]
    fn errors() {
        let t = table(60);
        assert!(matches!(
            build_design(&t, &ModelSpec::new("amplitude").fixed(Term::main("nope"))),
            Err(LmmError::UnknownColumn(_))
        ));
        assert!(matches!(
            build_design(&t, &ModelSpec::new("amplitude").random("surprisal")),
            Err(LmmError::NotFactor(_))
        ));
        let single = table(60).subset(&[0, 6, 12]);
        assert!(matches!(
            build_design(&single, &ModelSpec::new("amplitude").fixed(Term::main("roi"))),
            Err(LmmError::TooFewLevels { .. })
        ));
        assert!(matches!(
            build_design(
                &t,
                &ModelSpec::new("amplitude")
                    .fixed(Term::main("roi"))
                    .fixed(Term::main("roi"))
            ),
            Err(LmmError::DuplicateTerm(_))
        ));
        let tiny = table(60).subset(&[0, 1, 2]);
        assert!(matches!(
            build_design(
                &tiny,
                &ModelSpec::new("amplitude")
                    .fixed(Term::main("surprisal"))
                    .random("subject")
            ),
            Err(LmmError::TooFewObservations { .. })
        ));
    }

    #[test]
    fn term_parsing() {
        assert_eq!("roi".parse::<Term>().unwrap(), Term::main("roi"));
        assert_eq!("s : roi".parse::<Term>().unwrap(), Term::interaction("s", "roi"));
        assert!("a:b:c".parse::<Term>().is_err());
        assert!("".parse::<Term>().is_err());
        assert_eq!(
            ModelSpec::roi_baseline().to_string(),
            "amplitude ~ roi + (1|subject) + (1|frame_id) + (1|electrode)"
        );
    }

    #[test]
    fn unseen_fixed_level_is_an_error() {
        let t = table(60);
        let d = build_design(&t, &ModelSpec::new("amplitude").fixed(Term::main("condition"))).unwrap();
        let mut layout = d.layout.clone();
        layout
            .factor_levels
            .get_mut("condition")
            .unwrap()
            .retain(|l| l != "related");
        assert!(matches!(layout.materialize(&t), Err(LmmError::UnseenLevel { .. })));
    }
}
