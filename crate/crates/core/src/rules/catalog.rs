//! Synthetic, seeded rule catalog: ten rule-set versions in three environments.
//!
//! Rule bodies come from field/operator templates. Consecutive versions differ by
//! inserts, modifications and deletions; environments of one version differ by
//! small edits (a constraint added or removed, a list extended or shrunk).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ast::{CmpOp, Literal, Operand, RuleExpr};
use super::{Rule, RuleKind, RuleSet, Scope};
use crate::domain::{
    site_prefix, years, CANCER_TYPES, EKSTRALOKALISASJONER, MELDINGSTYPER, METASTASER, TOPOGRAFI_CODES,
    TOPOGRAFI_PREFIXES,
};

/// (validation, aggregation) rule counts for v1..v10.
pub const RULE_COUNTS: [(usize, usize); 10] = [
    (30, 32),
    (31, 33),
    (48, 35),
    (49, 35),
    (53, 37),
    (56, 37),
    (66, 38),
    (69, 43),
    (69, 43),
    (70, 43),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VersionId(u8);

impl VersionId {
    pub const COUNT: u8 = 10;

    pub fn new(n: u8) -> Option<Self> {
        (1..=Self::COUNT).contains(&n).then_some(Self(n))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = VersionId> {
        (1..=Self::COUNT).map(VersionId)
    }

    pub fn rule_counts(self) -> (usize, usize) {
        RULE_COUNTS[usize::from(self.0) - 1]
    }

    pub fn previous(self) -> Option<Self> {
        Self::new(self.0 - 1)
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl FromStr for VersionId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('v')
            .and_then(|n| n.parse().ok())
            .and_then(Self::new)
            .ok_or_else(|| format!("unknown version `{s}` (expected v1..v10)"))
    }
}

impl TryFrom<String> for VersionId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<VersionId> for String {
    fn from(v: VersionId) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Dev,
    Test,
    Prod,
}

impl Environment {
    pub const ALL: [Environment; 3] = [Environment::Dev, Environment::Test, Environment::Prod];

    pub fn as_str(self) -> &'static str {
        match self {
            Environment::Dev => "dev",
            Environment::Test => "test",
            Environment::Prod => "prod",
        }
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Environment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dev" => Ok(Environment::Dev),
            "test" => Ok(Environment::Test),
            "prod" => Ok(Environment::Prod),
            other => Err(format!("unknown environment `{other}` (expected dev|test|prod)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeType {
    Insert,
    Modify,
    Delete,
}

impl fmt::Display for ChangeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChangeType::Insert => "insert",
            ChangeType::Modify => "modify",
            ChangeType::Delete => "delete",
        })
    }
}

/// One rule-level difference, either between consecutive versions within an
/// environment or between two environments of one version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogDelta {
    pub version_from: VersionId,
    pub version_to: VersionId,
    pub env_from: Environment,
    pub env_to: Environment,
    pub change_type: ChangeType,
    pub rule_id: String,
    pub description: String,
}

impl CatalogDelta {
    /// `dev` for a version step, `test->prod` across environments.
    pub fn env_label(&self) -> String {
        if self.env_from == self.env_to {
            self.env_from.to_string()
        } else {
            format!("{}->{}", self.env_from, self.env_to)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    pub seed: u64,
    sets: BTreeMap<(VersionId, Environment), RuleSet>,
    pub deltas: Vec<CatalogDelta>,
}

impl Catalog {
    pub fn generate(seed: u64) -> Self {
        Generator::new(seed).run()
    }

    pub fn get(&self, version: VersionId, env: Environment) -> &RuleSet {
        &self.sets[&(version, env)]
    }

    pub fn sets(&self) -> impl Iterator<Item = &RuleSet> {
        self.sets.values()
    }

    /// Deltas between `version.previous()` and `version`.
    pub fn version_deltas(&self, version: VersionId) -> impl Iterator<Item = &CatalogDelta> {
        self.deltas
            .iter()
            .filter(move |d| d.version_to == version && d.version_from != d.version_to)
    }

    pub fn delta_csv(&self) -> String {
        let mut out = String::from("version_from,version_to,env,change_type,rule_id\n");
        for d in &self.deltas {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                d.version_from,
                d.version_to,
                d.env_label(),
                d.change_type,
                d.rule_id
            ));
        }
        out
    }

    /// One `<version>_<env>.rules` file per set plus `deltas.csv`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for set in self.sets.values() {
            fs::write(dir.join(ruleset_file_name(set.version, set.environment)), set.to_text())?;
        }
        fs::write(dir.join("deltas.csv"), self.delta_csv())
    }

    /// Everything that `write_dir` writes, concatenated; used for identity checks.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for set in self.sets.values() {
            out.push_str(&format!("# {} {}\n", set.version, set.environment));
            out.push_str(&set.to_text());
        }
        out.push_str(&self.delta_csv());
        out
    }
}

pub fn ruleset_file_name(version: VersionId, env: Environment) -> String {
    format!("{version}_{env}.rules")
}

/// Differences from `old` to `new`, keyed by rule id.
pub fn diff(old: &RuleSet, new: &RuleSet) -> Vec<(ChangeType, String, String)> {
    let mut out = Vec::new();
    let old_rules: BTreeMap<&str, &Rule> = old.rules().map(|r| (r.id.as_str(), r)).collect();
    let new_rules: BTreeMap<&str, &Rule> = new.rules().map(|r| (r.id.as_str(), r)).collect();
    for r in old.rules() {
        if !new_rules.contains_key(r.id.as_str()) {
            out.push((ChangeType::Delete, r.id.clone(), format!("removed `{}`", r.expr)));
        }
    }
    for r in new.rules() {
        match old_rules.get(r.id.as_str()) {
            None => out.push((ChangeType::Insert, r.id.clone(), format!("added `{}`", r.expr))),
            Some(prev) if prev.expr != r.expr => out.push((
                ChangeType::Modify,
                r.id.clone(),
                format!("`{}` -> `{}`", prev.expr, r.expr),
            )),
            Some(_) => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Edit {
    AddConstraint,
    RemoveConstraint,
    ExtendList,
    ShrinkList,
    ChangeLiteral,
}

const TIGHTEN: [Edit; 2] = [Edit::AddConstraint, Edit::ExtendList];
const LOOSEN: [Edit; 3] = [Edit::RemoveConstraint, Edit::ShrinkList, Edit::ChangeLiteral];
const ANY_EDIT: [Edit; 5] = [
    Edit::AddConstraint,
    Edit::RemoveConstraint,
    Edit::ExtendList,
    Edit::ShrinkList,
    Edit::ChangeLiteral,
];

struct Generator {
    rng: ChaCha8Rng,
    seed: u64,
    next_validation: usize,
    next_aggregation: usize,
}

fn s(v: &str) -> String {
    format!("'{v}'")
}

fn list(items: &[String]) -> String {
    let quoted: Vec<_> = items.iter().map(|x| s(x)).collect();
    format!("[{}]", quoted.join(","))
}

/// Values a field (or projection of it) can take; drives list and literal edits.
fn domain_for(operand: &Operand) -> Vec<String> {
    let owned = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    match operand {
        Operand::Field(f) => match f.as_str() {
            "Metastase" => owned(&METASTASER),
            "Meldingstype" => owned(&MELDINGSTYPER),
            "Topografi" => owned(&TOPOGRAFI_CODES),
            "Ekstralokalisasjon" => owned(&EKSTRALOKALISASJONER),
            "CancerType" => owned(&CANCER_TYPES),
            _ => Vec::new(),
        },
        Operand::Substring { field, start, .. } => match (field.as_str(), start) {
            ("Topografi", 1) => owned(&TOPOGRAFI_PREFIXES),
            (_, 1) => years(),
            (_, 6) => (1..=12).map(|m| format!("{m:02}")).collect(),
            _ => Vec::new(),
        },
    }
}

impl Generator {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            next_validation: 1,
            next_aggregation: 1,
        }
    }

    fn pick<'a>(&mut self, xs: &'a [&'a str]) -> &'a str {
        xs.choose(&mut self.rng).expect("non-empty domain")
    }

    fn subset(&mut self, xs: &[&str], min: usize, max: usize) -> Vec<String> {
        let n = self.rng.random_range(min..=max.min(xs.len()));
        let mut picked: Vec<String> = xs.choose_multiple(&mut self.rng, n).map(|x| x.to_string()).collect();
        // keep domain order so rule text reads naturally
        picked.sort_by_key(|x| xs.iter().position(|y| y == x));
        picked
    }

    fn year_list(&mut self) -> Vec<String> {
        let all = years();
        let refs: Vec<&str> = all.iter().map(String::as_str).collect();
        self.subset(&refs, 3, 7)
    }

    fn validation_rule(&mut self) -> Rule {
        let id = format!("R{:02}", self.next_validation);
        self.next_validation += 1;
        let ty = self.pick(&CANCER_TYPES).to_string();
        let prefix = site_prefix(&ty).expect("known type");
        let template = self.rng.random_range(0..6);
        let (text, scope) = match template {
            0 => (
                format!(
                    "Topografi->startswith({}) implies Metastase in {}",
                    s(prefix),
                    list(&self.subset(&METASTASER, 4, 6))
                ),
                Scope::CancerType(ty),
            ),
            1 => (
                format!(
                    "(Meldingstype = {} and Topografi notIn {} and Topografi->substring(1,2) notIn {}) implies Metastase != {}",
                    s(self.pick(&MELDINGSTYPER)),
                    list(&self.subset(&TOPOGRAFI_CODES, 3, 6)),
                    list(&self.subset(&TOPOGRAFI_PREFIXES[4..], 3, 7)),
                    s(self.pick(&METASTASER)),
                ),
                Scope::All,
            ),
            2 => (
                format!(
                    "Meldingstype in {} implies Topografi->substring(1,2) = {}",
                    list(&self.subset(&MELDINGSTYPER, 2, 3)),
                    s(prefix)
                ),
                Scope::CancerType(ty),
            ),
            3 => {
                let years = self.year_list();
                (
                    format!(
                        "Diagnosedato->substring(1,4) in {} implies Meldingstype != {}",
                        list(&years),
                        s(self.pick(&MELDINGSTYPER))
                    ),
                    Scope::CancerType(ty),
                )
            }
            4 => (
                format!(
                    "Ekstralokalisasjon != {} implies Metastase notIn {}",
                    s(self.pick(&EKSTRALOKALISASJONER)),
                    list(&self.subset(&METASTASER, 1, 3))
                ),
                if self.rng.random_bool(0.5) { Scope::All } else { Scope::CancerType(ty) },
            ),
            _ => (
                format!("Metastase in {}", list(&self.subset(&METASTASER, 3, 7))),
                Scope::CancerType(ty),
            ),
        };
        Rule::parse(&text, &id, RuleKind::Validation, scope).expect("template rules parse")
    }

    fn aggregation_rule(&mut self) -> Rule {
        let id = format!("A{:02}", self.next_aggregation);
        self.next_aggregation += 1;
        let ty = self.pick(&CANCER_TYPES);
        let prefix = site_prefix(ty).expect("known type");
        let text = match self.rng.random_range(0..5) {
            0 => format!("Topografi->startswith({}) implies CancerType = {}", s(prefix), s(ty)),
            1 => format!("Meldingstype in {}", list(&self.subset(&MELDINGSTYPER, 2, 4))),
            2 => {
                let years = self.year_list();
                format!("Case.Diagnosedato->substring(1,4) in {}", list(&years))
            }
            3 => format!(
                "(Meldingstype = {} and Metastase != {}) implies Topografi->substring(1,2) notIn {}",
                s(self.pick(&MELDINGSTYPER)),
                s(self.pick(&METASTASER)),
                list(&self.subset(&TOPOGRAFI_PREFIXES, 2, 5))
            ),
            _ => {
                let months: Vec<String> = (1..=12).map(|m| format!("{m:02}")).collect();
                let refs: Vec<&str> = months.iter().map(String::as_str).collect();
                format!("Diagnosedato->substring(6,7) in {}", list(&self.subset(&refs, 6, 11)))
            }
        };
        Rule::parse(&text, &id, RuleKind::Aggregation, Scope::All).expect("template rules parse")
    }

    fn extra_atom(&mut self) -> RuleExpr {
        match self.rng.random_range(0..3) {
            0 => RuleExpr::Compare {
                lhs: Operand::Field("Ekstralokalisasjon".into()),
                op: CmpOp::NotEq,
                rhs: Literal::Str(self.pick(&EKSTRALOKALISASJONER).into()),
            },
            1 => RuleExpr::Compare {
                lhs: Operand::Field("Meldingstype".into()),
                op: CmpOp::Eq,
                rhs: Literal::Str(self.pick(&MELDINGSTYPER).into()),
            },
            _ => RuleExpr::Compare {
                lhs: Operand::Field("Metastase".into()),
                op: CmpOp::NotIn,
                rhs: Literal::List(self.subset(&METASTASER, 1, 2)),
            },
        }
    }

    /// Applies `edit` to the expression, or returns `None` when it does not apply.
    fn apply_edit(&mut self, expr: &RuleExpr, edit: Edit) -> Option<RuleExpr> {
        match edit {
            Edit::AddConstraint => {
                let atom = self.extra_atom();
                let extend = |e: &RuleExpr| -> Option<RuleExpr> {
                    let mut items = match e {
                        RuleExpr::And(items) => items.clone(),
                        other => vec![other.clone()],
                    };
                    if items.contains(&atom) {
                        return None;
                    }
                    items.push(atom.clone());
                    Some(RuleExpr::And(items))
                };
                match expr {
                    RuleExpr::Implies(a, b) => Some(RuleExpr::Implies(Box::new(extend(a)?), b.clone())),
                    other => extend(other),
                }
            }
            Edit::RemoveConstraint => {
                let shrink = |rng: &mut ChaCha8Rng, e: &RuleExpr| -> Option<RuleExpr> {
                    let RuleExpr::And(items) = e else { return None };
                    let mut items = items.clone();
                    items.remove(rng.random_range(0..items.len()));
                    Some(if items.len() == 1 { items.pop().expect("one") } else { RuleExpr::And(items) })
                };
                match expr {
                    RuleExpr::Implies(a, b) => Some(RuleExpr::Implies(Box::new(shrink(&mut self.rng, a)?), b.clone())),
                    other => shrink(&mut self.rng, other),
                }
            }
            Edit::ExtendList | Edit::ShrinkList | Edit::ChangeLiteral => {
                let mut atoms = Vec::new();
                collect_comparisons(expr, &mut Vec::new(), &mut atoms);
                atoms.shuffle(&mut self.rng);
                for path in atoms {
                    let RuleExpr::Compare { lhs, op, rhs } = node_at(expr, &path) else { continue };
                    let domain = domain_for(lhs);
                    let new_rhs = match (edit, rhs) {
                        (Edit::ExtendList, Literal::List(l)) => {
                            let missing: Vec<&String> = domain.iter().filter(|d| !l.contains(d)).collect();
                            let Some(add) = missing.choose(&mut self.rng) else { continue };
                            let mut l = l.clone();
                            l.push((*add).clone());
                            Literal::List(l)
                        }
                        (Edit::ShrinkList, Literal::List(l)) if l.len() >= 2 => {
                            let mut l = l.clone();
                            l.remove(self.rng.random_range(0..l.len()));
                            Literal::List(l)
                        }
                        (Edit::ChangeLiteral, Literal::Str(v)) => {
                            let others: Vec<&String> = domain.iter().filter(|d| *d != v).collect();
                            let Some(new) = others.choose(&mut self.rng) else { continue };
                            Literal::Str((*new).clone())
                        }
                        _ => continue,
                    };
                    let replacement = RuleExpr::Compare { lhs: lhs.clone(), op: *op, rhs: new_rhs };
                    return Some(replace_at(expr, &path, replacement));
                }
                None
            }
        }
    }

    /// A changed copy of `rule` using one of `edits`; falls back to any edit.
    fn modify(&mut self, rule: &Rule, edits: &[Edit]) -> Rule {
        for _ in 0..16 {
            let edit = *edits.choose(&mut self.rng).expect("edits");
            if let Some(e) = self.apply_edit(&rule.expr, edit) {
                if e != rule.expr {
                    return rule.with_expr(e);
                }
            }
        }
        for edit in ANY_EDIT {
            if let Some(e) = self.apply_edit(&rule.expr, edit) {
                if e != rule.expr {
                    return rule.with_expr(e);
                }
            }
        }
        unreachable!("AddConstraint always changes a rule")
    }

    fn step(&mut self, prev: &RuleSet, version: VersionId) -> RuleSet {
        let (target_v, target_a) = version.rule_counts();
        let mut next = RuleSet::empty(version, Environment::Dev);
        next.validation_rules = self.evolve(&prev.validation_rules, target_v, 2, 1..=3, RuleKind::Validation);
        next.aggregation_rules = self.evolve(&prev.aggregation_rules, target_a, 1, 0..=2, RuleKind::Aggregation);
        next
    }

    fn evolve(
        &mut self,
        prev: &[Rule],
        target: usize,
        max_deletes: usize,
        modifies: std::ops::RangeInclusive<usize>,
        kind: RuleKind,
    ) -> Vec<Rule> {
        let deletes = self.rng.random_range(0..=max_deletes.min(prev.len().saturating_sub(1)));
        let mut kept: Vec<Rule> = prev.to_vec();
        for _ in 0..deletes {
            let i = self.rng.random_range(0..kept.len());
            kept.remove(i);
        }
        let n_mod = self.rng.random_range(modifies).min(kept.len());
        let mut idx: Vec<usize> = (0..kept.len()).collect();
        idx.shuffle(&mut self.rng);
        for &i in idx.iter().take(n_mod) {
            kept[i] = self.modify(&kept[i], &ANY_EDIT);
        }
        while kept.len() < target {
            let r = match kind {
                RuleKind::Validation => self.validation_rule(),
                RuleKind::Aggregation => self.aggregation_rule(),
            };
            kept.push(r);
        }
        kept
    }

    /// Environment variant of a canonical set: `edits` applied to `n` distinct rules.
    fn variant(&mut self, base: &RuleSet, env: Environment, edits: &[Edit], n: usize, include_aggregation: bool) -> RuleSet {
        let mut set = base.clone();
        set.environment = env;
        let total = set.validation_rules.len() + if include_aggregation { set.aggregation_rules.len() } else { 0 };
        let mut idx: Vec<usize> = (0..total).collect();
        idx.shuffle(&mut self.rng);
        for &i in idx.iter().take(n) {
            let nv = set.validation_rules.len();
            let slot = if i < nv { &mut set.validation_rules[i] } else { &mut set.aggregation_rules[i - nv] };
            *slot = self.modify(slot, edits);
        }
        set
    }

    fn environments(&mut self, canonical: &RuleSet) -> [RuleSet; 3] {
        let mut dev = canonical.clone();
        dev.environment = Environment::Dev;
        let n_test = self.rng.random_range(1..=2);
        let test = self.variant(canonical, Environment::Test, &TIGHTEN, n_test, false);
        let n_prod = self.rng.random_range(1..=2);
        let mut prod = self.variant(canonical, Environment::Prod, &LOOSEN, n_prod, true);
        while diff(&test, &prod).is_empty() {
            prod = self.variant(&prod, Environment::Prod, &LOOSEN, 1, true);
        }
        [dev, test, prod]
    }

    fn run(mut self) -> Catalog {
        let v1 = VersionId::new(1).expect("v1");
        let (nv, na) = v1.rule_counts();
        let mut canonical = RuleSet::empty(v1, Environment::Dev);
        canonical.validation_rules = (0..nv).map(|_| self.validation_rule()).collect();
        canonical.aggregation_rules = (0..na).map(|_| self.aggregation_rule()).collect();

        let mut sets = BTreeMap::new();
        let mut deltas = Vec::new();
        let mut prev_envs: Option<[RuleSet; 3]> = None;
        for version in VersionId::all() {
            if let Some(prev_version) = version.previous() {
                let prev_canonical = sets
                    .get(&(prev_version, Environment::Dev))
                    .cloned()
                    .expect("previous dev set");
                canonical = self.step(&prev_canonical, version);
            }
            let mut envs = self.environments(&canonical);
            // every environment must change between consecutive versions
            if let Some(prev) = &prev_envs {
                while prev.iter().zip(&envs).any(|(a, b)| diff(a, b).is_empty()) {
                    envs = self.environments(&canonical);
                }
                for (a, b) in prev.iter().zip(&envs) {
                    push_deltas(&mut deltas, a, b);
                }
            }
            push_deltas(&mut deltas, &envs[0], &envs[1]);
            push_deltas(&mut deltas, &envs[1], &envs[2]);
            for set in &envs {
                sets.insert((set.version, set.environment), set.clone());
            }
            prev_envs = Some(envs);
        }
        Catalog {
            seed: self.seed,
            sets,
            deltas,
        }
    }
}

fn push_deltas(out: &mut Vec<CatalogDelta>, from: &RuleSet, to: &RuleSet) {
    for (change_type, rule_id, description) in diff(from, to) {
        out.push(CatalogDelta {
            version_from: from.version,
            version_to: to.version,
            env_from: from.environment,
            env_to: to.environment,
            change_type,
            rule_id,
            description,
        });
    }
}

/// Paths (child indices) to every comparison node.
fn collect_comparisons(expr: &RuleExpr, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    match expr {
        RuleExpr::Compare { .. } => out.push(path.clone()),
        RuleExpr::StartsWith { .. } => {}
        RuleExpr::And(items) => {
            for (i, e) in items.iter().enumerate() {
                path.push(i);
                collect_comparisons(e, path, out);
                path.pop();
            }
        }
        RuleExpr::Implies(a, b) => {
            for (i, e) in [a, b].into_iter().enumerate() {
                path.push(i);
                collect_comparisons(e, path, out);
                path.pop();
            }
        }
    }
}

fn node_at<'a>(expr: &'a RuleExpr, path: &[usize]) -> &'a RuleExpr {
    match (expr, path.split_first()) {
        (_, None) => expr,
        (RuleExpr::And(items), Some((i, rest))) => node_at(&items[*i], rest),
        (RuleExpr::Implies(a, b), Some((i, rest))) => node_at(if *i == 0 { a } else { b }, rest),
        _ => expr,
    }
}

fn replace_at(expr: &RuleExpr, path: &[usize], new: RuleExpr) -> RuleExpr {
    match (expr, path.split_first()) {
        (_, None) => new,
        (RuleExpr::And(items), Some((i, rest))) => {
            let mut items = items.clone();
            items[*i] = replace_at(&items[*i], rest, new);
            RuleExpr::And(items)
        }
        (RuleExpr::Implies(a, b), Some((i, rest))) => {
            if *i == 0 {
                RuleExpr::Implies(Box::new(replace_at(a, rest, new)), b.clone())
            } else {
                RuleExpr::Implies(a.clone(), Box::new(replace_at(b, rest, new)))
            }
        }
        _ => expr.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::*;

    #[test]
    fn counts_match_for_every_cell() {
        let cat = Catalog::generate(0);
        for v in VersionId::all() {
            for env in Environment::ALL {
                assert_eq!(cat.get(v, env).counts(), v.rule_counts(), "{v} {env}");
            }
        }
        assert_eq!(cat.get(VersionId::new(1).unwrap(), Environment::Dev).counts(), (30, 32));
        assert_eq!(cat.get(VersionId::new(10).unwrap(), Environment::Prod).counts(), (70, 43));
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(Catalog::generate(7).to_text(), Catalog::generate(7).to_text());
        assert_ne!(Catalog::generate(7).to_text(), Catalog::generate(8).to_text());
    }

    #[test]
    fn deltas_reproduce_counts() {
        let cat = Catalog::generate(0);
        for v in VersionId::all().skip(1) {
            let prev = v.previous().unwrap();
            for env in Environment::ALL {
                let deltas: Vec<_> = cat.version_deltas(v).filter(|d| d.env_from == env).collect();
                assert!(!deltas.is_empty(), "{prev}->{v} {env}");
                let count = |kind: RuleKind, ct: ChangeType| {
                    deltas
                        .iter()
                        .filter(|d| d.change_type == ct && d.rule_id.starts_with(if kind == RuleKind::Validation { 'R' } else { 'A' }))
                        .count() as i64
                };
                let (pv, pa) = prev.rule_counts();
                let (nv, na) = v.rule_counts();
                assert_eq!(
                    count(RuleKind::Validation, ChangeType::Insert) - count(RuleKind::Validation, ChangeType::Delete),
                    nv as i64 - pv as i64
                );
                assert_eq!(
                    count(RuleKind::Aggregation, ChangeType::Insert) - count(RuleKind::Aggregation, ChangeType::Delete),
                    na as i64 - pa as i64
                );
            }
        }
        // v2 -> v3 adds 17 validation rules net
        let v3 = VersionId::new(3).unwrap();
        let net: i64 = cat
            .version_deltas(v3)
            .filter(|d| d.env_from == Environment::Dev && d.rule_id.starts_with('R'))
            .map(|d| match d.change_type {
                ChangeType::Insert => 1,
                ChangeType::Delete => -1,
                ChangeType::Modify => 0,
            })
            .sum();
        assert_eq!(net, 17);
    }

    #[test]
    fn environments_differ() {
        let cat = Catalog::generate(0);
        for v in VersionId::all() {
            assert!(!diff(cat.get(v, Environment::Test), cat.get(v, Environment::Prod)).is_empty());
            assert!(!diff(cat.get(v, Environment::Dev), cat.get(v, Environment::Test)).is_empty());
        }
    }

    #[test]
    fn every_rule_references_a_field_and_round_trips() {
        let cat = Catalog::generate(3);
        for set in cat.sets() {
            for r in set.rules() {
                assert!(!r.required_fields().is_empty());
                let back = Rule::from_line(&r.to_line(), 1).unwrap();
                assert_eq!(back, *r);
            }
            let parsed = RuleSet::from_text(&set.to_text(), set.version, set.environment).unwrap();
            assert_eq!(&parsed, set);
        }
    }

    #[test]
    fn empty_message_is_never_applied() {
        let cat = Catalog::generate(0);
        let set = cat.get(VersionId::new(1).unwrap(), Environment::Dev);
        let outcomes = set.validate_message(&CancerMessage::new());
        assert_eq!(outcomes.len(), 30);
        assert!(outcomes.iter().all(|(_, o)| !o.is_applied()));
        let msg = CancerMessage::new()
            .with(CANCER_TYPE, "Breast")
            .with(DIAGNOSEDATO, "2017-12-01")
            .with(TOPOGRAFI, "509")
            .with(METASTASE, "A")
            .with(MELDINGSTYPE, "K")
            .with(EKSTRALOKALISASJON, "0000");
        assert_eq!(set.validate_message(&msg).len(), 30);
    }

    #[test]
    fn writes_catalog_files() {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::generate(1);
        cat.write_dir(dir.path()).unwrap();
        let v4 = VersionId::new(4).unwrap();
        let text = std::fs::read_to_string(dir.path().join("v4_test.rules")).unwrap();
        let set = RuleSet::from_text(&text, v4, Environment::Test).unwrap();
        assert_eq!(&set, cat.get(v4, Environment::Test));
        let csv = std::fs::read_to_string(dir.path().join("deltas.csv")).unwrap();
        assert!(csv.starts_with("version_from,version_to,env,change_type,rule_id\n"));
        assert!(csv.contains(",test->prod,"));
    }
}
