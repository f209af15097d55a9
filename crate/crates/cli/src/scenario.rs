//! Scenario files: a restricted JSON document describing a game, payoff structures, hierarchies,
//! type structures, models and the commands to run on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rationalizer_core::epistemic::{SubjectiveModel, SubjectiveStructure, TypeSpec, TypeStructure};
use rationalizer_core::game::{ExtensiveForm, NodeKind, PlayerId, TreeSpec};
use rationalizer_core::payoff::{PayoffState, StandardPayoffStructure};
use rationalizer_core::perturb::{
    centipede_family, default_rich_structure, rich_extension, richness_graft, tie_break, two_state_structure, Sign,
};
use rationalizer_core::rational::{format_rational, parse_rational, Rational};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An exact rational written as `"p/q"` or `"p"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Q(pub Rational);

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Q;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational string such as \"3\" or \"-1/2\"")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Q, E> {
                parse_rational(v).map(Q).map_err(E::custom)
            }
            fn visit_f64<E: de::Error>(self, _: f64) -> Result<Q, E> {
                Err(E::custom("decimals forbidden; use p/q"))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Q, E> {
                Err(E::custom(format!("rationals are strings; write \"{v}\"")))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Q, E> {
                Err(E::custom(format!("rationals are strings; write \"{v}\"")))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub form: FormDef,
    #[serde(default)]
    pub structures: BTreeMap<String, StructureDef>,
    #[serde(default)]
    pub hierarchies: BTreeMap<String, HierarchyDef>,
    #[serde(default)]
    pub type_structures: BTreeMap<String, TypeStructureDef>,
    #[serde(default)]
    pub models: BTreeMap<String, ModelDef>,
    #[serde(default)]
    pub commands: Vec<Command>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormDef {
    pub players: Vec<String>,
    pub tree: NodeDef,
}

/// A terminal when `moves` is absent. Child keys join one action per mover with `&`, movers in
/// player order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moves: Option<BTreeMap<String, Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<BTreeMap<String, NodeDef>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nature: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub types: Option<BTreeMap<String, Vec<String>>>,
    /// Later entries override earlier ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoffs: Option<Vec<PayoffEntry>>,
    /// Per player, payoff types produced by perturbing another type of the same structure, mapped
    /// to that original type. Only affects distances.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub derived_from: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<Generator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffEntry {
    pub terminal: String,
    /// Keys are `nature` or player names; omitted keys range over every label.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub when: BTreeMap<String, String>,
    pub u: BTreeMap<String, Q>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SignDef {
    #[default]
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `n` absent gives the limit structure.
    Centipede {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u64>,
        #[serde(default)]
        sign: SignDef,
    },
    TwoState,
    TieBreak {
        base: String,
        n: u64,
    },
    RichExtension {
        base: String,
    },
    DefaultRich,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyDef {
    pub owner: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_knowledge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ascribe: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graft: Option<GraftDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraftDef {
    pub base: String,
    pub rich: String,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeStructureDef {
    pub types: Vec<TypeDefinition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeDefinition {
    pub label: String,
    pub player: String,
    pub payoff: String,
    pub belief: Vec<BeliefEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefEntry {
    pub nature: String,
    #[serde(default)]
    pub opponents: BTreeMap<String, String>,
    pub p: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDef {
    pub type_structure: String,
    pub players: BTreeMap<String, ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub hierarchy: String,
    #[serde(rename = "type")]
    pub type_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ref {
    Model(String),
    Structure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    TieBreak,
    Graft,
    Selection,
}

impl PerturbKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tie_break" => Some(PerturbKind::TieBreak),
            "graft" => Some(PerturbKind::Graft),
            "selection" => Some(PerturbKind::Selection),
            _ => None,
        }
    }
}

fn default_concept() -> String {
    "efr".into()
}

fn default_concepts() -> Vec<String> {
    vec!["efr".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Solve {
        model: String,
        #[serde(default = "default_concept")]
        concept: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_rounds: Option<usize>,
    },
    Compare {
        model: String,
        concepts: Vec<String>,
    },
    Distance {
        a: Ref,
        b: Ref,
    },
    Check {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        richness: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        hierarchies: Vec<String>,
    },
    Perturb {
        model: String,
        kind: PerturbKind,
        param: u64,
        /// Strategy per player, for `selection`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<BTreeMap<String, String>>,
        #[serde(default = "default_concepts")]
        concepts: Vec<String>,
    },
}

// ---------------------------------------------------------------------------------------------
// Errors

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    UnresolvedReference,
    Validation,
}

impl ErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::Syntax => "E100",
            ErrorKind::UnresolvedReference => "E200",
            ErrorKind::Validation => "E300",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError {
    pub kind: ErrorKind,
    pub message: String,
    /// 1-based line and column when known.
    pub position: Option<(usize, usize)>,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{}", self.kind.code())?;
        if let Some((l, c)) = self.position {
            write!(f, " at line {l}, column {c}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ScenarioError {}

/// Error builder that locates the first quoted occurrence of a name used as a value.
struct Locator<'a> {
    text: Option<&'a str>,
}

impl Locator<'_> {
    fn position_of(&self, name: &str) -> Option<(usize, usize)> {
        let text = self.text?;
        let needle = format!("\"{name}\"");
        let mut from = 0;
        while let Some(off) = text[from..].find(&needle) {
            let start = from + off;
            let rest = text[start + needle.len()..].trim_start();
            if !rest.starts_with(':') {
                let before = &text[..start];
                let line = before.matches('\n').count() + 1;
                let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
                return Some((line, col));
            }
            from = start + needle.len();
        }
        None
    }

    fn unresolved(&self, what: &str, name: &str) -> ScenarioError {
        ScenarioError {
            kind: ErrorKind::UnresolvedReference,
            message: format!("unknown {what} `{name}`"),
            position: self.position_of(name),
        }
    }

    fn invalid(&self, context: &str, message: impl fmt::Display) -> ScenarioError {
        ScenarioError {
            kind: ErrorKind::Validation,
            message: format!("{context}: {message}"),
            position: self.position_of(context.rsplit('.').next().unwrap_or(context)),
        }
    }
}

// ---------------------------------------------------------------------------------------------
// Parsing and resolution

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError {
        kind: ErrorKind::Syntax,
        message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
        position: Some((e.line(), e.column())),
    })
}

pub fn serialize_scenario(s: &Scenario) -> String {
    let mut out = serde_json::to_string_pretty(s).expect("plain data");
    out.push('\n');
    out
}

/// A scenario with every reference resolved and every validator passed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    pub form: ExtensiveForm,
    pub structures: BTreeMap<String, Arc<StandardPayoffStructure>>,
    pub hierarchies: BTreeMap<String, Arc<SubjectiveStructure>>,
    pub type_structures: BTreeMap<String, Arc<TypeStructure>>,
    pub models: BTreeMap<String, Vec<SubjectiveModel>>,
    pub commands: Vec<Command>,
}

/// Parses and resolves scenario text.
pub fn load_scenario(text: &str) -> Result<Resolved, ScenarioError> {
    let raw = parse_scenario(text)?;
    resolve(&raw, Some(text))
}

pub fn resolve(raw: &Scenario, text: Option<&str>) -> Result<Resolved, ScenarioError> {
    let loc = Locator { text };
    let form = build_form(&raw.form, &loc)?;
    let violations = form.validate();
    if let Some(v) = violations.first() {
        return Err(loc.invalid("form", format!("{}: {}", v.node, v.message)));
    }
    let mut r = Resolver { raw, loc, form, structures: BTreeMap::new(), hierarchies: BTreeMap::new(), stack: Vec::new() };
    for name in raw.structures.keys() {
        r.structure(name)?;
    }
    for name in raw.hierarchies.keys() {
        r.hierarchy(name)?;
    }
    let mut type_structures = BTreeMap::new();
    for (name, def) in &raw.type_structures {
        type_structures.insert(name.clone(), Arc::new(r.type_structure(name, def)?));
    }
    let mut models = BTreeMap::new();
    for (name, def) in &raw.models {
        let ts = type_structures.get(&def.type_structure).ok_or_else(|| r.loc.unresolved("type structure", &def.type_structure))?;
        models.insert(name.clone(), r.model(name, def, ts)?);
    }
    for (k, c) in raw.commands.iter().enumerate() {
        check_command(k, c, &r, &models)?;
    }
    Ok(Resolved {
        name: raw.name.clone().unwrap_or_else(|| "scenario".into()),
        form: r.form,
        structures: r.structures,
        hierarchies: r.hierarchies,
        type_structures,
        models,
        commands: raw.commands.clone(),
    })
}

fn build_form(def: &FormDef, loc: &Locator) -> Result<ExtensiveForm, ScenarioError> {
    let players = def.players.clone();
    let index: BTreeMap<&str, PlayerId> = players.iter().enumerate().map(|(k, p)| (p.as_str(), k)).collect();
    fn node(n: &NodeDef, index: &BTreeMap<&str, PlayerId>, path: &str, loc: &Locator) -> Result<TreeSpec, ScenarioError> {
        let Some(moves) = &n.moves else {
            if n.next.is_some() {
                return Err(loc.invalid(path, "`next` without `moves`"));
            }
            return Ok(TreeSpec::Terminal { label: n.terminal.clone() });
        };
        if n.terminal.is_some() {
            return Err(loc.invalid(path, "a node with `moves` cannot be a terminal"));
        }
        let mut mv: Vec<(PlayerId, Vec<String>)> = Vec::new();
        for (p, acts) in moves {
            let &pi = index.get(p.as_str()).ok_or_else(|| loc.unresolved("player", p))?;
            mv.push((pi, acts.clone()));
        }
        mv.sort_by_key(|(p, _)| *p);
        let mut children = Vec::new();
        for (key, child) in n.next.iter().flatten() {
            let acts: Vec<String> = key.split('&').map(str::to_string).collect();
            let sub = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
            children.push((acts, node(child, index, &sub, loc)?));
        }
        // Children follow the order in which actions are listed, not key order.
        let rank = |acts: &Vec<String>| -> Vec<usize> {
            acts.iter().zip(&mv).map(|(a, (_, list))| list.iter().position(|x| x == a).unwrap_or(usize::MAX)).collect()
        };
        children.sort_by_key(|(acts, _)| rank(acts));
        Ok(TreeSpec::Decision { moves: mv, children })
    }
    let tree = node(&def.tree, &index, "", loc)?;
    ExtensiveForm::new(players, &tree).map_err(|e| loc.invalid("form", e))
}

struct Resolver<'a> {
    raw: &'a Scenario,
    loc: Locator<'a>,
    form: ExtensiveForm,
    structures: BTreeMap<String, Arc<StandardPayoffStructure>>,
    hierarchies: BTreeMap<String, Arc<SubjectiveStructure>>,
    stack: Vec<String>,
}

impl Resolver<'_> {
    fn player(&self, name: &str) -> Result<PlayerId, ScenarioError> {
        self.form.player_index(name).ok_or_else(|| self.loc.unresolved("player", name))
    }

    fn enter(&mut self, key: String) -> Result<(), ScenarioError> {
        if self.stack.contains(&key) {
            return Err(self.loc.invalid(&key, format!("cyclic reference through {}", self.stack.join(" -> "))));
        }
        self.stack.push(key);
        Ok(())
    }

    fn structure(&mut self, name: &str) -> Result<Arc<StandardPayoffStructure>, ScenarioError> {
        if let Some(s) = self.structures.get(name) {
            return Ok(s.clone());
        }
        let def = self.raw.structures.get(name).ok_or_else(|| self.loc.unresolved("structure", name))?;
        self.enter(format!("structure {name}"))?;
        let built = self.build_structure(name, def)?;
        self.stack.pop();
        if built.num_terminals() != self.form.num_terminals() || built.num_players() != self.form.num_players() {
            return Err(self.loc.invalid(
                name,
                format!(
                    "structure covers {} players and {} terminals; the form has {} and {}",
                    built.num_players(),
                    built.num_terminals(),
                    self.form.num_players(),
                    self.form.num_terminals()
                ),
            ));
        }
        let built = Arc::new(built.renamed(name));
        self.structures.insert(name.to_string(), built.clone());
        Ok(built)
    }

    fn build_structure(&mut self, name: &str, def: &StructureDef) -> Result<StandardPayoffStructure, ScenarioError> {
        let explicit = def.nature.is_some() || def.types.is_some() || def.payoffs.is_some() || !def.derived_from.is_empty();
        match (&def.generate, explicit) {
            (Some(_), true) => Err(self.loc.invalid(name, "give either `generate` or an explicit table, not both")),
            (None, false) => Err(self.loc.invalid(name, "missing `nature`, `types` and `payoffs`")),
            (Some(g), false) => self.generate(name, g),
            (None, true) => self.explicit(name, def),
        }
    }

    fn generate(&mut self, name: &str, g: &Generator) -> Result<StandardPayoffStructure, ScenarioError> {
        let form = &self.form;
        let needs_centipede = matches!(g, Generator::Centipede { .. } | Generator::TwoState);
        if needs_centipede {
            let labels: Vec<&str> = form.terminals().iter().map(|&z| form.terminal_label(z)).collect();
            if form.num_players() != 2 || labels != ["D1", "A1.d", "A1.a.D2", "A1.a.A2"] {
                return Err(self.loc.invalid(name, "this generator needs the three-stage centipede form"));
            }
        }
        Ok(match g {
            Generator::Centipede { n, sign } => {
                if *n == Some(0) {
                    return Err(self.loc.invalid(name, "n must be at least 1"));
                }
                centipede_family(*n, if *sign == SignDef::Plus { Sign::Plus } else { Sign::Minus })
            }
            Generator::TwoState => two_state_structure(),
            Generator::TieBreak { base, n } => {
                let b = self.structure(base)?;
                tie_break(&self.form, &b, *n).map_err(|e| self.loc.invalid(name, e))?
            }
            Generator::RichExtension { base } => {
                let b = self.structure(base)?;
                rich_extension(&self.form, &b).map_err(|e| self.loc.invalid(name, e))?
            }
            Generator::DefaultRich => default_rich_structure(form),
        })
    }

    fn explicit(&self, name: &str, def: &StructureDef) -> Result<StandardPayoffStructure, ScenarioError> {
        let form = &self.form;
        let nature = def.nature.clone().ok_or_else(|| self.loc.invalid(name, "missing `nature`"))?;
        let types_def = def.types.as_ref().ok_or_else(|| self.loc.invalid(name, "missing `types`"))?;
        let mut types = vec![Vec::new(); form.num_players()];
        for (p, labels) in types_def {
            types[self.player(p)?] = labels.clone();
        }
        let np = form.num_players();
        let nz = form.num_terminals();
        let states: usize = nature.len() * types.iter().map(Vec::len).product::<usize>();
        let probe = |nature: &[String], types: &[Vec<String>]| {
            StandardPayoffStructure::from_fn(name, nature.to_vec(), types.to_vec(), nz, |_, _, _| Rational::default())
        };
        let shape = probe(&nature, &types).map_err(|e| self.loc.invalid(name, e))?;
        let mut table: Vec<Option<Rational>> = vec![None; states * np * nz];
        for entry in def.payoffs.iter().flatten() {
            let z = form
                .terminal_by_label(&entry.terminal)
                .and_then(|z| form.terminal_index(z))
                .ok_or_else(|| self.loc.unresolved("terminal", &entry.terminal))?;
            let mut fixed_nature = None;
            let mut fixed: Vec<Option<usize>> = vec![None; np];
            for (k, v) in &entry.when {
                if k == "nature" {
                    fixed_nature = Some(shape.nature_index(v).ok_or_else(|| self.loc.unresolved("nature state", v))?);
                } else {
                    let p = self.player(k)?;
                    fixed[p] = Some(shape.type_index(p, v).ok_or_else(|| self.loc.unresolved("payoff type", v))?);
                }
            }
            let utilities: Vec<(PlayerId, &Q)> =
                entry.u.iter().map(|(p, q)| Ok((self.player(p)?, q))).collect::<Result<_, ScenarioError>>()?;
            for st in shape.states() {
                if fixed_nature.is_some_and(|n| n != st.nature)
                    || fixed.iter().zip(&st.types).any(|(f, t)| f.is_some_and(|f| f != *t))
                {
                    continue;
                }
                let idx = shape.state_index(&st);
                for (p, q) in &utilities {
                    table[(idx * np + p) * nz + z] = Some(q.0.clone());
                }
            }
        }
        let built = StandardPayoffStructure::from_table(name, nature, types, nz, table).map_err(|e| self.loc.invalid(name, e))?;
        let mut bases: Vec<Vec<usize>> = (0..np).map(|p| (0..built.types(p).len()).collect()).collect();
        for (player, map) in &def.derived_from {
            let p = self.player(player)?;
            for (derived, base) in map {
                let d = built.type_index(p, derived).ok_or_else(|| self.loc.unresolved("payoff type", derived))?;
                let b = built.type_index(p, base).ok_or_else(|| self.loc.unresolved("payoff type", base))?;
                bases[p][d] = b;
            }
            for (derived, base) in map {
                if map.contains_key(base) {
                    return Err(self.loc.invalid(derived, format!("`{base}` is itself derived; name its original type")));
                }
            }
        }
        Ok(built.with_base_types(bases))
    }

    fn hierarchy(&mut self, name: &str) -> Result<Arc<SubjectiveStructure>, ScenarioError> {
        if let Some(h) = self.hierarchies.get(name) {
            return Ok(h.clone());
        }
        let def = self.raw.hierarchies.get(name).ok_or_else(|| self.loc.unresolved("hierarchy", name))?;
        self.enter(format!("hierarchy {name}"))?;
        let owner = self.player(&def.owner)?;
        let forms = [def.common_knowledge.is_some(), def.level1.is_some() || def.ascribe.is_some(), def.graft.is_some()];
        if forms.iter().filter(|&&b| b).count() != 1 {
            return Err(self.loc.invalid(name, "give exactly one of `common_knowledge`, `level1`+`ascribe`, `graft`"));
        }
        let built = if let Some(s) = &def.common_knowledge {
            SubjectiveStructure::common_knowledge(owner, self.structure(s)?)
        } else if let Some(g) = &def.graft {
            let base = self.structure(&g.base)?;
            let rich = self.structure(&g.rich)?;
            richness_graft(&self.form, &base, &rich, g.depth, owner).map_err(|e| self.loc.invalid(name, e))?
        } else {
            let l1_name = def.level1.as_ref().ok_or_else(|| self.loc.invalid(name, "missing `level1`"))?;
            let l1 = self.structure(l1_name)?;
            let asc_def = def.ascribe.as_ref().ok_or_else(|| self.loc.invalid(name, "missing `ascribe`"))?;
            let mut asc: Vec<Option<Arc<SubjectiveStructure>>> = vec![None; self.form.num_players()];
            for (p, h) in asc_def {
                let pi = self.player(p)?;
                asc[pi] = Some(self.hierarchy(h)?);
            }
            let list: Vec<Arc<SubjectiveStructure>> = (0..self.form.num_players())
                .filter(|&j| j != owner)
                .map(|j| asc[j].clone().ok_or_else(|| self.loc.invalid(name, format!("no ascription for {}", self.form.player_name(j)))))
                .collect::<Result<_, _>>()?;
            if asc[owner].is_some() {
                return Err(self.loc.invalid(name, "a hierarchy cannot ascribe to its owner"));
            }
            SubjectiveStructure::ascribing(owner, l1, list).map_err(|e| self.loc.invalid(name, e))?
        };
        let violations = built.validate();
        if let Some(v) = violations.first() {
            return Err(self.loc.invalid(name, v));
        }
        self.stack.pop();
        self.hierarchies.insert(name.to_string(), built.clone());
        Ok(built)
    }

    fn type_structure(&self, name: &str, def: &TypeStructureDef) -> Result<TypeStructure, ScenarioError> {
        let labels: BTreeSet<&str> = def.types.iter().map(|t| t.label.as_str()).collect();
        let mut specs = Vec::new();
        for t in &def.types {
            let p = self.player(&t.player)?;
            let mut belief = Vec::new();
            for b in &t.belief {
                let mut opp = Vec::new();
                for j in (0..self.form.num_players()).filter(|&j| j != p) {
                    let pname = self.form.player_name(j);
                    let label = b
                        .opponents
                        .get(pname)
                        .ok_or_else(|| self.loc.invalid(&t.label, format!("belief entry lacks a type for {pname}")))?;
                    if !labels.contains(label.as_str()) {
                        return Err(self.loc.unresolved("type", label));
                    }
                    opp.push(label.clone());
                }
                for k in b.opponents.keys() {
                    if self.player(k)? == p {
                        return Err(self.loc.invalid(&t.label, "a belief cannot name the type's own player"));
                    }
                }
                belief.push((b.nature.clone(), opp, b.p.0.clone()));
            }
            specs.push(TypeSpec { label: t.label.clone(), player: p, payoff_type: t.payoff.clone(), belief });
        }
        TypeStructure::new(self.form.num_players(), specs).map_err(|e| self.loc.invalid(name, e))
    }

    fn model(&mut self, name: &str, def: &ModelDef, ts: &Arc<TypeStructure>) -> Result<Vec<SubjectiveModel>, ScenarioError> {
        let mut out: Vec<Option<SubjectiveModel>> = vec![None; self.form.num_players()];
        for (p, entry) in &def.players {
            let pi = self.player(p)?;
            let d = self.hierarchy(&entry.hierarchy)?;
            if d.owner() != pi {
                return Err(self.loc.invalid(name, format!("hierarchy `{}` is not owned by {p}", entry.hierarchy)));
            }
            let t = ts.id(&entry.type_label).ok_or_else(|| self.loc.unresolved("type", &entry.type_label))?;
            out[pi] = Some(SubjectiveModel::new(d, ts.clone(), t).map_err(|e| self.loc.invalid(name, e))?);
        }
        out.into_iter()
            .enumerate()
            .map(|(p, m)| m.ok_or_else(|| self.loc.invalid(name, format!("no model for {}", self.form.player_name(p)))))
            .collect()
    }
}

fn check_command(k: usize, c: &Command, r: &Resolver, models: &BTreeMap<String, Vec<SubjectiveModel>>) -> Result<(), ScenarioError> {
    let ctx = format!("commands[{k}]");
    let model = |m: &str| if models.contains_key(m) { Ok(()) } else { Err(r.loc.unresolved("model", m)) };
    let concept = |c: &str| {
        rationalizer_core::solver::Concept::parse(c)
            .map(|_| ())
            .ok_or_else(|| r.loc.invalid(&ctx, format!("unknown concept `{c}` (expected efr, br, sefr or icr)")))
    };
    match c {
        Command::Solve { model: m, concept: c, .. } => {
            model(m)?;
            concept(c)
        }
        Command::Compare { model: m, concepts } => {
            model(m)?;
            concepts.iter().try_for_each(|c| concept(c))
        }
        Command::Distance { a, b } => {
            for x in [a, b] {
                match x {
                    Ref::Model(m) => model(m)?,
                    Ref::Structure(s) if !r.structures.contains_key(s) => return Err(r.loc.unresolved("structure", s)),
                    Ref::Structure(_) => {}
                }
            }
            if std::mem::discriminant(a) != std::mem::discriminant(b) {
                return Err(r.loc.invalid(&ctx, "distance compares two models or two structures"));
            }
            Ok(())
        }
        Command::Check { richness, hierarchies } => {
            for s in richness {
                if !r.structures.contains_key(s) {
                    return Err(r.loc.unresolved("structure", s));
                }
            }
            for h in hierarchies {
                if !r.hierarchies.contains_key(h) {
                    return Err(r.loc.unresolved("hierarchy", h));
                }
            }
            Ok(())
        }
        Command::Perturb { model: m, kind, target, concepts, param } => {
            model(m)?;
            concepts.iter().try_for_each(|c| concept(c))?;
            if *kind == PerturbKind::TieBreak && *param == 0 {
                return Err(r.loc.invalid(&ctx, "tie-break parameter must be at least 1"));
            }
            if *kind == PerturbKind::Selection {
                let t = target.as_ref().ok_or_else(|| r.loc.invalid(&ctx, "selection needs a `target`"))?;
                for p in 0..r.form.num_players() {
                    let name = r.form.player_name(p);
                    let s = t.get(name).ok_or_else(|| r.loc.invalid(&ctx, format!("target lacks {name}")))?;
                    if r.form.strategy_by_name(p, s).is_none() {
                        return Err(r.loc.unresolved("strategy", s));
                    }
                }
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------------------------
// Export

/// Writes a form back as a node tree.
pub fn export_form(form: &ExtensiveForm) -> FormDef {
    fn node(form: &ExtensiveForm, h: usize) -> NodeDef {
        match &form.node(h).kind {
            NodeKind::Terminal { label } => NodeDef { terminal: Some(label.clone()), moves: None, next: None },
            NodeKind::Decision { actions, children } => {
                let movers = form.node(h).active_players();
                let moves = movers.iter().map(|&p| (form.player_name(p).to_string(), actions[p].clone())).collect();
                let next = children
                    .iter()
                    .map(|(idx, c)| {
                        let key: Vec<&str> = idx.iter().zip(&movers).map(|(&k, &p)| actions[p][k].as_str()).collect();
                        (key.join("&"), node(form, *c))
                    })
                    .collect();
                NodeDef { terminal: None, moves: Some(moves), next: Some(next) }
            }
        }
    }
    FormDef { players: form.players().to_vec(), tree: node(form, 0) }
}

/// Writes a structure as an explicit table, one entry per terminal and state.
pub fn export_structure(form: &ExtensiveForm, s: &StandardPayoffStructure) -> StructureDef {
    let mut payoffs = Vec::new();
    for st in s.states() {
        let idx = s.state_index(&st);
        let mut when = BTreeMap::new();
        if s.nature().len() > 1 {
            when.insert("nature".to_string(), s.nature()[st.nature].clone());
        }
        for p in 0..s.num_players() {
            if s.types(p).len() > 1 {
                when.insert(form.player_name(p).to_string(), s.types(p)[st.types[p]].clone());
            }
        }
        for (z, &node) in form.terminals().iter().enumerate() {
            let u = (0..s.num_players()).map(|p| (form.player_name(p).to_string(), Q(s.utility(p, z, idx).clone()))).collect();
            payoffs.push(PayoffEntry { terminal: form.terminal_label(node).to_string(), when: when.clone(), u });
        }
    }
    let mut derived_from: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for p in 0..s.num_players() {
        for (t, label) in s.types(p).iter().enumerate() {
            let b = s.base_type(p, t);
            if b != t {
                derived_from.entry(form.player_name(p).to_string()).or_default().insert(label.clone(), s.types(p)[b].clone());
            }
        }
    }
    StructureDef {
        nature: Some(s.nature().to_vec()),
        types: Some((0..s.num_players()).map(|p| (form.player_name(p).to_string(), s.types(p).to_vec())).collect()),
        payoffs: Some(payoffs),
        derived_from,
        generate: None,
    }
}

/// A self-contained scenario holding `models` under the name `model`, with the given commands.
pub fn export_models(form: &ExtensiveForm, models: &[SubjectiveModel], model: &str, commands: Vec<Command>) -> Scenario {
    let mut structures: BTreeMap<String, StructureDef> = BTreeMap::new();
    let mut structure_names: BTreeMap<u64, String> = BTreeMap::new();
    let mut hierarchies: BTreeMap<String, HierarchyDef> = BTreeMap::new();
    let mut hierarchy_names: BTreeMap<(PlayerId, u64), String> = BTreeMap::new();

    fn structure_name(
        form: &ExtensiveForm,
        s: &StandardPayoffStructure,
        structures: &mut BTreeMap<String, StructureDef>,
        names: &mut BTreeMap<u64, String>,
    ) -> String {
        if let Some(n) = names.get(&s.digest()) {
            return n.clone();
        }
        let mut name = s.name().to_string();
        let mut k = 1;
        while structures.contains_key(&name) {
            k += 1;
            name = format!("{}#{k}", s.name());
        }
        structures.insert(name.clone(), export_structure(form, s));
        names.insert(s.digest(), name.clone());
        name
    }

    #[allow(clippy::too_many_arguments)]
    fn hierarchy_name(
        form: &ExtensiveForm,
        d: &Arc<SubjectiveStructure>,
        structures: &mut BTreeMap<String, StructureDef>,
        snames: &mut BTreeMap<u64, String>,
        hierarchies: &mut BTreeMap<String, HierarchyDef>,
        hnames: &mut BTreeMap<(PlayerId, u64), String>,
    ) -> String {
        if let Some(n) = hnames.get(&(d.owner(), d.digest())) {
            return n.clone();
        }
        let owner = form.player_name(d.owner()).to_string();
        let l1 = structure_name(form, d.level1(), structures, snames);
        let name = format!("d{}", hierarchies.len());
        hnames.insert((d.owner(), d.digest()), name.clone());
        hierarchies.insert(name.clone(), HierarchyDef { owner: owner.clone(), common_knowledge: None, level1: None, ascribe: None, graft: None });
        let def = if d.is_common_knowledge() {
            HierarchyDef { owner, common_knowledge: Some(l1), level1: None, ascribe: None, graft: None }
        } else {
            let ascribe = d
                .opponents()
                .into_iter()
                .map(|j| {
                    let sub = d.ascribed(j);
                    (form.player_name(j).to_string(), hierarchy_name(form, &sub, structures, snames, hierarchies, hnames))
                })
                .collect();
            HierarchyDef { owner, common_knowledge: None, level1: Some(l1), ascribe: Some(ascribe), graft: None }
        };
        hierarchies.insert(name.clone(), def);
        name
    }

    let types = &models[0].types;
    let ts_def = TypeStructureDef {
        types: types
            .specs()
            .into_iter()
            .map(|t| {
                let opp: Vec<PlayerId> = (0..form.num_players()).filter(|&j| j != t.player).collect();
                TypeDefinition {
                    label: t.label.clone(),
                    player: form.player_name(t.player).to_string(),
                    payoff: t.payoff_type.clone(),
                    belief: t
                        .belief
                        .iter()
                        .map(|(n, o, p)| BeliefEntry {
                            nature: n.clone(),
                            opponents: opp.iter().zip(o).map(|(&j, l)| (form.player_name(j).to_string(), l.clone())).collect(),
                            p: Q(p.clone()),
                        })
                        .collect(),
                }
            })
            .collect(),
    };
    let mut players = BTreeMap::new();
    for m in models {
        let h = hierarchy_name(form, &m.structure, &mut structures, &mut structure_names, &mut hierarchies, &mut hierarchy_names);
        players.insert(
            form.player_name(m.player()).to_string(),
            ModelEntry { hierarchy: h, type_label: m.root_label().to_string() },
        );
    }
    let mut type_structures = BTreeMap::new();
    type_structures.insert("types".to_string(), ts_def);
    let mut model_defs = BTreeMap::new();
    model_defs.insert(model.to_string(), ModelDef { type_structure: "types".into(), players });
    Scenario {
        name: Some(model.to_string()),
        form: export_form(form),
        structures,
        hierarchies,
        type_structures,
        models: model_defs,
        commands,
    }
}

/// Payoff state description used in reports.
pub fn describe_state(form: &ExtensiveForm, s: &StandardPayoffStructure, st: &PayoffState) -> String {
    let mut parts = vec![s.nature()[st.nature].clone()];
    for p in 0..form.num_players() {
        parts.push(format!("{}={}", form.player_name(p), s.types(p)[st.types[p]]));
    }
    parts.join(",")
}
