//! Runtime-dependency closure, install ordering and orphan computation.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::Serialize;
use thiserror::Error;

use crate::atom::{DependencyAtom, PackageId, UseFlagSet};
use crate::db::PackageMetadata;
use crate::depexpr::parse_dep_string;
use crate::version::Version;

pub type DbSnapshot = BTreeMap<PackageId, PackageMetadata>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown package {0}")]
    MissingPackage(PackageId),
    #[error("no version of {} matches {atom}; available: {}", atom.package(), render_versions(available))]
    NoMatchingVersion { atom: DependencyAtom, available: Vec<Version> },
    #[error("conflicting requirements on {package}: {}", atoms.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    ConflictingAtoms { package: PackageId, atoms: Vec<DependencyAtom> },
    #[error("bad dependency data for {package}-{version}: {message}")]
    BadMetadata { package: PackageId, version: String, message: String },
    #[error("{0} is not installed")]
    NotInstalled(PackageId),
    #[error("{package} is still required by {}", required_by.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    StillRequired { package: PackageId, required_by: Vec<PackageId> },
}

fn render_versions(vs: &[Version]) -> String {
    if vs.is_empty() {
        return "none".into();
    }
    vs.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanStep {
    pub package: PackageId,
    #[serde(serialize_with = "serialize_display")]
    pub version: Version,
    /// Packages this step's evaluated runtime dependencies resolved to.
    pub dependencies: Vec<PackageId>,
}

fn serialize_display<S: serde::Serializer, T: std::fmt::Display>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InstallPlan {
    pub steps: Vec<PlanStep>,
    pub skipped_installed: BTreeSet<PackageId>,
    /// Strongly connected groups whose internal order was chosen by name.
    pub cycles: Vec<Vec<PackageId>>,
}

impl InstallPlan {
    pub fn position(&self, pkg: &PackageId) -> Option<usize> {
        self.steps.iter().position(|s| &s.package == pkg)
    }
}

/// Evaluated runtime dependencies of one version under `flags`.
pub fn runtime_dependencies(
    meta: &PackageMetadata,
    version: &Version,
    flags: &UseFlagSet,
) -> Result<Vec<DependencyAtom>, ResolveError> {
    let rendered = version.to_string();
    let bad = |message: String| ResolveError::BadMetadata { package: meta.name.clone(), version: rendered.clone(), message };
    let entry = meta.versions.get(&rendered).ok_or_else(|| bad("version not listed".into()))?;
    let expr = parse_dep_string(&entry.dependencies.join(" ")).map_err(|e| bad(e.to_string()))?;
    Ok(expr.eval(flags).into_iter().filter(|a| a.package() != &meta.name).collect())
}

enum Choice {
    Install { version: Version, deps: Vec<PackageId> },
    Installed,
}

struct Pass<'a> {
    db: &'a DbSnapshot,
    flags: &'a UseFlagSet,
    seed: &'a BTreeMap<PackageId, Vec<DependencyAtom>>,
    seen_atoms: BTreeMap<PackageId, Vec<DependencyAtom>>,
    choices: BTreeMap<PackageId, Choice>,
}

impl Pass<'_> {
    fn constraints(&self, pkg: &PackageId) -> Vec<DependencyAtom> {
        let mut all = self.seed.get(pkg).cloned().unwrap_or_default();
        for a in self.seen_atoms.get(pkg).into_iter().flatten() {
            if !all.contains(a) {
                all.push(a.clone());
            }
        }
        all
    }

    fn visit(&mut self, atom: &DependencyAtom) -> Result<(), ResolveError> {
        let pkg = atom.package().clone();
        let meta = self.db.get(&pkg).ok_or_else(|| ResolveError::MissingPackage(pkg.clone()))?;
        let seen = self.seen_atoms.entry(pkg.clone()).or_default();
        if !seen.contains(atom) {
            seen.push(atom.clone());
        }
        if self.choices.contains_key(&pkg) {
            return Ok(());
        }

        let atoms = self.constraints(&pkg);
        if let Some(installed) = meta.installed_version() {
            if atoms.iter().all(|a| a.matches(&installed)) {
                self.choices.insert(pkg, Choice::Installed);
                return Ok(());
            }
        }

        let available = meta.known_versions();
        let best = available.iter().filter(|v| atoms.iter().all(|a| a.matches(v))).max().cloned();
        let version = match best {
            Some(v) => v,
            None => {
                if let Some(a) = atoms.iter().find(|a| !available.iter().any(|v| a.matches(v))) {
                    return Err(ResolveError::NoMatchingVersion { atom: a.clone(), available });
                }
                return Err(ResolveError::ConflictingAtoms { package: pkg, atoms });
            }
        };

        let dep_atoms = runtime_dependencies(meta, &version, self.flags)?;
        let mut deps: Vec<PackageId> = Vec::new();
        for d in &dep_atoms {
            if !deps.contains(d.package()) {
                deps.push(d.package().clone());
            }
        }
        // Insert before recursing so cycles terminate.
        self.choices.insert(pkg, Choice::Install { version, deps });
        for d in &dep_atoms {
            self.visit(d)?;
        }
        Ok(())
    }
}

/// Depth-first expansion of runtime dependencies from `targets`.
///
/// Every atom met on a package constrains its version; the chosen version is
/// the highest satisfying all of them. Passes repeat until the set of atoms
/// seen is stable, so constraints discovered late still apply.
pub fn resolve_runtime_closure(
    targets: &[DependencyAtom],
    db: &DbSnapshot,
    flags: &UseFlagSet,
) -> Result<InstallPlan, ResolveError> {
    // A stale pass always saw an atom missing from the seed, so the seed grows
    // on every iteration and is bounded by the finite set of atoms.
    let mut seed: BTreeMap<PackageId, Vec<DependencyAtom>> = BTreeMap::new();
    loop {
        let mut pass = Pass { db, flags, seed: &seed, seen_atoms: BTreeMap::new(), choices: BTreeMap::new() };
        for t in targets {
            pass.visit(t)?;
        }

        // A later atom may have ruled out a choice made before it was seen.
        let stale = pass.choices.iter().any(|(pkg, choice)| {
            let atoms = pass.constraints(pkg);
            match choice {
                Choice::Install { version, .. } => !atoms.iter().all(|a| a.matches(version)),
                Choice::Installed => {
                    let v = db[pkg].installed_version().expect("installed choice");
                    !atoms.iter().all(|a| a.matches(&v))
                }
            }
        });
        if !stale {
            return Ok(build_plan(pass.choices));
        }
        for (pkg, atoms) in pass.seen_atoms {
            let entry = seed.entry(pkg).or_default();
            for a in atoms {
                if !entry.contains(&a) {
                    entry.push(a);
                }
            }
        }
    }
}

fn build_plan(choices: BTreeMap<PackageId, Choice>) -> InstallPlan {
    let mut plan = InstallPlan::default();
    let mut versions = BTreeMap::new();
    let mut dep_lists = BTreeMap::new();
    for (pkg, choice) in choices {
        match choice {
            Choice::Installed => {
                plan.skipped_installed.insert(pkg);
            }
            Choice::Install { version, deps } => {
                versions.insert(pkg.clone(), version);
                dep_lists.insert(pkg, deps);
            }
        }
    }

    let nodes: BTreeSet<PackageId> = versions.keys().cloned().collect();
    let mut before: BTreeMap<PackageId, BTreeSet<PackageId>> = BTreeMap::new();
    for (pkg, deps) in &dep_lists {
        for d in deps.iter().filter(|d| nodes.contains(*d)) {
            before.entry(d.clone()).or_default().insert(pkg.clone());
        }
    }
    let (order, cycles) = ordered(&nodes, &before);
    plan.cycles = cycles;
    plan.steps = order
        .into_iter()
        .map(|pkg| PlanStep {
            version: versions.remove(&pkg).expect("node has a version"),
            dependencies: dep_lists.remove(&pkg).unwrap_or_default(),
            package: pkg,
        })
        .collect();
    plan
}

/// Orders `nodes` so that for every edge `a -> b` in `before`, `a` comes first.
/// Cycles are collapsed into strongly connected components; ties and members
/// of a component are ordered by their canonical name.
pub fn ordered(
    nodes: &BTreeSet<PackageId>,
    before: &BTreeMap<PackageId, BTreeSet<PackageId>>,
) -> (Vec<PackageId>, Vec<Vec<PackageId>>) {
    let index: BTreeMap<&PackageId, usize> = nodes.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let names: Vec<&PackageId> = nodes.iter().collect();
    let adj: Vec<Vec<usize>> = names
        .iter()
        .map(|p| before.get(*p).into_iter().flatten().filter_map(|q| index.get(q).copied()).collect())
        .collect();

    let comps = tarjan(&adj);
    let mut comp_of = vec![0; names.len()];
    for (c, members) in comps.iter().enumerate() {
        for &m in members {
            comp_of[m] = c;
        }
    }
    let mut indegree = vec![0usize; comps.len()];
    let mut comp_edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); comps.len()];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            let (cu, cv) = (comp_of[u], comp_of[v]);
            if cu != cv && comp_edges[cu].insert(cv) {
                indegree[cv] += 1;
            }
        }
    }

    // Node indices follow name order, so the smallest member index is the smallest name.
    let key = |c: usize| comps[c].iter().copied().min().expect("non-empty component");
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> =
        (0..comps.len()).filter(|&c| indegree[c] == 0).map(|c| Reverse((key(c), c))).collect();
    let mut order = Vec::with_capacity(names.len());
    let mut cycles = Vec::new();
    while let Some(Reverse((_, c))) = ready.pop() {
        let mut members = comps[c].clone();
        members.sort_unstable();
        if members.len() > 1 {
            cycles.push(members.iter().map(|&m| names[m].clone()).collect());
        }
        order.extend(members.iter().map(|&m| names[m].clone()));
        for &next in &comp_edges[c] {
            indegree[next] -= 1;
            if indegree[next] == 0 {
                ready.push(Reverse((key(next), next)));
            }
        }
    }
    (order, cycles)
}

fn tarjan(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    fn strong(s: &mut State<'_>, v: usize) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for i in 0..s.adj[v].len() {
            let w = s.adj[v][i];
            match s.index[w] {
                None => {
                    strong(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().expect("stack holds v");
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            s.out.push(comp);
        }
    }
    let n = adj.len();
    let mut s = State { adj, index: vec![None; n], low: vec![0; n], on_stack: vec![false; n], stack: Vec::new(), next: 0, out: Vec::new() };
    for v in 0..n {
        if s.index[v].is_none() {
            strong(&mut s, v);
        }
    }
    s.out
}

/// Packages to remove along with `roots`: dependency-installed packages whose
/// every dependent is being removed. Dependents come before their dependencies.
pub fn compute_orphans(db: &DbSnapshot, roots: &BTreeSet<PackageId>) -> Result<Vec<PackageId>, ResolveError> {
    for r in roots {
        if db.get(r).and_then(|m| m.installed.as_ref()).is_none() {
            return Err(ResolveError::NotInstalled(r.clone()));
        }
    }

    let mut removal = roots.clone();
    loop {
        let added: Vec<PackageId> = db
            .values()
            .filter(|m| m.installed.is_some() && !m.explicit && !removal.contains(&m.name))
            .filter(|m| !m.required_by.is_empty() && m.required_by.iter().all(|d| removal.contains(d)))
            .map(|m| m.name.clone())
            .collect();
        if added.is_empty() {
            break;
        }
        removal.extend(added);
    }

    for r in roots {
        let outside: Vec<PackageId> = db[r].required_by.iter().filter(|d| !removal.contains(*d)).cloned().collect();
        if !outside.is_empty() {
            return Err(ResolveError::StillRequired { package: r.clone(), required_by: outside });
        }
    }

    // A dependent must be removed before what it requires.
    let mut before: BTreeMap<PackageId, BTreeSet<PackageId>> = BTreeMap::new();
    for pkg in &removal {
        for dependent in db[pkg].required_by.iter().filter(|d| removal.contains(*d)) {
            before.entry(dependent.clone()).or_default().insert(pkg.clone());
        }
    }
    Ok(ordered(&removal, &before).0)
}
