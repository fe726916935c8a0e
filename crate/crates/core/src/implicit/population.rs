use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::graph::{active_slots, flip, uniform_other};
use crate::params::{eval_predicate, AttrTest, AttrValue, Attributes};

use super::od::OdMatrixSet;
use super::tessellation::Tessellation;

pub const HOME_CELL: &str = "home_cell";
pub const HOUSEHOLD: &str = "household";

/// An agent as read from a population table, before indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub attributes: Attributes,
    /// Level-0 tessellation cell; also the `home_cell` context.
    pub home_cell: String,
    /// `(kind, context id)` memberships besides the home cell.
    pub contexts: Vec<(String, String)>,
    /// Explicit activation scores per context kind; missing kinds fall
    /// back to the activity rules.
    pub activity: BTreeMap<String, f64>,
}

/// Activation scores per context kind for agents matching `when`.
/// An empty predicate is the default profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityRule {
    #[serde(default)]
    pub when: Vec<AttrTest>,
    pub scores: BTreeMap<String, f64>,
    #[serde(default)]
    pub priority: i32,
}

/// Resolves the activity profile for `attrs`: the highest-priority matching
/// non-default rule (declaration order on ties), else the default rule.
pub fn resolve_activity<'a>(
    attrs: &Attributes,
    rules: &'a [ActivityRule],
) -> Result<Option<&'a ActivityRule>, String> {
    let mut ordered: Vec<(usize, &ActivityRule)> =
        rules.iter().enumerate().filter(|(_, r)| !r.when.is_empty()).collect();
    ordered.sort_by(|(ia, a), (ib, b)| b.priority.cmp(&a.priority).then(ia.cmp(ib)));
    for (_, rule) in ordered {
        if eval_predicate(&rule.when, attrs)? {
            return Ok(Some(rule));
        }
    }
    Ok(rules.iter().find(|r| r.when.is_empty()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImplicitOptions {
    pub activity_rules: Vec<ActivityRule>,
    /// Context kinds locked-down agents keep sampling from. Defaults to
    /// `household` when present, otherwise `home_cell`.
    pub lockdown_contexts: Option<Vec<String>>,
    /// Tessellation level whose OD matrix drives long-range moves.
    pub od_level: usize,
}

/// Reads a population CSV and its geography.
///
/// Columns: `agent_id`, `home_cell`, any number of `<kind>_id` context
/// columns, optional `activity_<kind>` scores; everything else becomes a
/// stratification attribute. Empty context cells mean no membership.
pub fn load_population(
    population: &Path,
    tessellation: &Path,
    od_files: &[impl AsRef<Path>],
) -> Result<(Vec<Agent>, Tessellation, OdMatrixSet), DataError> {
    let tess = Tessellation::load(tessellation)?;
    let od = OdMatrixSet::load(od_files, &tess)?;
    let agents = read_agents(population)?;
    Ok((agents, tess, od))
}

enum Column {
    Id,
    Home,
    Context(String),
    Activity(String),
    Attribute(String),
}

pub fn read_agents(path: &Path) -> Result<Vec<Agent>, DataError> {
    let file = path.display().to_string();
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let columns: Vec<Column> = headers
        .iter()
        .map(|h| {
            let h = h.trim();
            if h == "agent_id" {
                Column::Id
            } else if h == HOME_CELL {
                Column::Home
            } else if let Some(kind) = h.strip_prefix("activity_") {
                Column::Activity(kind.to_string())
            } else if let Some(kind) = h.strip_suffix("_id") {
                Column::Context(kind.to_string())
            } else {
                Column::Attribute(h.to_string())
            }
        })
        .collect();
    let missing = if !columns.iter().any(|c| matches!(c, Column::Id)) {
        Some("agent_id")
    } else if !columns.iter().any(|c| matches!(c, Column::Home)) {
        Some(HOME_CELL)
    } else {
        None
    };
    if let Some(name) = missing {
        return Err(DataError::Schema {
            file,
            line: 1,
            message: format!("missing column `{name}`"),
        });
    }

    let mut agents = Vec::new();
    let mut seen = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let schema = |message: String| DataError::Schema {
            file: file.clone(),
            line,
            message,
        };
        let mut agent = Agent {
            id: String::new(),
            attributes: Attributes::new(),
            home_cell: String::new(),
            contexts: Vec::new(),
            activity: BTreeMap::new(),
        };
        for (col, raw) in columns.iter().zip(record.iter()) {
            let raw = raw.trim();
            match col {
                Column::Id => agent.id = raw.to_string(),
                Column::Home => {
                    agent.home_cell = raw.to_string();
                    agent
                        .attributes
                        .insert(HOME_CELL.into(), AttrValue::Text(raw.to_string()));
                }
                Column::Context(kind) if !raw.is_empty() => {
                    agent.contexts.push((kind.clone(), raw.to_string()))
                }
                Column::Activity(kind) if !raw.is_empty() => {
                    let a: f64 = raw
                        .parse()
                        .map_err(|_| schema(format!("bad activity_{kind} `{raw}`")))?;
                    if !(0.0..=1.0).contains(&a) {
                        return Err(schema(format!("activity_{kind} = {a} outside [0, 1]")));
                    }
                    agent.activity.insert(kind.clone(), a);
                }
                Column::Attribute(name) if !raw.is_empty() => {
                    agent.attributes.insert(name.clone(), AttrValue::parse(raw));
                }
                _ => {}
            }
        }
        if agent.id.is_empty() {
            return Err(schema("empty agent_id".into()));
        }
        if agent.home_cell.is_empty() {
            return Err(schema(format!("agent {} has no home_cell", agent.id)));
        }
        if seen.insert(agent.id.clone(), line).is_some() {
            return Err(schema(format!("duplicate agent_id `{}`", agent.id)));
        }
        agents.push(agent);
    }
    if agents.is_empty() {
        return Err(DataError::NoAgents);
    }
    Ok(agents)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Membership {
    context: u32,
    /// Position of the agent inside the context's member list.
    pos: u32,
    kind: u16,
    activity: f64,
}

/// Compressed list of lists.
#[derive(Debug, Clone, Default, PartialEq)]
struct Csr {
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl Csr {
    fn from_groups(groups: usize, keys: &[u32]) -> (Self, Vec<u32>) {
        let mut offsets = vec![0u32; groups + 1];
        for &k in keys {
            offsets[k as usize + 1] += 1;
        }
        for g in 0..groups {
            offsets[g + 1] += offsets[g];
        }
        let mut cursor = offsets.clone();
        let mut items = vec![0u32; keys.len()];
        let mut pos = vec![0u32; keys.len()];
        for (i, &k) in keys.iter().enumerate() {
            let slot = cursor[k as usize];
            items[slot as usize] = i as u32;
            pos[i] = slot - offsets[k as usize];
            cursor[k as usize] += 1;
        }
        (Self { offsets, items }, pos)
    }

    #[inline]
    fn get(&self, g: u32) -> &[u32] {
        &self.items[self.offsets[g as usize] as usize..self.offsets[g as usize + 1] as usize]
    }

    fn bytes(&self) -> usize {
        (self.offsets.len() + self.items.len()) * 4
    }
}

/// Indexed population for implicit contact sampling.
#[derive(Debug, Clone)]
pub struct ImplicitWorld {
    ids: Vec<String>,
    attributes: Vec<Attributes>,
    kinds: Vec<String>,
    lockdown_kind: Vec<bool>,
    agent_offsets: Vec<u32>,
    memberships: Vec<Membership>,
    context_kind: Vec<u16>,
    context_names: Vec<String>,
    contexts: Csr,
    home: Vec<u32>,
    /// Agents per region, one list per tessellation level.
    regions: Vec<Csr>,
    region_pos: Vec<Vec<u32>>,
    tess: Tessellation,
    od: OdMatrixSet,
    od_level: usize,
}

/// Partners drawn for one agent in one iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImplicitSample {
    pub partners: Vec<u32>,
    /// Long-range slots with no reachable partner.
    pub dropped: usize,
}

impl ImplicitWorld {
    pub fn build(
        agents: Vec<Agent>,
        tess: Tessellation,
        od: OdMatrixSet,
        options: &ImplicitOptions,
    ) -> Result<Self, DataError> {
        if agents.is_empty() {
            return Err(DataError::NoAgents);
        }
        if agents.len() >= u32::MAX as usize {
            return Err(DataError::Population("too many agents".into()));
        }
        if !od.is_empty() && options.od_level >= od.level_count() {
            return Err(DataError::Od {
                level: options.od_level,
                message: format!("no OD matrix for level {}", options.od_level),
            });
        }

        let mut kinds = vec![HOME_CELL.to_string()];
        let mut extra: Vec<&str> = agents
            .iter()
            .flat_map(|a| a.contexts.iter().map(|(k, _)| k.as_str()))
            .collect();
        extra.sort_unstable();
        extra.dedup();
        kinds.extend(extra.into_iter().filter(|k| *k != HOME_CELL).map(String::from));
        let kind_index: HashMap<&str, u16> =
            kinds.iter().enumerate().map(|(i, k)| (k.as_str(), i as u16)).collect();

        let lockdown_names = match &options.lockdown_contexts {
            Some(list) => list.clone(),
            None if kind_index.contains_key(HOUSEHOLD) => vec![HOUSEHOLD.into()],
            None => vec![HOME_CELL.into()],
        };
        let lockdown_kind = kinds.iter().map(|k| lockdown_names.contains(k)).collect();

        let mut home = Vec::with_capacity(agents.len());
        let mut context_ids: HashMap<(u16, String), u32> = HashMap::new();
        let mut context_kind = Vec::new();
        let mut context_names = Vec::new();
        let mut agent_offsets = Vec::with_capacity(agents.len() + 1);
        let mut raw: Vec<(u32, u16, f64)> = Vec::new();
        agent_offsets.push(0u32);
        for agent in &agents {
            let cell = tess.region_index(0, &agent.home_cell).ok_or_else(|| {
                DataError::DanglingReference {
                    agent: agent.id.clone(),
                    context: HOME_CELL.into(),
                    id: agent.home_cell.clone(),
                }
            })?;
            home.push(cell);
            let profile = resolve_activity(&agent.attributes, &options.activity_rules).map_err(
                |attr| {
                    DataError::Population(format!(
                        "agent {}: attribute `{attr}` required by an activity rule is missing",
                        agent.id
                    ))
                },
            )?;
            let score = |kind: &str| -> Result<f64, DataError> {
                let a = agent
                    .activity
                    .get(kind)
                    .or_else(|| profile.and_then(|p| p.scores.get(kind)))
                    .copied()
                    .unwrap_or(0.0);
                if (0.0..=1.0).contains(&a) {
                    Ok(a)
                } else {
                    Err(DataError::Population(format!(
                        "agent {}: activity for `{kind}` = {a} outside [0, 1]",
                        agent.id
                    )))
                }
            };
            let memberships = std::iter::once((HOME_CELL, agent.home_cell.as_str()))
                .chain(agent.contexts.iter().map(|(k, c)| (k.as_str(), c.as_str())));
            for (kind, name) in memberships {
                let k = kind_index[kind];
                let next = context_kind.len() as u32;
                let ctx = *context_ids.entry((k, name.to_string())).or_insert_with(|| {
                    context_kind.push(k);
                    context_names.push(name.to_string());
                    next
                });
                raw.push((ctx, k, score(kind)?));
            }
            agent_offsets.push(raw.len() as u32);
        }

        let ctx_keys: Vec<u32> = raw.iter().map(|r| r.0).collect();
        let (mut contexts, pos) = Csr::from_groups(context_kind.len(), &ctx_keys);
        // Items are membership indices; map them to agents.
        let owner: Vec<u32> = (0..agents.len())
            .flat_map(|a| {
                let span = agent_offsets[a + 1] - agent_offsets[a];
                std::iter::repeat(a as u32).take(span as usize)
            })
            .collect();
        for item in &mut contexts.items {
            *item = owner[*item as usize];
        }
        let memberships = raw
            .iter()
            .zip(pos)
            .map(|(&(context, kind, activity), pos)| Membership {
                context,
                pos,
                kind,
                activity,
            })
            .collect();

        let mut regions = Vec::new();
        let mut region_pos = Vec::new();
        for level in 0..tess.level_count() {
            let keys: Vec<u32> = home.iter().map(|&c| tess.ancestor(0, c, level)).collect();
            let (csr, pos) = Csr::from_groups(tess.region_count(level), &keys);
            regions.push(csr);
            region_pos.push(pos);
        }

        let (ids, attributes) = agents.into_iter().map(|a| (a.id, a.attributes)).unzip();
        Ok(Self {
            ids,
            attributes,
            kinds,
            lockdown_kind,
            agent_offsets,
            memberships,
            context_kind,
            context_names,
            contexts,
            home,
            regions,
            region_pos,
            tess,
            od,
            od_level: options.od_level,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.ids.len()
    }

    pub fn agent_id(&self, agent: usize) -> &str {
        &self.ids[agent]
    }

    pub fn attributes(&self, agent: usize) -> &Attributes {
        &self.attributes[agent]
    }

    pub fn tessellation(&self) -> &Tessellation {
        &self.tess
    }

    pub fn home_cell(&self, agent: usize) -> u32 {
        self.home[agent]
    }

    pub fn kinds(&self) -> &[String] {
        &self.kinds
    }

    pub fn context_count(&self) -> usize {
        self.context_kind.len()
    }

    /// Members of the context `name` of kind `kind`, as agent indices.
    pub fn context_members(&self, kind: &str, name: &str) -> Option<&[u32]> {
        let k = self.kinds.iter().position(|x| x == kind)? as u16;
        let ctx = (0..self.context_kind.len())
            .find(|&c| self.context_kind[c] == k && self.context_names[c] == name)?;
        Some(self.contexts.get(ctx as u32))
    }

    /// Every context keyed by `(kind, id)` with member agent ids.
    pub fn context_index(&self) -> BTreeMap<(String, String), Vec<String>> {
        (0..self.context_kind.len())
            .map(|c| {
                let key = (
                    self.kinds[self.context_kind[c] as usize].clone(),
                    self.context_names[c].clone(),
                );
                let members = self
                    .contexts
                    .get(c as u32)
                    .iter()
                    .map(|&a| self.ids[a as usize].clone())
                    .collect();
                (key, members)
            })
            .collect()
    }

    /// `(kind, activation)` for each membership of `agent`.
    pub fn activity_profile(&self, agent: usize) -> Vec<(&str, f64)> {
        self.memberships_of(agent)
            .iter()
            .map(|m| (self.kinds[m.kind as usize].as_str(), m.activity))
            .collect()
    }

    /// Mean number of partners drawn per iteration with `p = 0`.
    pub fn expected_contacts(&self, agent: usize) -> f64 {
        self.memberships_of(agent)
            .iter()
            .map(|m| m.activity * (self.contexts.get(m.context).len() - 1) as f64)
            .sum()
    }

    fn memberships_of(&self, agent: usize) -> &[Membership] {
        &self.memberships
            [self.agent_offsets[agent] as usize..self.agent_offsets[agent + 1] as usize]
    }

    /// Uniform member of `region` at `level` other than `agent`.
    fn region_partner<R: Rng + ?Sized>(
        &self,
        agent: usize,
        level: usize,
        region: u32,
        rng: &mut R,
    ) -> Option<u32> {
        let members = self.regions[level].get(region);
        let own = self.tess.ancestor(0, self.home[agent], level) == region;
        if own {
            (members.len() >= 2).then(|| {
                members[uniform_other(members.len(), self.region_pos[level][agent] as usize, rng)]
            })
        } else {
            (!members.is_empty()).then(|| members[rng.random_range(0..members.len())])
        }
    }

    /// Partner for one long-range slot, or `None` if nobody is reachable.
    fn longrange_partner<R: Rng + ?Sized>(
        &self,
        agent: usize,
        cap: Option<usize>,
        rng: &mut R,
    ) -> Option<u32> {
        let top = self.tess.level_count() - 1;
        let cap = cap.map(|c| c.min(top));
        let home = self.home[agent];
        if self.od.is_empty() {
            return match cap {
                Some(c) => self.region_partner(agent, c, self.tess.ancestor(0, home, c), rng),
                None => {
                    let n = self.ids.len();
                    (n >= 2).then(|| uniform_other(n, agent, rng) as u32)
                }
            };
        }
        let level = self.od_level;
        match cap {
            Some(c) if c < level => {
                self.region_partner(agent, c, self.tess.ancestor(0, home, c), rng)
            }
            _ => {
                let origin = self.tess.ancestor(0, home, level);
                let dest = match cap {
                    Some(c) => {
                        let fence = self.tess.ancestor(level, origin, c);
                        self.od.level(level).sample_filtered(origin, rng, |d| {
                            self.tess.ancestor(level, d, c) == fence
                        })?
                    }
                    None => self.od.level(level).sample_filtered(origin, rng, |_| true)?,
                };
                self.region_partner(agent, level, dest, rng)
            }
        }
    }

    /// Draws one iteration of contacts for `agent` into `out` and returns
    /// the number of dropped long-range slots.
    ///
    /// Each context contributes `Binomial(|context| - 1, a)` slots; a slot is
    /// long-range with probability `p`, otherwise a uniform co-member.
    /// Locked agents only use lockdown contexts.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        agent: usize,
        p: f64,
        cap: Option<usize>,
        locked: bool,
        rng: &mut R,
        out: &mut Vec<u32>,
    ) -> usize {
        let mut dropped = 0;
        for m in self.memberships_of(agent) {
            if locked && !self.lockdown_kind[m.kind as usize] {
                continue;
            }
            let members = self.contexts.get(m.context);
            let slots = active_slots(members.len() - 1, m.activity, rng);
            for _ in 0..slots {
                if flip(p, rng) {
                    match self.longrange_partner(agent, cap, rng) {
                        Some(partner) => out.push(partner),
                        None => dropped += 1,
                    }
                } else {
                    out.push(members[uniform_other(members.len(), m.pos as usize, rng)]);
                }
            }
        }
        dropped
    }

    pub fn memory_bytes(&self) -> usize {
        let strings = |v: &[String]| v.iter().map(|s| s.len() + 24).sum::<usize>();
        let attrs: usize = self
            .attributes
            .iter()
            .map(|a| {
                a.iter()
                    .map(|(k, v)| {
                        k.len()
                            + 64
                            + match v {
                                AttrValue::Text(s) => s.len(),
                                AttrValue::Num(_) => 0,
                            }
                    })
                    .sum::<usize>()
                    + 24
            })
            .sum();
        strings(&self.ids)
            + attrs
            + self.agent_offsets.len() * 4
            + self.memberships.len() * std::mem::size_of::<Membership>()
            + self.context_kind.len() * 2
            + strings(&self.context_names)
            + self.contexts.bytes()
            + self.home.len() * 4
            + self.regions.iter().map(Csr::bytes).sum::<usize>()
            + self.region_pos.iter().map(|v| v.len() * 4).sum::<usize>()
            + self.tess.memory_bytes()
            + self.od.memory_bytes()
    }
}

/// One iteration of implicit contacts for a free agent.
pub fn sample_implicit_contacts<R: Rng + ?Sized>(
    agent: usize,
    world: &ImplicitWorld,
    p: f64,
    mobility_level_cap: Option<usize>,
    rng: &mut R,
) -> ImplicitSample {
    let mut partners = Vec::new();
    let dropped = world.sample_into(agent, p, mobility_level_cap, false, rng, &mut partners);
    ImplicitSample { partners, dropped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit::od::OdMatrix;
    use crate::params::Comparator;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(id: &str, cell: &str, contexts: &[(&str, &str)]) -> Agent {
        Agent {
            id: id.into(),
            attributes: Attributes::new(),
            home_cell: cell.into(),
            contexts: contexts.iter().map(|(k, c)| (k.to_string(), c.to_string())).collect(),
            activity: BTreeMap::new(),
        }
    }

    fn flat(cells: &[&str]) -> Tessellation {
        Tessellation::flat(cells.iter().copied())
    }

    #[test]
    fn context_index() {
        let agents = vec![
            agent("a1", "c1", &[("workplace", "w1")]),
            agent("a2", "c1", &[]),
            agent("a3", "c1", &[]),
        ];
        let w = ImplicitWorld::build(agents, flat(&["c1"]), OdMatrixSet::default(), &Default::default())
            .unwrap();
        let index = w.context_index();
        assert_eq!(index[&("home_cell".into(), "c1".into())], vec!["a1", "a2", "a3"]);
        assert_eq!(index[&("workplace".into(), "w1".into())], vec!["a1"]);
        assert_eq!(index.len(), 2);
    }

    #[test]
    fn dangling_home_cell() {
        let err = ImplicitWorld::build(
            vec![agent("a1", "zz", &[])],
            flat(&["c1"]),
            OdMatrixSet::default(),
            &Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DataError::DanglingReference { ref id, .. } if id == "zz"));
    }

    #[test]
    fn expected_contacts_of_a_student() {
        let mut agents: Vec<Agent> = (0..31)
            .map(|i| agent(&format!("s{i}"), if i < 21 { "c1" } else { "c2" }, &[("school", "k")]))
            .collect();
        agents[0].activity = BTreeMap::from([("school".into(), 0.9), ("home_cell".into(), 0.05)]);
        let w = ImplicitWorld::build(agents, flat(&["c1", "c2"]), OdMatrixSet::default(), &Default::default())
            .unwrap();
        assert!((w.expected_contacts(0) - 28.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 20_000;
        let total: usize = (0..draws)
            .map(|_| sample_implicit_contacts(0, &w, 0.0, None, &mut rng).partners.len())
            .sum();
        assert!((total as f64 / draws as f64 - 28.0).abs() < 0.1);
    }

    #[test]
    fn capped_long_range_stays_home() {
        let cells = ["c0", "c1", "c2", "c3"];
        let agents: Vec<Agent> = (0..40)
            .map(|i| {
                let mut a = agent(&format!("a{i}"), cells[i % 4], &[("workplace", "w")]);
                a.activity.insert("workplace".into(), 1.0);
                a
            })
            .collect();
        let od = OdMatrixSet::new(vec![OdMatrix::identity(4)]);
        let w = ImplicitWorld::build(agents, flat(&cells), od, &Default::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for a in 0..40 {
            let s = sample_implicit_contacts(a, &w, 1.0, Some(0), &mut rng);
            assert_eq!(s.partners.len(), 39);
            assert!(s.partners.iter().all(|&b| w.home_cell(b as usize) == w.home_cell(a)));
            assert!(s.partners.iter().all(|&b| b as usize != a));
        }
    }

    #[test]
    fn lone_agent_drops_long_range_slots() {
        let mut agents = vec![agent("a0", "c0", &[("workplace", "w")]), agent("a1", "c1", &[("workplace", "w")])];
        agents[0].activity.insert("workplace".into(), 1.0);
        let od = OdMatrixSet::new(vec![OdMatrix::identity(2)]);
        let w = ImplicitWorld::build(agents, flat(&["c0", "c1"]), od, &Default::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_implicit_contacts(0, &w, 1.0, None, &mut rng);
        assert_eq!((s.partners.len(), s.dropped), (0, 1));
    }

    #[test]
    fn locked_agents_only_use_household() {
        let mut agents: Vec<Agent> = (0..10)
            .map(|i| agent(&format!("a{i}"), "c", &[("household", if i < 3 { "h0" } else { "h1" })]))
            .collect();
        agents[0].activity = BTreeMap::from([("household".into(), 1.0), ("home_cell".into(), 1.0)]);
        let w = ImplicitWorld::build(agents, flat(&["c"]), OdMatrixSet::default(), &Default::default())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut out = Vec::new();
        w.sample_into(0, 0.0, None, true, &mut rng, &mut out);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|&b| b == 1 || b == 2));
    }

    #[test]
    fn activity_rules_by_age() {
        let rules = vec![
            ActivityRule {
                when: vec![],
                scores: BTreeMap::from([("workplace".into(), 0.4), ("home_cell".into(), 0.1)]),
                priority: 0,
            },
            ActivityRule {
                when: vec![
                    AttrTest::new("age", Comparator::Ge, 10.0),
                    AttrTest::new("age", Comparator::Lt, 25.0),
                ],
                scores: BTreeMap::from([
                    ("workplace".into(), 0.0),
                    ("home_cell".into(), 0.05),
                    ("school".into(), 0.9),
                ]),
                priority: 1,
            },
        ];
        let mut young = Attributes::new();
        young.insert("age".into(), AttrValue::Num(17.0));
        let mut old = Attributes::new();
        old.insert("age".into(), AttrValue::Num(40.0));
        assert_eq!(resolve_activity(&young, &rules).unwrap().unwrap().scores["school"], 0.9);
        assert_eq!(resolve_activity(&old, &rules).unwrap().unwrap().scores["workplace"], 0.4);
        assert_eq!(resolve_activity(&Attributes::new(), &rules), Err("age".into()));
    }

    #[test]
    fn reads_population_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.csv");
        std::fs::write(
            &path,
            "agent_id,age,gender,home_cell,workplace_id,school_id,employment,activity_school\n\
             a1,34,female,c1,w1,,employed,\n\
             a2,12,male,c1,,s1,student,0.8\n",
        )
        .unwrap();
        let agents = read_agents(&path).unwrap();
        assert_eq!(agents.len(), 2);
        assert_eq!(agents[0].contexts, vec![("workplace".into(), "w1".into())]);
        assert_eq!(agents[1].activity["school"], 0.8);
        assert_eq!(agents[0].attributes["age"], AttrValue::Num(34.0));
        assert_eq!(agents[0].attributes["gender"], AttrValue::Text("female".into()));

        std::fs::write(&path, "agent_id,home_cell\n").unwrap();
        assert!(matches!(read_agents(&path), Err(DataError::NoAgents)));
        std::fs::write(&path, "agent_id,age\na1,3\n").unwrap();
        assert!(read_agents(&path).unwrap_err().to_string().contains("home_cell"));
    }
}
