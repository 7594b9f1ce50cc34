//! Forward state-space temporal planner over a grounded task, minimizing
//! accumulated act-cost. Navigation actions query an external advisor that
//! prices them with motion costs and goal-covariance traces; the search is
//! best-first on g + h with duplicate detection and re-opening.

use std::collections::{BinaryHeap, HashMap};

use thiserror::Error;

use crate::belief::GaussianBelief;
use crate::pddl::{
    FluentTag, GroundAction, GroundCondition, GroundNum, GroundedTask, NumOp,
};

/// Fixed-width bit set over the task's proposition index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub fn new(len: usize) -> Self {
        BitSet {
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn set(&mut self, i: usize, value: bool) {
        let (w, b) = (i / 64, i % 64);
        if value {
            self.words[w] |= 1 << b;
        } else {
            self.words[w] &= !(1 << b);
        }
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }
}

/// Search state: propositions, numeric fluents and accumulated time.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    pub props: BitSet,
    pub fluents: Vec<f64>,
    pub time: f64,
}

/// Belief context carried along a search branch: the region the robot is in,
/// the roadmap node realizing it and the belief at that node.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub region: String,
    pub node: usize,
    pub belief: GaussianBelief,
}

#[derive(Debug, Clone)]
pub struct AdvisorQuery {
    pub from: String,
    pub to: String,
    /// Chain node realizing `from` (the previous query's goal node).
    pub node: usize,
    pub belief: GaussianBelief,
}

#[derive(Debug, Clone)]
pub struct AdvisorReply {
    /// Motion cost under the active config; +inf when no path exists.
    pub external: f64,
    /// trace(Sigma) at the selected goal node.
    pub bound: f64,
    pub feasible: bool,
    pub goal_node: usize,
    pub goal_belief: GaussianBelief,
}

/// External advisor supplying indirect-variable values during search.
pub trait Advisor {
    fn advise(&mut self, query: &AdvisorQuery) -> AdvisorReply;

    /// Admissible lower bound on the external cost of navigating between two
    /// regions, used only in heuristic evaluation.
    fn nav_lower_bound(&self, from: &str, to: &str) -> f64;
}

/// Record of one advisor-backed navigation step inside a plan.
#[derive(Debug, Clone)]
pub struct NavRecord {
    pub from: String,
    pub to: String,
    pub start_node: usize,
    pub goal_node: usize,
    pub external: f64,
    pub bound: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct PlanStep {
    pub action_id: usize,
    pub action: String,
    pub start: f64,
    pub duration: f64,
    /// act-cost increase contributed by this step.
    pub cost: f64,
    pub nav: Option<NavRecord>,
}

#[derive(Debug, Clone)]
pub struct TaskPlan {
    pub steps: Vec<PlanStep>,
    pub total_cost: f64,
    /// Per-navigation-step goal traces, in step order.
    pub goal_traces: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("action `{0}` is not applicable in the given state")]
    Inapplicable(String),
    #[error("goal is unreachable: search space exhausted after {expanded} expansions")]
    UnreachableGoal { expanded: usize },
    #[error("task has no `{0}` fluent")]
    MissingFluent(String),
}

fn eval_num(n: &GroundNum, fluents: &[f64]) -> f64 {
    match n {
        GroundNum::Const(v) => *v,
        GroundNum::Fluent(i) => fluents[*i],
    }
}

fn condition_holds(c: &GroundCondition, state: &TaskState) -> bool {
    match c {
        GroundCondition::Prop(p) => state.props.get(*p),
        GroundCondition::NotProp(p) => !state.props.get(*p),
        GroundCondition::Num(cmp, l, r) => {
            cmp.holds(eval_num(l, &state.fluents), eval_num(r, &state.fluents))
        }
    }
}

pub fn applicable(action: &GroundAction, state: &TaskState) -> bool {
    action.pre.iter().all(|c| condition_holds(c, state))
}

pub fn goal_satisfied(task: &GroundedTask, state: &TaskState) -> bool {
    task.goal.iter().all(|c| condition_holds(c, state))
}

pub fn initial_state(task: &GroundedTask) -> TaskState {
    let mut props = BitSet::new(task.props.len());
    for &p in &task.init_props {
        props.set(p, true);
    }
    TaskState {
        props,
        fluents: task.init_fluents.clone(),
        time: 0.0,
    }
}

/// Apply a ground action: delete effects, add effects, numeric effects in
/// temporal order. Navigation actions query the advisor once; the reply is
/// written into the indirect fluents before the numeric effects evaluate.
pub fn apply(
    state: &TaskState,
    chain: &ChainState,
    action: &GroundAction,
    task: &GroundedTask,
    advisor: &mut dyn Advisor,
) -> Result<(TaskState, ChainState, Option<NavRecord>), PlanError> {
    if !applicable(action, state) {
        return Err(PlanError::Inapplicable(action.name.clone()));
    }
    let mut next = state.clone();
    let mut next_chain = chain.clone();
    let mut nav_record = None;

    if let Some(nav) = &action.nav {
        let query = AdvisorQuery {
            from: nav.from.clone(),
            to: nav.to.clone(),
            node: chain.node,
            belief: chain.belief.clone(),
        };
        let reply = advisor.advise(&query);
        let ext_id = task
            .fluent_id("(external)")
            .ok_or_else(|| PlanError::MissingFluent("external".into()))?;
        next.fluents[ext_id] = reply.external;
        if let Some(bound_id) = task.fluent_id("(bound)") {
            next.fluents[bound_id] = reply.bound;
        }
        nav_record = Some(NavRecord {
            from: nav.from.clone(),
            to: nav.to.clone(),
            start_node: chain.node,
            goal_node: reply.goal_node,
            external: reply.external,
            bound: reply.bound,
            feasible: reply.feasible,
        });
        next_chain = ChainState {
            region: nav.to.clone(),
            node: reply.goal_node,
            belief: reply.goal_belief,
        };
    }

    for &d in &action.del {
        next.props.set(d, false);
    }
    for &a in &action.add {
        next.props.set(a, true);
    }
    for eff in &action.num_effects {
        let v = eval_num(&eff.value, &next.fluents);
        match eff.op {
            NumOp::Increase => next.fluents[eff.fluent] += v,
            NumOp::Assign => next.fluents[eff.fluent] = v,
        }
    }
    next.time += action.duration;
    Ok((next, next_chain, nav_record))
}

/// Per-goal achiever summary used by the relaxed-plan heuristic.
struct HeuristicCtx {
    /// (goal prop id, min constant act-cost among achievers,
    ///  per-achiever region requirements).
    goals: Vec<(usize, f64, Vec<Vec<String>>)>,
}

impl HeuristicCtx {
    fn build(task: &GroundedTask) -> Self {
        let act_cost = task.fluent_id("(act-cost)");
        // Region granted by a nav action's add effects.
        let mut prop_region: HashMap<usize, String> = HashMap::new();
        for a in &task.actions {
            if let Some(nav) = &a.nav {
                for &p in &a.add {
                    prop_region.insert(p, nav.to.clone());
                }
            }
        }
        let const_cost = |a: &GroundAction| -> f64 {
            a.num_effects
                .iter()
                .filter(|e| Some(e.fluent) == act_cost && e.op == NumOp::Increase)
                .map(|e| match e.value {
                    GroundNum::Const(v) => v,
                    GroundNum::Fluent(_) => 0.0,
                })
                .sum()
        };
        let mut goals = Vec::new();
        for g in &task.goal {
            let GroundCondition::Prop(p) = g else { continue };
            let mut min_cost = f64::INFINITY;
            let mut region_opts = Vec::new();
            for a in task.actions.iter().filter(|a| a.add.contains(p)) {
                min_cost = min_cost.min(const_cost(a));
                let regions = if let Some(nav) = &a.nav {
                    vec![nav.to.clone()]
                } else {
                    a.pre
                        .iter()
                        .filter_map(|c| match c {
                            GroundCondition::Prop(q) => prop_region.get(q).cloned(),
                            _ => None,
                        })
                        .collect()
                };
                region_opts.push(regions);
            }
            if min_cost.is_infinite() {
                min_cost = 0.0; // unachievable goal; search will discover it
            }
            goals.push((*p, min_cost, region_opts));
        }
        HeuristicCtx { goals }
    }

    fn eval(&self, state: &TaskState, chain: &ChainState, advisor: &dyn Advisor) -> f64 {
        let mut const_part = 0.0;
        let mut nav_part: f64 = 0.0;
        for (p, cost, region_opts) in &self.goals {
            if state.props.get(*p) {
                continue;
            }
            const_part += cost;
            // Every achiever of this goal requires reaching all regions in
            // its option list; the cheapest option lower-bounds the goal.
            let goal_nav = region_opts
                .iter()
                .map(|regions| {
                    regions
                        .iter()
                        .map(|r| advisor.nav_lower_bound(&chain.region, r))
                        .fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            if goal_nav.is_finite() {
                nav_part = nav_part.max(goal_nav);
            }
        }
        const_part + nav_part
    }
}

/// Relaxed-plan cost estimate: constant action costs of the cheapest
/// achievers plus an advisor-supplied navigation lower bound. Returns 0 on
/// goal states.
pub fn heuristic(
    state: &TaskState,
    chain: &ChainState,
    task: &GroundedTask,
    advisor: &dyn Advisor,
) -> f64 {
    HeuristicCtx::build(task).eval(state, chain, advisor)
}

/// Duplicate-detection key: propositions, free fluents (bit patterns) and
/// the chain node realizing the current region. Direct fluents are the cost
/// bookkeeping (compared through g), indirect fluents are advisor scratch
/// registers and trigger fluents only signal the advisor; all are excluded.
fn state_key(task: &GroundedTask, state: &TaskState, chain: &ChainState) -> (BitSet, Vec<u64>, usize) {
    let fl: Vec<u64> = state
        .fluents
        .iter()
        .zip(&task.fluent_tags)
        .filter(|(_, tag)| **tag == FluentTag::Free)
        .map(|(v, _)| v.to_bits())
        .collect();
    (state.props.clone(), fl, chain.node)
}

struct Node {
    state: TaskState,
    chain: ChainState,
    parent: Option<usize>,
    action: Option<usize>,
    nav: Option<NavRecord>,
    g: f64,
}

struct QueueEntry {
    f: f64,
    g: f64,
    /// Lexicographic rank of the generating action name (0 for the root).
    action_rank: usize,
    seq: usize,
    node: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; reverse for min ordering on
        // (f, g, action name, insertion order).
        other
            .f
            .total_cmp(&self.f)
            .then(other.g.total_cmp(&self.g))
            .then(other.action_rank.cmp(&self.action_rank))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Best-first search for the minimum act-cost plan reaching the goal.
pub fn plan(
    task: &GroundedTask,
    advisor: &mut dyn Advisor,
    init_chain: ChainState,
) -> Result<TaskPlan, PlanError> {
    let act_cost = task
        .fluent_id("(act-cost)")
        .ok_or_else(|| PlanError::MissingFluent("act-cost".into()))?;
    let hctx = HeuristicCtx::build(task);
    // Stable action expansion order: lexicographic by name.
    let mut action_order: Vec<usize> = (0..task.actions.len()).collect();
    action_order.sort_by(|&a, &b| task.actions[a].name.cmp(&task.actions[b].name));
    let action_rank: HashMap<usize, usize> = action_order
        .iter()
        .enumerate()
        .map(|(rank, &id)| (id, rank + 1))
        .collect();

    let init = initial_state(task);
    let h0 = hctx.eval(&init, &init_chain, advisor);
    let mut nodes = vec![Node {
        state: init,
        chain: init_chain,
        parent: None,
        action: None,
        nav: None,
        g: 0.0,
    }];
    let mut open = BinaryHeap::new();
    open.push(QueueEntry {
        f: h0,
        g: 0.0,
        action_rank: 0,
        seq: 0,
        node: 0,
    });
    let mut best_g: HashMap<(BitSet, Vec<u64>, usize), f64> = HashMap::new();
    best_g.insert(state_key(task, &nodes[0].state, &nodes[0].chain), 0.0);
    let mut seq = 0usize;
    let mut expanded = 0usize;

    while let Some(entry) = open.pop() {
        let node_id = entry.node;
        if entry.g > nodes[node_id].g + 1e-12 {
            continue; // stale entry
        }
        let state = nodes[node_id].state.clone();
        let chain = nodes[node_id].chain.clone();
        if goal_satisfied(task, &state) {
            return Ok(extract_plan(task, &nodes, node_id, act_cost));
        }
        expanded += 1;
        for &aid in &action_order {
            let action = &task.actions[aid];
            if !applicable(action, &state) {
                continue;
            }
            let Ok((next, next_chain, nav)) = apply(&state, &chain, action, task, advisor) else {
                continue;
            };
            let g = next.fluents[act_cost];
            if !g.is_finite() {
                // Advisor found no feasible motion plan: the action is priced
                // at +inf for this expansion but stays in the action set.
                continue;
            }
            let key = state_key(task, &next, &next_chain);
            match best_g.get(&key) {
                Some(&old) if old <= g + 1e-12 => continue,
                _ => {}
            }
            best_g.insert(key, g);
            let h = hctx.eval(&next, &next_chain, advisor);
            seq += 1;
            nodes.push(Node {
                state: next,
                chain: next_chain,
                parent: Some(node_id),
                action: Some(aid),
                nav,
                g,
            });
            open.push(QueueEntry {
                f: g + h,
                g,
                action_rank: action_rank[&aid],
                seq,
                node: nodes.len() - 1,
            });
        }
    }
    Err(PlanError::UnreachableGoal { expanded })
}

fn extract_plan(task: &GroundedTask, nodes: &[Node], goal: usize, act_cost: usize) -> TaskPlan {
    let mut ids = Vec::new();
    let mut cur = goal;
    while let Some(parent) = nodes[cur].parent {
        ids.push(cur);
        cur = parent;
    }
    ids.reverse();
    let mut steps = Vec::new();
    let mut goal_traces = Vec::new();
    let mut start = 0.0;
    let mut prev_cost = 0.0;
    for id in ids {
        let n = &nodes[id];
        let aid = n.action.unwrap();
        let action = &task.actions[aid];
        let cost_after = n.state.fluents[act_cost];
        if let Some(nav) = &n.nav {
            goal_traces.push(nav.bound);
        }
        steps.push(PlanStep {
            action_id: aid,
            action: action.name.clone(),
            start,
            duration: action.duration,
            cost: cost_after - prev_cost,
            nav: n.nav.clone(),
        });
        start += action.duration;
        prev_cost = cost_after;
    }
    TaskPlan {
        steps,
        total_cost: nodes[goal].state.fluents[act_cost],
        goal_traces,
    }
}

/// Replay a plan from the initial state, checking applicability step by step.
/// Returns the replayed total cost.
pub fn replay(
    task: &GroundedTask,
    plan: &TaskPlan,
    advisor: &mut dyn Advisor,
    init_chain: ChainState,
) -> Result<f64, PlanError> {
    let act_cost = task
        .fluent_id("(act-cost)")
        .ok_or_else(|| PlanError::MissingFluent("act-cost".into()))?;
    let mut state = initial_state(task);
    let mut chain = init_chain;
    for step in &plan.steps {
        let action = &task.actions[step.action_id];
        let (next, next_chain, _) = apply(&state, &chain, action, task, advisor)?;
        state = next;
        chain = next_chain;
    }
    if !goal_satisfied(task, &state) {
        return Err(PlanError::UnreachableGoal { expanded: 0 });
    }
    Ok(state.fluents[act_cost])
}

/// Plan output format: one `time: (action args) [D=dur, C=cost]` line per
/// step plus totals.
pub fn format_plan(plan: &TaskPlan) -> String {
    let mut out = String::new();
    for step in &plan.steps {
        out.push_str(&format!(
            "{:.3}: {} [D={:.3}, C={:.6}]\n",
            step.start, step.action, step.duration, step.cost
        ));
    }
    out.push_str(&format!("; total-cost = {:.6}\n", plan.total_cost));
    out.push_str(&format!(
        "; goal-traces = [{}]\n",
        plan.goal_traces
            .iter()
            .map(|t| format!("{t:.6}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out
}
