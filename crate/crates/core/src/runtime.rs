//! Locality-enforcing synchronous runtime.
//!
//! Agents hold only their own objective, their cliques' blocks, cached
//! neighbor values, and local copies of each clique's shared variables. Per
//! round:
//!
//! 1. every agent computes its new block from cached data;
//! 2. fresh blocks travel over graph edges (the only delivery path the
//!    mailbox allows) and caches refresh;
//! 3. clique variables update — either replicated on every member, or
//!    computed by the lowest-id member and distributed inside the clique;
//! 4. the round counter advances.
//!
//! Every step calls the same per-clique helpers as the centralized solver,
//! in the same order, so trajectories agree bit for bit. The mailbox logs
//! every delivery for locality audits.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::functions::Objective;
use crate::params::{Algo, CliqueScales, SolverParams};
use crate::problem::{CliqueBlock, CliqueProblem};
use crate::solver::{agent_x_update, clique_x_contribution, clique_yu_update, SolverState};

/// Who computes the clique-variable update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareMode {
    /// Every member recomputes `(y_l, u_l)` identically.
    Replicated,
    /// The lowest-id member computes and distributes the result.
    Owner,
}

/// One logged delivery. Phase 2 carries agent blocks, phase 3 carries
/// clique-variable updates in owner mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub round: usize,
    pub phase: u8,
    pub from: usize,
    pub to: usize,
    /// Number of scalars in the payload.
    pub payload: usize,
}

#[derive(Debug, Default, Clone)]
pub struct MessageStats {
    pub rounds: usize,
    pub x_messages: usize,
    pub yu_messages: usize,
    pub x_messages_per_round: Vec<usize>,
    pub yu_messages_per_round: Vec<usize>,
    /// Scalars sent by each agent over the whole run (index 0 = agent 1).
    pub per_agent_payload: Vec<usize>,
}

/// An agent's view of one clique it belongs to.
#[derive(Debug, Clone)]
struct CliqueView {
    clique_id: usize,
    members: Vec<usize>,
    /// 0-based rank of this agent in the member list.
    rank: usize,
    block: Arc<CliqueBlock>,
    scales: CliqueScales,
    /// Cached member blocks, refreshed from deliveries each round.
    x_cache: DVector<f64>,
    y: DVector<f64>,
    u: DVector<f64>,
}

#[derive(Debug, Clone)]
struct AgentNode {
    id: usize,
    alpha: f64,
    objective: Objective,
    x: DVector<f64>,
    cliques: Vec<CliqueView>,
    /// Closed neighborhood, for broadcasts.
    neighbors: Vec<usize>,
}

/// The simulated network: agents plus the delivery log.
#[derive(Debug)]
pub struct Network {
    agents: Vec<AgentNode>,
    d: usize,
    algo: Algo,
    mode: ShareMode,
    round: usize,
    deliveries: Vec<Delivery>,
    /// Agent processing order within a phase; results must not depend on it.
    schedule: Vec<usize>,
}

impl Network {
    pub fn new(
        problem: &CliqueProblem,
        params: &SolverParams,
        algo: Algo,
        mode: ShareMode,
        initial: &SolverState,
    ) -> Result<Self> {
        params.check_compatible(problem)?;
        let n = problem.n();
        let d = problem.d();
        let family = problem.family();
        let blocks: Vec<Arc<CliqueBlock>> =
            problem.blocks().iter().cloned().map(Arc::new).collect();
        let mut agents = Vec::with_capacity(n);
        for i in 1..=n {
            let mut views = Vec::new();
            for &l in family.agent_cliques(i)? {
                let clique = family.clique(l);
                views.push(CliqueView {
                    clique_id: l,
                    members: clique.members().to_vec(),
                    rank: clique.position(i)? - 1,
                    block: blocks[l].clone(),
                    scales: params.clique_scales(problem, l),
                    x_cache: family.gather_clique(l, initial.x(), d),
                    y: initial.y()[l].clone(),
                    u: initial.u()[l].clone(),
                });
            }
            agents.push(AgentNode {
                id: i,
                alpha: params.alpha()[i - 1],
                objective: problem.agent_objective(i).clone(),
                x: initial.x().rows((i - 1) * d, d).clone_owned(),
                cliques: views,
                neighbors: problem.graph().neighbor_set(i)?,
            });
        }
        Ok(Self {
            agents,
            d,
            algo,
            mode,
            round: 0,
            deliveries: Vec::new(),
            schedule: (0..n).collect(),
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn mode(&self) -> ShareMode {
        self.mode
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    /// Override the agent processing order (testing hook; trajectories must
    /// be schedule-independent).
    pub fn set_schedule(&mut self, order: Vec<usize>) -> Result<()> {
        let n = self.agents.len();
        let mut seen = vec![false; n];
        if order.len() != n {
            return Err(Error::InvalidParameter("schedule must list every agent".into()));
        }
        for &idx in &order {
            if idx >= n || seen[idx] {
                return Err(Error::InvalidParameter("schedule must be a permutation".into()));
            }
            seen[idx] = true;
        }
        self.schedule = order;
        Ok(())
    }

    fn record(&mut self, phase: u8, from: usize, to: usize, payload: usize) -> Result<()> {
        let sender = &self.agents[from - 1];
        if sender.neighbors.binary_search(&to).is_err() {
            return Err(Error::LocalityViolation { from, to });
        }
        self.deliveries.push(Delivery { round: self.round, phase, from, to, payload });
        Ok(())
    }

    /// Execute one synchronous round.
    pub fn run_round(&mut self) -> Result<()> {
        let d = self.d;
        let n = self.agents.len();

        // Phase 1: agent updates from cached clique data.
        let mut staged: Vec<Option<DVector<f64>>> = vec![None; n];
        for &idx in &self.schedule.clone() {
            let agent = &self.agents[idx];
            let mut acc = DVector::zeros(d);
            for view in &agent.cliques {
                let w = clique_x_contribution(
                    &view.block,
                    &view.scales.gamma,
                    &view.x_cache,
                    &view.y,
                    &view.u,
                );
                acc += w.rows(view.rank * d, d);
            }
            staged[idx] =
                Some(agent_x_update(&agent.objective, agent.alpha, &agent.x, acc, self.algo)?);
        }

        // Phase 2: broadcast fresh blocks to neighbors and refresh caches.
        let mut outbox: Vec<(usize, usize, DVector<f64>)> = Vec::new();
        for &idx in &self.schedule.clone() {
            let id = self.agents[idx].id;
            let payload = staged[idx].clone().expect("staged in phase 1");
            for &to in self.agents[idx].neighbors.clone().iter().filter(|&&t| t != id) {
                self.record(2, id, to, payload.len())?;
                outbox.push((id, to, payload.clone()));
            }
        }
        for (from, to, payload) in outbox {
            let receiver = &mut self.agents[to - 1];
            for view in &mut receiver.cliques {
                if let Ok(pos) = view.members.binary_search(&from) {
                    view.x_cache.rows_mut(pos * d, d).copy_from(&payload);
                }
            }
        }
        for (agent, own) in self.agents.iter_mut().zip(&mut staged) {
            let own = own.take().expect("staged in phase 1");
            for view in &mut agent.cliques {
                view.x_cache.rows_mut(view.rank * d, d).copy_from(&own);
            }
            agent.x = own;
        }

        // Phase 3: clique-variable updates.
        match self.mode {
            ShareMode::Replicated => {
                for &idx in &self.schedule.clone() {
                    let agent = &mut self.agents[idx];
                    for view in &mut agent.cliques {
                        let (y_new, u_new) = clique_yu_update(
                            &view.block,
                            &view.scales,
                            self.algo,
                            &view.x_cache,
                            &view.y,
                            &view.u,
                        )?;
                        view.y = y_new;
                        view.u = u_new;
                    }
                }
                self.check_replicated_consistency()?;
            }
            ShareMode::Owner => {
                let mut updates: Vec<(usize, usize, DVector<f64>, DVector<f64>)> = Vec::new();
                for &idx in &self.schedule.clone() {
                    let agent = &self.agents[idx];
                    for view in &agent.cliques {
                        if view.rank != 0 {
                            continue;
                        }
                        let (y_new, u_new) = clique_yu_update(
                            &view.block,
                            &view.scales,
                            self.algo,
                            &view.x_cache,
                            &view.y,
                            &view.u,
                        )?;
                        updates.push((view.clique_id, agent.id, y_new, u_new));
                    }
                }
                for (clique_id, owner, y_new, u_new) in updates {
                    let members = self.agents[owner - 1]
                        .cliques
                        .iter()
                        .find(|v| v.clique_id == clique_id)
                        .expect("owner holds the clique")
                        .members
                        .clone();
                    for &to in members.iter().filter(|&&m| m != owner) {
                        self.record(3, owner, to, y_new.len() + u_new.len())?;
                    }
                    for &member in &members {
                        let view = self.agents[member - 1]
                            .cliques
                            .iter_mut()
                            .find(|v| v.clique_id == clique_id)
                            .expect("member holds the clique");
                        view.y = y_new.clone();
                        view.u = u_new.clone();
                    }
                }
            }
        }

        self.round += 1;
        Ok(())
    }

    pub fn run_rounds(&mut self, rounds: usize) -> Result<()> {
        for _ in 0..rounds {
            self.run_round()?;
        }
        Ok(())
    }

    /// Bitwise comparison of every member's clique-variable copies.
    fn check_replicated_consistency(&self) -> Result<()> {
        let mut canonical: Vec<Option<(&DVector<f64>, &DVector<f64>)>> = Vec::new();
        for agent in &self.agents {
            for view in &agent.cliques {
                if canonical.len() <= view.clique_id {
                    canonical.resize(view.clique_id + 1, None);
                }
                match &canonical[view.clique_id] {
                    None => canonical[view.clique_id] = Some((&view.y, &view.u)),
                    Some((y, u)) => {
                        if *y != &view.y || *u != &view.u {
                            return Err(Error::CliqueCopyDivergence {
                                clique: view.clique_id,
                                round: self.round,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Assemble the global view `(x, y, u)` from agent-local state.
    pub fn assemble(&self) -> (DVector<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let d = self.d;
        let n = self.agents.len();
        let mut x = DVector::zeros(n * d);
        for agent in &self.agents {
            x.rows_mut((agent.id - 1) * d, d).copy_from(&agent.x);
        }
        let clique_count = self
            .agents
            .iter()
            .flat_map(|a| a.cliques.iter().map(|v| v.clique_id + 1))
            .max()
            .unwrap_or(0);
        let mut y = vec![DVector::zeros(0); clique_count];
        let mut u = vec![DVector::zeros(0); clique_count];
        for agent in &self.agents {
            for view in &agent.cliques {
                if view.rank == 0 {
                    y[view.clique_id] = view.y.clone();
                    u[view.clique_id] = view.u.clone();
                }
            }
        }
        (x, y, u)
    }

    pub fn message_stats(&self) -> MessageStats {
        let n = self.agents.len();
        let mut stats = MessageStats {
            rounds: self.round,
            x_messages_per_round: vec![0; self.round],
            yu_messages_per_round: vec![0; self.round],
            per_agent_payload: vec![0; n],
            ..Default::default()
        };
        for delivery in &self.deliveries {
            stats.per_agent_payload[delivery.from - 1] += delivery.payload;
            match delivery.phase {
                2 => {
                    stats.x_messages += 1;
                    stats.x_messages_per_round[delivery.round] += 1;
                }
                3 => {
                    stats.yu_messages += 1;
                    stats.yu_messages_per_round[delivery.round] += 1;
                }
                _ => {}
            }
        }
        stats
    }

    /// Write the delivery log: one line per message,
    /// `round phase from to payload`.
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "round phase from to payload")?;
        for d in &self.deliveries {
            writeln!(out, "{} {} {} {} {}", d.round, d.phase, d.from, d.to, d.payload)?;
        }
        Ok(())
    }

    /// Audit the delivery log: every delivery must follow a graph edge.
    pub fn locality_violations(&self, problem: &CliqueProblem) -> usize {
        self.deliveries
            .iter()
            .filter(|d| d.from == d.to || !problem.graph().has_edge(d.from, d.to))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clique::CliqueFamily;
    use crate::functions::Quadratic;
    use crate::graph::Graph;
    use crate::params::suggest_params;
    use crate::problem::build_consensus_problem;
    use crate::solver::step;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn fixture(seed: u64, n: usize, d: usize) -> CliqueProblem {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let g = Arc::new(Graph::erdos_renyi_connected(n, 0.5, &mut rng, 100).unwrap());
        let fam = Arc::new(CliqueFamily::enumerate_maximal(&g).unwrap());
        let fs: Vec<Objective> = (0..n)
            .map(|_| {
                let psi = DMatrix::identity(d, d)
                    + DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() * 0.2 - 0.1);
                let b = DVector::from_fn(d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                Objective::smooth(Quadratic::new(psi, b).unwrap()).unwrap()
            })
            .collect();
        build_consensus_problem(g, fam, d, fs, &vec![0.001; n]).unwrap()
    }

    #[test]
    fn trajectory_equals_centralized_exactly() {
        for seed in [1u64, 2] {
            let p = fixture(seed, 6, 2);
            for algo in [Algo::ClAdmm, Algo::ClFlipAdmm] {
                let params = suggest_params(&p, algo).unwrap();
                let mut central = SolverState::zeros(&p);
                let mut net =
                    Network::new(&p, &params, algo, ShareMode::Replicated, &central).unwrap();
                for _ in 0..50 {
                    step(&p, &params, &mut central, algo).unwrap();
                    net.run_round().unwrap();
                    let (x, y, u) = net.assemble();
                    assert_eq!(&x, central.x());
                    assert_eq!(&y[..], central.y());
                    assert_eq!(&u[..], central.u());
                }
            }
        }
    }

    #[test]
    fn owner_and_replicated_modes_agree() {
        let p = fixture(3, 6, 2);
        let params = suggest_params(&p, Algo::ClAdmm).unwrap();
        let init = SolverState::zeros(&p);
        let mut rep =
            Network::new(&p, &params, Algo::ClAdmm, ShareMode::Replicated, &init).unwrap();
        let mut own = Network::new(&p, &params, Algo::ClAdmm, ShareMode::Owner, &init).unwrap();
        for _ in 0..40 {
            rep.run_round().unwrap();
            own.run_round().unwrap();
            let (xr, yr, ur) = rep.assemble();
            let (xo, yo, uo) = own.assemble();
            assert_eq!(xr, xo);
            assert_eq!(yr, yo);
            assert_eq!(ur, uo);
        }
    }

    #[test]
    fn schedule_independent() {
        let p = fixture(4, 5, 2);
        let params = suggest_params(&p, Algo::ClAdmm).unwrap();
        let init = SolverState::zeros(&p);
        let mut forward =
            Network::new(&p, &params, Algo::ClAdmm, ShareMode::Replicated, &init).unwrap();
        let mut backward =
            Network::new(&p, &params, Algo::ClAdmm, ShareMode::Replicated, &init).unwrap();
        backward.set_schedule((0..5).rev().collect()).unwrap();
        for _ in 0..30 {
            forward.run_round().unwrap();
            backward.run_round().unwrap();
            let (xf, yf, uf) = forward.assemble();
            let (xb, yb, ub) = backward.assemble();
            assert_eq!(xf, xb);
            assert_eq!(yf, yb);
            assert_eq!(uf, ub);
        }
    }

    #[test]
    fn message_counts_on_triangle() {
        let g = Arc::new(Graph::complete(3));
        let fam = Arc::new(CliqueFamily::enumerate_maximal(&g).unwrap());
        let fs = (0..3).map(|_| Objective::zero(1)).collect();
        let p = build_consensus_problem(g, fam, 1, fs, &[0.0; 3]).unwrap();
        let params = suggest_params(&p, Algo::ClAdmm).unwrap();
        let init = SolverState::zeros(&p);

        let mut rep =
            Network::new(&p, &params, Algo::ClAdmm, ShareMode::Replicated, &init).unwrap();
        rep.run_rounds(4).unwrap();
        let stats = rep.message_stats();
        // Each of 3 agents broadcasts to 2 neighbors.
        assert_eq!(stats.x_messages_per_round, vec![6; 4]);
        assert_eq!(stats.yu_messages, 0);

        let mut own = Network::new(&p, &params, Algo::ClAdmm, ShareMode::Owner, &init).unwrap();
        own.run_rounds(4).unwrap();
        let stats = own.message_stats();
        assert_eq!(stats.x_messages_per_round, vec![6; 4]);
        // Owner (agent 1) distributes to the 2 other members of the single
        // maximal clique.
        assert_eq!(stats.yu_messages_per_round, vec![2; 4]);
        assert!(stats.per_agent_payload[0] > stats.per_agent_payload[1]);
    }

    #[test]
    fn isolated_agent_sends_nothing() {
        let g = Arc::new(Graph::new(1, []).unwrap());
        let fam = Arc::new(CliqueFamily::custom(&g, vec![vec![1]]).unwrap());
        let p =
            build_consensus_problem(g, fam, 1, vec![Objective::zero(1)], &[0.0]).unwrap();
        let params = suggest_params(&p, Algo::ClAdmm).unwrap();
        let init = SolverState::zeros(&p);
        let mut net =
            Network::new(&p, &params, Algo::ClAdmm, ShareMode::Replicated, &init).unwrap();
        net.run_rounds(3).unwrap();
        assert!(net.deliveries().is_empty());
    }

    #[test]
    fn delivery_log_respects_locality() {
        let p = fixture(5, 7, 2);
        let params = suggest_params(&p, Algo::ClAdmm).unwrap();
        let init = SolverState::zeros(&p);
        let mut net = Network::new(&p, &params, Algo::ClAdmm, ShareMode::Owner, &init).unwrap();
        net.run_rounds(10).unwrap();
        assert_eq!(net.locality_violations(&p), 0);
        assert!(!net.deliveries().is_empty());
    }

    #[test]
    fn agent_wise_parameters_match_centralized() {
        let p = fixture(7, 6, 2);
        let n = p.n();
        let mut rng = ChaCha12Rng::seed_from_u64(70);
        let gamma: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
        let beta: Vec<f64> = gamma.iter().map(|g| 0.9 / g).collect();
        let phi: Vec<f64> = (0..n).map(|_| 0.8 + 0.4 * rng.random::<f64>()).collect();
        let alpha: Vec<f64> = (1..=n)
            .map(|i| {
                let count = p.family().agent_clique_count(i).unwrap() as f64;
                0.9 / (gamma[i - 1] * count)
            })
            .collect();
        let params = crate::params::SolverParams::agent_wise(alpha, beta, gamma, phi).unwrap();
        assert!(crate::params::validate(&p, &params, Algo::ClAdmm).unwrap().ok());
        let mut central = SolverState::zeros(&p);
        let mut net = Network::new(&p, &params, Algo::ClAdmm, ShareMode::Owner, &central)
            .unwrap();
        for _ in 0..40 {
            step(&p, &params, &mut central, Algo::ClAdmm).unwrap();
            net.run_round().unwrap();
            let (x, y, u) = net.assemble();
            assert_eq!(&x, central.x());
            assert_eq!(&y[..], central.y());
            assert_eq!(&u[..], central.u());
        }
    }

    #[test]
    fn trace_file_lists_every_delivery() {
        let p = fixture(6, 5, 1);
        let params = suggest_params(&p, Algo::ClAdmm).unwrap();
        let init = SolverState::zeros(&p);
        let mut net = Network::new(&p, &params, Algo::ClAdmm, ShareMode::Owner, &init).unwrap();
        net.run_rounds(3).unwrap();
        let path = std::env::temp_dir()
            .join(format!("cliquewise-trace-{}.txt", std::process::id()));
        net.write_trace(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let _ = std::fs::remove_file(&path);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("round phase from to payload"));
        assert_eq!(lines.count(), net.deliveries().len());
        let first = net.deliveries()[0];
        assert!(text.contains(&format!(
            "{} {} {} {} {}",
            first.round, first.phase, first.from, first.to, first.payload
        )));
    }
}
