//! Event-by-event execution of the selfish-mining strategy on a block tree.
//!
//! Above the last block every miner agrees on (`base`) the tree has at most
//! two live branches: the pool's chain, of which the first `published`
//! blocks are public, and one honest branch. Everything below `base` is the
//! main chain. Stale blocks that may still be referenced as uncles are kept
//! in `open`.

use serde::Serialize;
use smallvec::SmallVec;

use crate::model::{ChainState, MiningConfig, RewardSchedule};

pub type BlockId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Miner {
    Pool,
    Honest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockStatus {
    Pending,
    Regular,
    Uncle(u32),
    Stale,
}

#[derive(Debug, Clone, Serialize)]
pub struct Block {
    pub id: BlockId,
    pub parent: Option<BlockId>,
    pub height: u32,
    pub miner: Miner,
    pub uncle_refs: SmallVec<[BlockId; 2]>,
    /// Event index at which the block was created.
    pub created_at: u64,
    pub published_at: Option<u64>,
    pub status: BlockStatus,
    /// `(L_s, L_h)` just before the block was mined.
    pub pre_state: ChainState,
}

/// One block-creation event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SimEvent {
    PoolBlock,
    /// `on_pool_branch` only matters while two public branches exist.
    HonestBlock {
        on_pool_branch: bool,
    },
}

impl SimEvent {
    pub fn label(&self) -> &'static str {
        match self {
            SimEvent::PoolBlock => "pool",
            SimEvent::HonestBlock { on_pool_branch: true } => "honest-pool-branch",
            SimEvent::HonestBlock { on_pool_branch: false } => "honest",
        }
    }
}

/// What a single step did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub index: u64,
    pub event: SimEvent,
    pub pre: ChainState,
    pub post: ChainState,
    pub created: BlockId,
    pub published: Vec<BlockId>,
    /// `(nephew, uncle)` pairs added by the new block.
    pub references: Vec<(BlockId, BlockId)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepChecks {
    /// Public branches of different length.
    pub equal_length_violations: u64,
    /// Tree-level branch lengths disagreeing with `(L_s, L_h)`.
    pub model_fidelity_events: u64,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    config: MiningConfig,
    schedule: RewardSchedule,
    max_uncles_per_block: Option<usize>,
    blocks: Vec<Block>,
    referenced_by: Vec<SmallVec<[BlockId; 2]>>,
    main: Vec<BlockId>,
    private: Vec<BlockId>,
    published: usize,
    honest: Vec<BlockId>,
    open: Vec<BlockId>,
    state: ChainState,
    events: u64,
    pub checks: StepChecks,
}

/// The blocks a new block extends, as seen from `base`.
#[derive(Clone, Copy)]
enum Branch {
    Base,
    Private(usize),
    Honest,
}

impl Simulator {
    pub fn new(config: MiningConfig, schedule: RewardSchedule) -> Self {
        let genesis = Block {
            id: 0,
            parent: None,
            height: 0,
            miner: Miner::Honest,
            uncle_refs: SmallVec::new(),
            created_at: 0,
            published_at: Some(0),
            status: BlockStatus::Regular,
            pre_state: ChainState::ORIGIN,
        };
        Simulator {
            config,
            schedule,
            max_uncles_per_block: None,
            blocks: vec![genesis],
            referenced_by: vec![SmallVec::new()],
            main: vec![0],
            private: Vec::new(),
            published: 0,
            honest: Vec::new(),
            open: Vec::new(),
            state: ChainState::ORIGIN,
            events: 0,
            checks: StepChecks::default(),
        }
    }

    pub fn with_uncle_cap(mut self, cap: Option<usize>) -> Self {
        self.max_uncles_per_block = cap;
        self
    }

    pub fn config(&self) -> &MiningConfig {
        &self.config
    }

    pub fn state(&self) -> ChainState {
        self.state
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id as usize]
    }

    /// Whether any block created before event `limit` could still gain a reference.
    pub fn has_pending_candidates(&self, limit: u64) -> bool {
        self.open.iter().any(|&u| self.blocks[u as usize].created_at < limit)
    }

    fn base_height(&self) -> u32 {
        self.main.len() as u32 - 1
    }

    fn base(&self) -> BlockId {
        *self.main.last().expect("genesis")
    }

    fn branch(&self, b: Branch) -> &[BlockId] {
        match b {
            Branch::Base => &[],
            Branch::Private(k) => &self.private[..k],
            Branch::Honest => &self.honest,
        }
    }

    fn in_chain(&self, branch: Branch, x: BlockId) -> bool {
        let h = self.blocks[x as usize].height;
        let bh = self.base_height();
        if h <= bh {
            return self.main[h as usize] == x;
        }
        let path = self.branch(branch);
        path.get((h - bh - 1) as usize) == Some(&x)
    }

    fn on_main(&self, x: BlockId) -> bool {
        let h = self.blocks[x as usize].height as usize;
        h < self.main.len() && self.main[h] == x
    }

    fn is_published(&self, x: BlockId) -> bool {
        self.blocks[x as usize].published_at.is_some()
    }

    /// Unreferenced uncles a block mined on `branch` at `height` may include.
    fn eligible_uncles(&self, branch: Branch, height: u32, miner: Miner) -> SmallVec<[BlockId; 2]> {
        let mut out = SmallVec::new();
        for &u in &self.open {
            let ub = &self.blocks[u as usize];
            if miner == Miner::Honest && !self.is_published(u) {
                continue;
            }
            if height <= ub.height || !self.schedule.references(height - ub.height) {
                continue;
            }
            if self.in_chain(branch, u) || !self.in_chain(branch, ub.parent.expect("non-genesis")) {
                continue;
            }
            if self.referenced_by[u as usize].iter().any(|&r| self.in_chain(branch, r)) {
                continue;
            }
            out.push(u);
            if self.max_uncles_per_block.is_some_and(|cap| out.len() >= cap) {
                break;
            }
        }
        out
    }

    fn mine(&mut self, branch: Branch, miner: Miner) -> BlockId {
        let path = self.branch(branch);
        let parent = path.last().copied().unwrap_or_else(|| self.base());
        let height = self.blocks[parent as usize].height + 1;
        let refs = self.eligible_uncles(branch, height, miner);
        let id = self.blocks.len() as BlockId;
        for &u in &refs {
            self.referenced_by[u as usize].push(id);
        }
        self.blocks.push(Block {
            id,
            parent: Some(parent),
            height,
            miner,
            uncle_refs: refs,
            created_at: self.events,
            published_at: (miner == Miner::Honest).then_some(self.events),
            status: BlockStatus::Pending,
            pre_state: self.state,
        });
        self.referenced_by.push(SmallVec::new());
        // Only children of the main chain or of the pool's chain can become uncles.
        let parent_is_base = parent == self.base();
        let parent_private = matches!(branch, Branch::Private(_));
        if parent_is_base || (miner == Miner::Honest && parent_private) {
            self.open.push(id);
        }
        id
    }

    fn publish(&mut self, upto: usize, out: &mut Vec<BlockId>) {
        let now = self.events;
        for k in self.published..upto {
            let id = self.private[k];
            self.blocks[id as usize].published_at = Some(now);
            out.push(id);
        }
        self.published = self.published.max(upto);
    }

    /// Make `path` (blocks above the current base) part of the main chain.
    fn extend_main(&mut self, path: &[BlockId]) {
        self.main.extend_from_slice(path);
        let bh = self.base_height();
        let open = std::mem::take(&mut self.open);
        self.open = open
            .into_iter()
            .filter(|&u| {
                let ub = &self.blocks[u as usize];
                if self.on_main(u) {
                    return false;
                }
                let parent = ub.parent.expect("non-genesis");
                let parent_live = self.on_main(parent) || self.private.contains(&parent);
                let reachable = ub.height > bh || self.schedule.references(bh + 1 - ub.height);
                let settled = self.referenced_by[u as usize].iter().any(|&r| self.on_main(r));
                parent_live && reachable && !settled
            })
            .collect();
    }

    fn consensus(&mut self, path: Vec<BlockId>) {
        self.private.clear();
        self.honest.clear();
        self.published = 0;
        self.extend_main(&path);
        self.state = ChainState::ORIGIN;
    }

    /// Apply one event, following the strategy exactly.
    pub fn replay_step(&mut self, event: SimEvent) -> StepRecord {
        let pre = self.state;
        let (l_s, l_h) = (pre.l_s as usize, pre.l_h as usize);
        let mut published = Vec::new();
        let created;
        match event {
            SimEvent::PoolBlock => {
                created = self.mine(Branch::Private(l_s), Miner::Pool);
                self.private.push(created);
                self.state = ChainState::new(pre.l_s + 1, pre.l_h);
                if (l_s + 1, l_h) == (2, 1) {
                    self.publish(2, &mut published);
                    let path = self.private.clone();
                    self.consensus(path);
                }
            }
            SimEvent::HonestBlock { on_pool_branch } => {
                let on_prefix = l_h >= 1 && on_pool_branch;
                let branch = match (l_h, on_prefix) {
                    (0, _) => Branch::Base,
                    (_, true) => Branch::Private(self.published),
                    (_, false) => Branch::Honest,
                };
                created = self.mine(branch, Miner::Honest);
                let new_h = l_h + 1;
                if l_s < new_h {
                    let mut path = self.branch(branch).to_vec();
                    path.push(created);
                    self.consensus(path);
                } else if l_s == new_h {
                    self.publish(l_s, &mut published);
                    self.honest.push(created);
                    self.state = ChainState::new(pre.l_s, new_h as u32);
                } else if l_s == new_h + 1 {
                    self.publish(l_s, &mut published);
                    let path = self.private.clone();
                    self.consensus(path);
                } else {
                    self.publish(self.published + 1, &mut published);
                    if on_prefix {
                        let moved: Vec<BlockId> = self.private.drain(..l_h).collect();
                        self.published -= l_h;
                        self.honest.clear();
                        self.honest.push(created);
                        self.extend_main(&moved);
                        self.state = ChainState::new((l_s - new_h + 1) as u32, 1);
                    } else {
                        self.honest.push(created);
                        self.state = ChainState::new(pre.l_s, new_h as u32);
                    }
                }
            }
        }
        self.check_branches();
        let references = self.blocks[created as usize].uncle_refs.iter().map(|&u| (created, u)).collect();
        let record = StepRecord { index: self.events, event, pre, post: self.state, created, published, references };
        self.events += 1;
        record
    }

    /// Publish the whole private branch if it leads by at least two, so the
    /// honest miners adopt it and the state returns to `(0,0)`.
    pub fn release_private(&mut self) -> Option<Vec<BlockId>> {
        if self.state.lead() < 2 {
            return None;
        }
        let mut published = Vec::new();
        self.publish(self.private.len(), &mut published);
        let path = self.private.clone();
        self.consensus(path);
        Some(published)
    }

    fn check_branches(&mut self) {
        let (l_s, l_h) = (self.state.l_s as usize, self.state.l_h as usize);
        if self.honest.len() != self.published {
            self.checks.equal_length_violations += 1;
        }
        if self.private.len() != l_s || self.honest.len() != l_h {
            self.checks.model_fidelity_events += 1;
        }
    }

    /// Assign final statuses. Call only once the state is back at `(0,0)`.
    pub fn finalize(mut self) -> FinalizedTrace {
        let mut pool_uncle_distance_violations = 0;
        for k in 0..self.blocks.len() {
            let id = k as BlockId;
            let status = if self.on_main(id) {
                BlockStatus::Regular
            } else {
                match self.referenced_by[k].iter().find(|&&r| self.on_main(r)) {
                    Some(&r) => BlockStatus::Uncle(self.blocks[r as usize].height - self.blocks[k].height),
                    None => BlockStatus::Stale,
                }
            };
            if let (BlockStatus::Uncle(d), Miner::Pool) = (status, self.blocks[k].miner) {
                if d != 1 {
                    pool_uncle_distance_violations += 1;
                }
            }
            self.blocks[k].status = status;
        }
        let nephew =
            (0..self.blocks.len()).map(|k| self.referenced_by[k].iter().copied().find(|&r| self.on_main(r))).collect();
        FinalizedTrace { blocks: self.blocks, nephew, checks: self.checks, pool_uncle_distance_violations }
    }
}

/// Block tree with final statuses.
#[derive(Debug, Clone)]
pub struct FinalizedTrace {
    pub blocks: Vec<Block>,
    /// Main-chain block referencing each uncle.
    pub nephew: Vec<Option<BlockId>>,
    pub checks: StepChecks,
    pub pool_uncle_distance_violations: u64,
}

/// Every block mined from a state with lead at least two is regular exactly
/// when the pool mined it.
pub fn verify_lemma1(trace: &FinalizedTrace) -> bool {
    trace
        .blocks
        .iter()
        .skip(1)
        .filter(|b| b.pre_state.lead() >= 2)
        .all(|b| (b.status == BlockStatus::Regular) == (b.miner == Miner::Pool))
}

#[cfg(test)]
mod tests {
    use super::*;

    const POOL: SimEvent = SimEvent::PoolBlock;
    const HONEST: SimEvent = SimEvent::HonestBlock { on_pool_branch: false };
    const HONEST_ON_POOL: SimEvent = SimEvent::HonestBlock { on_pool_branch: true };

    fn sim() -> Simulator {
        Simulator::new(MiningConfig::new(0.3, 0.5), RewardSchedule::ethereum())
    }

    fn run(s: &mut Simulator, events: &[SimEvent]) -> Vec<StepRecord> {
        events.iter().map(|&e| s.replay_step(e)).collect()
    }

    #[test]
    fn walkthrough_three_block_lead() {
        let mut s = sim();
        run(&mut s, &[POOL, POOL, POOL]);
        assert_eq!(s.state(), ChainState::new(3, 0));
        let a1 = s.private[0];

        let r = s.replay_step(HONEST);
        assert_eq!(r.post, ChainState::new(3, 1));
        assert_eq!(r.published, vec![a1]);
        let a2 = r.created;

        let r = s.replay_step(HONEST);
        assert_eq!(r.pre, ChainState::new(3, 1));
        assert_eq!(r.post, ChainState::ORIGIN);
        let b2 = r.created;
        assert_eq!(r.published.len(), 2);

        let t = s.finalize();
        assert_eq!(t.blocks[a1 as usize].status, BlockStatus::Regular);
        assert_eq!(t.blocks[b2 as usize].status, BlockStatus::Stale);
        // A2 hangs off the main chain but nothing referenced it yet.
        assert_eq!(t.blocks[a2 as usize].status, BlockStatus::Stale);
        assert!(verify_lemma1(&t));
    }

    #[test]
    fn tie_then_pool_block_publishes() {
        let mut s = sim();
        run(&mut s, &[POOL]);
        let r = s.replay_step(HONEST);
        assert_eq!(r.post, ChainState::new(1, 1));
        let h1 = r.created;
        let r = s.replay_step(POOL);
        assert_eq!(r.pre, ChainState::new(1, 1));
        assert_eq!(r.post, ChainState::ORIGIN);
        assert_eq!(r.references, vec![(r.created, h1)]);
        let t = s.finalize();
        assert_eq!(t.blocks[h1 as usize].status, BlockStatus::Uncle(1));
    }

    #[test]
    fn tie_lost_by_pool() {
        let mut s = sim();
        let p1 = run(&mut s, &[POOL])[0].created;
        run(&mut s, &[HONEST]);
        let r = s.replay_step(HONEST);
        assert_eq!(r.post, ChainState::ORIGIN);
        assert_eq!(r.references, vec![(r.created, p1)]);
        let t = s.finalize();
        assert_eq!(t.blocks[p1 as usize].status, BlockStatus::Uncle(1));
        assert_eq!(t.pool_uncle_distance_violations, 0);
    }

    #[test]
    fn honest_block_on_prefix_moves_base() {
        let mut s = sim();
        run(&mut s, &[POOL, POOL, POOL, POOL, HONEST]);
        assert_eq!(s.state(), ChainState::new(4, 1));
        let r = s.replay_step(HONEST_ON_POOL);
        assert_eq!(r.post, ChainState::new(3, 1));
        assert_eq!(s.published, 1);
        assert_eq!(s.honest, vec![r.created]);
        assert_eq!(s.checks, StepChecks::default());
    }

    #[test]
    fn deep_fork_uncle_referenced_by_next_pool_block() {
        let mut s = sim();
        run(&mut s, &[POOL, POOL, POOL]);
        let h1 = s.replay_step(HONEST).created;
        let r = s.replay_step(POOL);
        assert_eq!(r.references, vec![(r.created, h1)]);
        run(&mut s, &[HONEST, HONEST, HONEST]);
        assert_eq!(s.state(), ChainState::ORIGIN);
        let t = s.finalize();
        assert_eq!(t.blocks[h1 as usize].status, BlockStatus::Uncle(3));
        assert!(verify_lemma1(&t));
    }

    #[test]
    fn lead_two_collapses_on_pool_block_after_tie() {
        let mut s = sim();
        run(&mut s, &[POOL, HONEST]);
        let r = s.replay_step(POOL);
        assert_eq!(r.post, ChainState::ORIGIN);
        assert_eq!(r.published.len(), 1);
    }

    #[test]
    fn forced_release_adopts_private_branch() {
        let mut s = sim();
        run(&mut s, &[POOL, HONEST]);
        assert_eq!(s.release_private(), None);
        run(&mut s, &[HONEST, POOL, POOL, POOL, HONEST]);
        assert_eq!(s.state(), ChainState::new(3, 1));
        let private = s.private.clone();
        let released = s.release_private().unwrap();
        assert_eq!(released, private[1..].to_vec());
        assert_eq!(s.state(), ChainState::ORIGIN);
        let t = s.finalize();
        assert!(private.iter().all(|&b| t.blocks[b as usize].status == BlockStatus::Regular));
        assert!(verify_lemma1(&t));
    }

    #[test]
    fn tampered_status_fails_lemma() {
        let mut s = sim();
        run(&mut s, &[POOL, POOL, POOL, HONEST, HONEST, POOL, HONEST, HONEST]);
        let mut t = s.finalize();
        assert!(verify_lemma1(&t));
        let k = t.blocks.iter().position(|b| b.pre_state.lead() >= 2 && b.miner == Miner::Pool).unwrap();
        t.blocks[k].status = BlockStatus::Stale;
        assert!(!verify_lemma1(&t));
    }

    #[test]
    fn uncles_beyond_limit_never_referenced() {
        let mut s = sim();
        run(&mut s, &[POOL; 9]);
        let h1 = s.replay_step(HONEST).created;
        let r = s.replay_step(POOL);
        assert!(r.references.is_empty());
        while s.state() != ChainState::ORIGIN {
            s.replay_step(HONEST);
        }
        run(&mut s, &[HONEST; 3]);
        let t = s.finalize();
        assert_eq!(t.blocks[h1 as usize].status, BlockStatus::Stale);
    }
}
