//! Ground-truth puzzle domains: state spaces, renderers, instance
//! samplers, classifiers and plan validators. This is the oracle side of
//! every experiment.

pub mod imageio;
pub mod swirl;
pub mod tiles;

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::bits::LatentBitVector;
use crate::error::{Error, Result};
use crate::ndcore::rng::RngStream;
use crate::ndcore::tensor::Tensor;
use swirl::{swirl as apply_swirl, unswirl};
use tiles::{TileSet, TILE};

pub const LIGHTSOUT_BLOCK: usize = 9;
pub const HANOI_ROW: usize = 4;
pub const HANOI_WIDTH: usize = 60;

/// A concrete puzzle configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PuzzleState {
    /// `tiles[cell]` is the tile id at that cell; tile 0 plays the blank.
    Puzzle8 { tiles: [u8; 9] },
    /// Bit `r * n + c` set iff the light at (r, c) is on.
    LightsOut { n: u8, grid: u32 },
    /// `pegs[disk]` is the peg (0..3) of each disk, smallest first.
    Hanoi { pegs: Vec<u8> },
}

/// Domain identity plus rendering parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Puzzle8,
    LightsOut { n: u8 },
    TwistedLightsOut { n: u8, strength: f32 },
    Hanoi { disks: u8 },
}

impl DomainSpec {
    pub fn name(&self) -> String {
        match self {
            DomainSpec::Puzzle8 => "puzzle8".into(),
            DomainSpec::LightsOut { n } => format!("lightsout{n}"),
            DomainSpec::TwistedLightsOut { n, .. } => format!("twisted{n}"),
            DomainSpec::Hanoi { disks } => format!("hanoi{disks}"),
        }
    }
}

/// A sampled planning instance: the goal plus an initial state reached by
/// a self-avoiding random walk, with both endpoint images rendered.
#[derive(Debug, Clone)]
pub struct Instance {
    pub init: PuzzleState,
    pub goal: PuzzleState,
    pub init_image: Tensor,
    pub goal_image: Tensor,
    pub walk_length: usize,
}

pub struct Domain {
    spec: DomainSpec,
    tiles: TileSet,
    /// Mean-abs-error ceiling for accepting a template match.
    classify_threshold: f32,
}

impl Domain {
    pub fn new(spec: DomainSpec) -> Self {
        let classify_threshold = match spec {
            // the twisted classifier sees an extra resampling round-trip
            DomainSpec::TwistedLightsOut { .. } => 0.30,
            _ => 0.25,
        };
        Domain { spec, tiles: TileSet::builtin(), classify_threshold }
    }

    pub fn with_tiles(spec: DomainSpec, tiles: TileSet) -> Self {
        let mut d = Domain::new(spec);
        d.tiles = tiles;
        d
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn tiles(&self) -> &TileSet {
        &self.tiles
    }

    /// Canonical image dimensions (H, W).
    pub fn image_dims(&self) -> (usize, usize) {
        match &self.spec {
            DomainSpec::Puzzle8 => (3 * TILE, 3 * TILE),
            DomainSpec::LightsOut { n } | DomainSpec::TwistedLightsOut { n, .. } => {
                (*n as usize * LIGHTSOUT_BLOCK, *n as usize * LIGHTSOUT_BLOCK)
            }
            DomainSpec::Hanoi { disks } => (*disks as usize * HANOI_ROW, HANOI_WIDTH),
        }
    }

    pub fn goal_state(&self) -> PuzzleState {
        match &self.spec {
            DomainSpec::Puzzle8 => PuzzleState::Puzzle8 { tiles: [0, 1, 2, 3, 4, 5, 6, 7, 8] },
            DomainSpec::LightsOut { n } | DomainSpec::TwistedLightsOut { n, .. } => {
                PuzzleState::LightsOut { n: *n, grid: 0 }
            }
            DomainSpec::Hanoi { disks } => {
                PuzzleState::Hanoi { pegs: vec![2; *disks as usize] }
            }
        }
    }

    pub fn check_state(&self, s: &PuzzleState) -> Result<()> {
        match (&self.spec, s) {
            (DomainSpec::Puzzle8, PuzzleState::Puzzle8 { tiles }) => {
                let mut seen = [false; 9];
                for &t in tiles {
                    if t > 8 || seen[t as usize] {
                        return Err(Error::InvalidState(format!(
                            "puzzle8 payload is not a permutation: {tiles:?}"
                        )));
                    }
                    seen[t as usize] = true;
                }
                Ok(())
            }
            (
                DomainSpec::LightsOut { n } | DomainSpec::TwistedLightsOut { n, .. },
                PuzzleState::LightsOut { n: sn, grid },
            ) => {
                let cells = (*n as u32) * (*n as u32);
                if sn != n || (cells < 32 && *grid >= (1u32 << cells)) {
                    return Err(Error::InvalidState(format!("bad lightsout state n={sn} grid={grid:#x}")));
                }
                Ok(())
            }
            (DomainSpec::Hanoi { disks }, PuzzleState::Hanoi { pegs }) => {
                if pegs.len() != *disks as usize || pegs.iter().any(|p| *p > 2) {
                    return Err(Error::InvalidState(format!("bad hanoi state {pegs:?}")));
                }
                Ok(())
            }
            _ => Err(Error::InvalidState("state kind does not match domain".into())),
        }
    }

    /// Exact ground-truth successor set.
    pub fn gt_successors(&self, s: &PuzzleState) -> Result<Vec<PuzzleState>> {
        self.check_state(s)?;
        Ok(match s {
            PuzzleState::Puzzle8 { tiles } => puzzle8_successors(tiles),
            PuzzleState::LightsOut { n, grid } => lightsout_successors(*n, *grid),
            PuzzleState::Hanoi { pegs } => hanoi_successors(pegs),
        })
    }

    /// Deterministic grayscale rendering at the canonical dimensions.
    pub fn render(&self, s: &PuzzleState) -> Tensor {
        match (&self.spec, s) {
            (DomainSpec::Puzzle8, PuzzleState::Puzzle8 { tiles }) => {
                render_puzzle8(tiles, &self.tiles)
            }
            (DomainSpec::LightsOut { .. }, PuzzleState::LightsOut { n, grid }) => {
                render_lightsout(*n, *grid)
            }
            (DomainSpec::TwistedLightsOut { strength, .. }, PuzzleState::LightsOut { n, grid }) => {
                let plain = render_lightsout(*n, *grid);
                let (h, w) = (plain.shape()[0], plain.shape()[1]);
                apply_swirl(&plain, *strength, 0.75 * h.min(w) as f32)
            }
            (DomainSpec::Hanoi { .. }, PuzzleState::Hanoi { pegs }) => render_hanoi(pegs),
            _ => panic!("state kind does not match domain"),
        }
    }

    /// Nearest-template classification; `None` rejects images that match
    /// no valid state well enough (duplicate tiles, blur, garbage).
    pub fn classify(&self, img: &Tensor) -> Option<PuzzleState> {
        let dims = self.image_dims();
        if img.shape() != [dims.0, dims.1] {
            return None;
        }
        match &self.spec {
            DomainSpec::Puzzle8 => classify_puzzle8(img, &self.tiles, self.classify_threshold),
            DomainSpec::LightsOut { n } => {
                classify_lightsout(img, *n, self.classify_threshold)
            }
            DomainSpec::TwistedLightsOut { n, strength } => {
                let (h, w) = (img.shape()[0], img.shape()[1]);
                let flat = unswirl(img, *strength, 0.75 * h.min(w) as f32);
                classify_lightsout(&flat, *n, self.classify_threshold)
            }
            DomainSpec::Hanoi { disks } => {
                classify_hanoi(img, *disks, self.classify_threshold)
            }
        }
    }

    /// True iff the state sequence starts at `init`, ends at `goal`, and
    /// every consecutive pair is a ground-truth transition. An empty
    /// sequence is valid exactly when `init == goal`.
    pub fn validate_plan(&self, init: &PuzzleState, goal: &PuzzleState, states: &[PuzzleState]) -> bool {
        if states.is_empty() {
            return init == goal;
        }
        if states[0] != *init || states[states.len() - 1] != *goal {
            return false;
        }
        for win in states.windows(2) {
            match self.gt_successors(&win[0]) {
                Ok(succs) if succs.contains(&win[1]) => {}
                _ => return false,
            }
        }
        true
    }

    /// Classifies a decoded image sequence and validates it as a plan.
    pub fn validate_image_plan(
        &self,
        init: &PuzzleState,
        goal: &PuzzleState,
        frames: &[Tensor],
    ) -> bool {
        let mut states = Vec::with_capacity(frames.len());
        for f in frames {
            match self.classify(f) {
                Some(s) => states.push(s),
                None => return false,
            }
        }
        self.validate_plan(init, goal, &states)
    }

    /// Instances built from self-avoiding random walks of exactly
    /// `walk_length` ground-truth steps away from the goal.
    pub fn sample_instances(
        &self,
        count: usize,
        walk_length: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<Instance>> {
        if walk_length == 0 {
            return Err(Error::InvalidState("walk_length must be at least 1".into()));
        }
        let goal = self.goal_state();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let init = self.self_avoiding_walk(&goal, walk_length, rng)?;
            out.push(Instance {
                init_image: self.render(&init),
                goal_image: self.render(&goal),
                init,
                goal: goal.clone(),
                walk_length,
            });
        }
        Ok(out)
    }

    fn self_avoiding_walk(
        &self,
        start: &PuzzleState,
        steps: usize,
        rng: &mut RngStream,
    ) -> Result<PuzzleState> {
        const MAX_RESTARTS: usize = 10_000;
        'restart: for _ in 0..MAX_RESTARTS {
            let mut visited: HashSet<PuzzleState> = HashSet::new();
            visited.insert(start.clone());
            let mut cur = start.clone();
            for _ in 0..steps {
                let fresh: Vec<PuzzleState> = self
                    .gt_successors(&cur)?
                    .into_iter()
                    .filter(|s| !visited.contains(s))
                    .collect();
                if fresh.is_empty() {
                    continue 'restart; // dead end: resample the whole walk
                }
                cur = fresh[rng.below(fresh.len())].clone();
                visited.insert(cur.clone());
            }
            return Ok(cur);
        }
        Err(Error::InvalidState(format!(
            "could not complete a {steps}-step self-avoiding walk"
        )))
    }

    /// Breadth-first distances from `start` over the ground-truth graph.
    pub fn bfs_distances(&self, start: &PuzzleState) -> Result<HashMap<PuzzleState, u32>> {
        let mut dist = HashMap::new();
        dist.insert(start.clone(), 0);
        let mut queue = VecDeque::new();
        queue.push_back(start.clone());
        while let Some(s) = queue.pop_front() {
            let d = dist[&s];
            for t in self.gt_successors(&s)? {
                if !dist.contains_key(&t) {
                    dist.insert(t.clone(), d + 1);
                    queue.push_back(t);
                }
            }
        }
        Ok(dist)
    }

    /// Shortest ground-truth path length, if reachable.
    pub fn bfs_distance(&self, from: &PuzzleState, to: &PuzzleState) -> Result<Option<u32>> {
        if from == to {
            return Ok(Some(0));
        }
        let mut dist = HashMap::new();
        dist.insert(from.clone(), 0u32);
        let mut queue = VecDeque::new();
        queue.push_back(from.clone());
        while let Some(s) = queue.pop_front() {
            let d = dist[&s];
            for t in self.gt_successors(&s)? {
                if !dist.contains_key(&t) {
                    if t == *to {
                        return Ok(Some(d + 1));
                    }
                    dist.insert(t.clone(), d + 1);
                    queue.push_back(t);
                }
            }
        }
        Ok(None)
    }

    /// Every state reachable from the goal.
    pub fn reachable_states(&self) -> Result<Vec<PuzzleState>> {
        let dist = self.bfs_distances(&self.goal_state())?;
        let mut states: Vec<PuzzleState> = dist.into_keys().collect();
        states.sort();
        Ok(states)
    }

    /// Every directed ground-truth transition among the reachable states.
    pub fn reachable_transitions(&self) -> Result<Vec<(PuzzleState, PuzzleState)>> {
        let states = self.reachable_states()?;
        let mut out = Vec::new();
        for s in &states {
            for t in self.gt_successors(s)? {
                out.push((s.clone(), t));
            }
        }
        Ok(out)
    }

    /// Width of the lossless ground-truth bit encoding.
    pub fn gt_encode_bits(&self) -> usize {
        match &self.spec {
            DomainSpec::Puzzle8 => 36,
            DomainSpec::LightsOut { n } | DomainSpec::TwistedLightsOut { n, .. } => {
                (*n as usize) * (*n as usize)
            }
            DomainSpec::Hanoi { disks } => 2 * *disks as usize,
        }
    }

    /// Injective bit encoding of a state: the "perfect" stand-in for a
    /// learned encoder in symbolic experiments.
    pub fn gt_encode(&self, s: &PuzzleState) -> LatentBitVector {
        let mut v = LatentBitVector::zeros(self.gt_encode_bits());
        match s {
            PuzzleState::Puzzle8 { tiles } => {
                for (cell, &t) in tiles.iter().enumerate() {
                    for b in 0..4 {
                        if (t >> b) & 1 == 1 {
                            v.set(cell * 4 + b, true);
                        }
                    }
                }
            }
            PuzzleState::LightsOut { n, grid } => {
                for j in 0..(*n as usize * *n as usize) {
                    if (grid >> j) & 1 == 1 {
                        v.set(j, true);
                    }
                }
            }
            PuzzleState::Hanoi { pegs } => {
                for (disk, &p) in pegs.iter().enumerate() {
                    if p & 1 == 1 {
                        v.set(disk * 2, true);
                    }
                    if (p >> 1) & 1 == 1 {
                        v.set(disk * 2 + 1, true);
                    }
                }
            }
        }
        v
    }

    /// Inverse of `gt_encode`; `None` when the bits decode to no valid state.
    pub fn gt_decode(&self, bits: &LatentBitVector) -> Option<PuzzleState> {
        if bits.len() != self.gt_encode_bits() {
            return None;
        }
        let s = match &self.spec {
            DomainSpec::Puzzle8 => {
                let mut tiles = [0u8; 9];
                for (cell, t) in tiles.iter_mut().enumerate() {
                    let mut val = 0u8;
                    for b in 0..4 {
                        if bits.get(cell * 4 + b) {
                            val |= 1 << b;
                        }
                    }
                    *t = val;
                }
                PuzzleState::Puzzle8 { tiles }
            }
            DomainSpec::LightsOut { n } | DomainSpec::TwistedLightsOut { n, .. } => {
                let mut grid = 0u32;
                for j in 0..(*n as usize * *n as usize) {
                    if bits.get(j) {
                        grid |= 1 << j;
                    }
                }
                PuzzleState::LightsOut { n: *n, grid }
            }
            DomainSpec::Hanoi { disks } => {
                let mut pegs = vec![0u8; *disks as usize];
                for (disk, p) in pegs.iter_mut().enumerate() {
                    let mut val = 0u8;
                    if bits.get(disk * 2) {
                        val |= 1;
                    }
                    if bits.get(disk * 2 + 1) {
                        val |= 2;
                    }
                    *p = val;
                }
                PuzzleState::Hanoi { pegs }
            }
        };
        self.check_state(&s).ok().map(|_| s)
    }
}

// ── puzzle8 rules ──────────────────────────────────────────────────────

fn puzzle8_successors(tiles: &[u8; 9]) -> Vec<PuzzleState> {
    let blank = tiles.iter().position(|&t| t == 0).expect("validated") as i32;
    let (r, c) = (blank / 3, blank % 3);
    let mut out = Vec::with_capacity(4);
    for (dr, dc) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
        let (nr, nc) = (r + dr, c + dc);
        if (0..3).contains(&nr) && (0..3).contains(&nc) {
            let mut next = *tiles;
            next.swap((r * 3 + c) as usize, (nr * 3 + nc) as usize);
            out.push(PuzzleState::Puzzle8 { tiles: next });
        }
    }
    out
}

fn render_puzzle8(tiles: &[u8; 9], assets: &TileSet) -> Tensor {
    let side = 3 * TILE;
    let mut img = vec![0.0f32; side * side];
    for (cell, &t) in tiles.iter().enumerate() {
        let (r, c) = (cell / 3, cell % 3);
        let tile = assets.tile(t as usize).data();
        for y in 0..TILE {
            for x in 0..TILE {
                img[(r * TILE + y) * side + c * TILE + x] = tile[y * TILE + x];
            }
        }
    }
    Tensor::new(vec![side, side], img)
}

fn classify_puzzle8(img: &Tensor, assets: &TileSet, threshold: f32) -> Option<PuzzleState> {
    let side = 3 * TILE;
    let mut tiles = [0u8; 9];
    let mut seen = [false; 9];
    for cell in 0..9 {
        let (r, c) = (cell / 3, cell % 3);
        let mut patch = vec![0.0f32; TILE * TILE];
        for y in 0..TILE {
            for x in 0..TILE {
                patch[y * TILE + x] = img.data()[(r * TILE + y) * side + c * TILE + x];
            }
        }
        let (mut best, mut best_err) = (0usize, f32::INFINITY);
        for t in 0..9 {
            let err = assets.match_error(&patch, t);
            if err < best_err {
                best = t;
                best_err = err;
            }
        }
        if best_err > threshold || seen[best] {
            return None; // unrecognizable patch or duplicated tile
        }
        seen[best] = true;
        tiles[cell] = best as u8;
    }
    Some(PuzzleState::Puzzle8 { tiles })
}

// ── lightsout rules ────────────────────────────────────────────────────

/// Press mask: the cell plus its orthogonal neighbors.
fn lightsout_press_mask(n: u8, cell: usize) -> u32 {
    let n = n as usize;
    let (r, c) = (cell / n, cell % n);
    let mut mask = 1u32 << cell;
    if r > 0 {
        mask |= 1 << (cell - n);
    }
    if r + 1 < n {
        mask |= 1 << (cell + n);
    }
    if c > 0 {
        mask |= 1 << (cell - 1);
    }
    if c + 1 < n {
        mask |= 1 << (cell + 1);
    }
    mask
}

fn lightsout_successors(n: u8, grid: u32) -> Vec<PuzzleState> {
    let cells = n as usize * n as usize;
    (0..cells)
        .map(|cell| PuzzleState::LightsOut { n, grid: grid ^ lightsout_press_mask(n, cell) })
        .collect()
}

fn render_lightsout(n: u8, grid: u32) -> Tensor {
    let n = n as usize;
    let side = n * LIGHTSOUT_BLOCK;
    let mut img = vec![0.0f32; side * side];
    for r in 0..n {
        for c in 0..n {
            if (grid >> (r * n + c)) & 1 == 1 {
                // "+" shape: 3px arms with a 1px margin
                for y in 0..LIGHTSOUT_BLOCK {
                    for x in 0..LIGHTSOUT_BLOCK {
                        let vertical = (3..=5).contains(&x) && (1..=7).contains(&y);
                        let horizontal = (3..=5).contains(&y) && (1..=7).contains(&x);
                        if vertical || horizontal {
                            img[(r * LIGHTSOUT_BLOCK + y) * side + c * LIGHTSOUT_BLOCK + x] = 1.0;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![side, side], img)
}

fn classify_lightsout(img: &Tensor, n: u8, threshold: f32) -> Option<PuzzleState> {
    let nn = n as usize;
    let side = nn * LIGHTSOUT_BLOCK;
    let on_template = render_lightsout(1, 1);
    let off_template = render_lightsout(1, 0);
    let mut grid = 0u32;
    for r in 0..nn {
        for c in 0..nn {
            let mut patch = vec![0.0f32; LIGHTSOUT_BLOCK * LIGHTSOUT_BLOCK];
            for y in 0..LIGHTSOUT_BLOCK {
                for x in 0..LIGHTSOUT_BLOCK {
                    patch[y * LIGHTSOUT_BLOCK + x] =
                        img.data()[(r * LIGHTSOUT_BLOCK + y) * side + c * LIGHTSOUT_BLOCK + x];
                }
            }
            let err_on = mean_abs_diff(&patch, on_template.data());
            let err_off = mean_abs_diff(&patch, off_template.data());
            if err_on.min(err_off) > threshold {
                return None;
            }
            if err_on < err_off {
                grid |= 1 << (r * nn + c);
            }
        }
    }
    Some(PuzzleState::LightsOut { n, grid })
}

fn mean_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += (x - y).abs();
    }
    acc / a.len() as f32
}

// ── hanoi rules ────────────────────────────────────────────────────────

fn hanoi_successors(pegs: &[u8]) -> Vec<PuzzleState> {
    // top disk of a peg = the smallest disk on it
    let top_of = |peg: u8| pegs.iter().position(|&p| p == peg);
    let mut out = Vec::new();
    for from in 0..3u8 {
        if let Some(disk) = top_of(from) {
            for to in 0..3u8 {
                if to == from {
                    continue;
                }
                // legal when the destination is empty or its top is larger
                let ok = match top_of(to) {
                    Some(dest_top) => dest_top > disk,
                    None => true,
                };
                if ok {
                    let mut next = pegs.to_vec();
                    next[disk] = to;
                    out.push(PuzzleState::Hanoi { pegs: next });
                }
            }
        }
    }
    out
}

fn hanoi_disk_width(disks: usize, disk: usize) -> usize {
    let peg_w = HANOI_WIDTH / 3;
    peg_w.saturating_sub(4 * (disks - 1 - disk)).max(4)
}

fn render_hanoi(pegs: &[u8]) -> Tensor {
    let d = pegs.len();
    let h = d * HANOI_ROW;
    let mut img = vec![0.0f32; h * HANOI_WIDTH];
    let peg_w = HANOI_WIDTH / 3;
    for peg in 0..3u8 {
        // disks on this peg, largest first, stacked bottom-up
        let mut stack: Vec<usize> = (0..d).filter(|&k| pegs[k] == peg).collect();
        stack.sort_by(|a, b| b.cmp(a));
        for (height, &disk) in stack.iter().enumerate() {
            let wd = hanoi_disk_width(d, disk);
            let cx = peg as usize * peg_w + peg_w / 2;
            let x0 = cx - wd / 2;
            let y0 = h - HANOI_ROW * (height + 1);
            for y in y0..y0 + HANOI_ROW {
                for x in x0..x0 + wd {
                    img[y * HANOI_WIDTH + x] = 1.0;
                }
            }
        }
    }
    Tensor::new(vec![h, HANOI_WIDTH], img)
}

fn classify_hanoi(img: &Tensor, disks: u8, threshold: f32) -> Option<PuzzleState> {
    // the state space is tiny (3^d), so match against every rendering
    let d = disks as usize;
    let mut best: Option<(f32, PuzzleState)> = None;
    let total = 3usize.pow(disks as u32);
    for code in 0..total {
        let mut pegs = vec![0u8; d];
        let mut c = code;
        for p in pegs.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        let state = PuzzleState::Hanoi { pegs };
        let template = render_hanoi(match &state {
            PuzzleState::Hanoi { pegs } => pegs,
            _ => unreachable!(),
        });
        let err = mean_abs_diff(img.data(), template.data());
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, state));
        }
    }
    match best {
        Some((err, state)) if err <= threshold => Some(state),
        _ => None,
    }
}
