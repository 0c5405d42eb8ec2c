//! The beam-curve dynamic program.
//!
//! Every tile keeps one curve per unordered pair of its boundary pixels that
//! do not share a side. Leaves store the straight segment between the two
//! pixels. An internal tile starts from its children's curves whose
//! endpoints both lie on its own boundary, then for every pair `(p1, p2)`
//! with `p1` in the first child and `p2` in the second it tries each
//! junction `p3` on the interface, concatenating the first child's
//! `p1 → p3` curve with the second child's `p3 → p2` curve, and keeps the
//! best one. In [`MergeMode::Optimized`] only the `k` interface pixels with
//! the best incoming curves are tried.
//!
//! Stores hold no pixel chains. An entry records how it was made (segment,
//! inherited from a child, or concatenated at interface position `t`), so a
//! chain is rebuilt on demand by walking down the tree. To reject
//! concatenations that would revisit a pixel, each entry also lists the
//! boundary pixels of its tile that the curve touches away from its
//! endpoints; two sub-curves can only meet on the interface, so comparing
//! those lists is exact.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::partition::{PartitionTree, Pixel, Rect};
use crate::response::{bresenham, line_sums, FilterParams, ResponseVector};
use crate::scoring::ThresholdParams;

/// Which interface pixels a merge scans.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergeMode {
    /// Every interface pixel.
    Basic,
    /// The `k` interface pixels with the best incoming child curves.
    Optimized { k: usize },
}

impl MergeMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MergeMode::Optimized { k: 0 } => Err(Error::invalid("best-k mode needs k >= 1")),
            _ => Ok(()),
        }
    }
}

/// What "best curve" means when several candidates compete for one pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Selection {
    /// Highest edge score `|C| - T(L)`.
    Score(ThresholdParams),
    /// Highest `|C|`, ignoring length. Used to measure pure-noise maxima.
    MaxContrast,
}

// Ranking key of a candidate (r, len) with ties broken by larger |C|, then
// shorter length.
#[derive(Clone, Copy)]
struct Ranker {
    inv_w: f64,
    // T(L)^2 = k * (a / L + b)
    k: f64,
    a: f64,
    b: f64,
    score: bool,
}

impl Ranker {
    fn new(selection: &Selection, filter: FilterParams) -> Self {
        let inv_w = 1.0 / filter.w as f64;
        match *selection {
            Selection::Score(p) => {
                let (k, a, b) = p.threshold_coefficients();
                Ranker {
                    inv_w,
                    k,
                    a,
                    b,
                    score: true,
                }
            }
            Selection::MaxContrast => Ranker {
                inv_w,
                k: 0.0,
                a: 0.0,
                b: 0.0,
                score: false,
            },
        }
    }

    #[inline]
    fn contrast(&self, r: f64, len: f64) -> f64 {
        r.abs() * self.inv_w / len
    }

    #[inline]
    fn key(&self, r: f64, len: f64) -> f64 {
        let c = self.contrast(r, len);
        if self.score {
            c - (self.k * (self.a / len + self.b)).sqrt()
        } else {
            c
        }
    }

    #[inline]
    fn better(&self, key: f64, r: f64, len: f64, old_key: f64, old_r: f64, old_len: f64) -> bool {
        if key != old_key {
            return key > old_key;
        }
        let (c, old_c) = (self.contrast(r, len), self.contrast(old_r, old_len));
        if c != old_c {
            return c > old_c;
        }
        len < old_len
    }
}

const SRC_LEAF: u32 = u32::MAX - 1;
const SRC_CHILD1: u32 = u32::MAX - 2;
const SRC_CHILD2: u32 = u32::MAX - 3;
const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Entry {
    // response oriented from the lower to the higher boundary position
    r: f64,
    // 0 marks an empty slot
    len: f64,
    // SRC_* or (interface position << 1 | lower endpoint lies in child 1)
    src: u32,
    // 1-based index into the touch spans, 0 for none
    touch: u32,
}

const EMPTY: Entry = Entry {
    r: 0.0,
    len: 0.0,
    src: NONE,
    touch: 0,
};

#[inline]
fn tri(i: usize, j: usize) -> usize {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    hi * (hi - 1) / 2 + lo
}

#[inline]
fn tri_len(b: usize) -> usize {
    b * b.saturating_sub(1) / 2
}

/// Work done on one tile.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TileStats {
    pub concatenations: u64,
    pub stored: u64,
    pub selection_ops: u64,
}

/// Best curves of one tile, keyed by unordered pairs of boundary positions.
#[derive(Clone, Debug)]
pub struct TileStore {
    bounds: Rect,
    entries: Vec<Entry>,
    touch_spans: Vec<(u32, u32)>,
    touch_pool: Vec<u32>,
    stats: TileStats,
}

impl TileStore {
    fn new(bounds: Rect) -> Self {
        TileStore {
            bounds,
            entries: vec![EMPTY; tri_len(bounds.boundary_len())],
            touch_spans: Vec::new(),
            touch_pool: Vec::new(),
            stats: TileStats::default(),
        }
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn stats(&self) -> TileStats {
        self.stats
    }

    /// Number of stored curves.
    pub fn len(&self) -> usize {
        self.stats.stored as usize
    }

    pub fn is_empty(&self) -> bool {
        self.stats.stored == 0
    }

    /// Response (oriented `p1 → p2`) and length of the stored curve between
    /// two boundary pixels.
    pub fn get(&self, p1: Pixel, p2: Pixel) -> Option<(f64, f64)> {
        let i = self.bounds.boundary_index(p1)?;
        let j = self.bounds.boundary_index(p2)?;
        self.get_pos(i, j)
    }

    fn get_pos(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        if i == j {
            return None;
        }
        let e = self.entries[tri(i, j)];
        (e.len > 0.0).then(|| (if i < j { e.r } else { -e.r }, e.len))
    }

    /// `(i, j, r, len)` for every stored curve, `i < j`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let b = self.bounds.boundary_len();
        (1..b).flat_map(move |j| {
            (0..j).filter_map(move |i| {
                let e = self.entries[tri(i, j)];
                (e.len > 0.0).then_some((i, j, e.r, e.len))
            })
        })
    }

    fn touches(&self, e: &Entry) -> &[u32] {
        if e.touch == 0 {
            return &[];
        }
        let (start, len) = self.touch_spans[e.touch as usize - 1];
        &self.touch_pool[start as usize..(start + len) as usize]
    }

    fn push_touches(&mut self, list: &mut Vec<u32>) -> u32 {
        if list.is_empty() {
            return 0;
        }
        list.sort_unstable();
        list.dedup();
        let start = self.touch_pool.len() as u32;
        self.touch_pool.extend_from_slice(list);
        self.touch_spans.push((start, list.len() as u32));
        self.touch_spans.len() as u32
    }

    fn finish(&mut self) {
        self.stats.stored = self.entries.iter().filter(|e| e.len > 0.0).count() as u64;
    }
}

/// Fills a leaf with the straight segment between every pair of boundary
/// pixels on different sides.
pub fn bottom_level(bounds: Rect, img: &Image, filter: FilterParams) -> TileStore {
    let mut store = TileStore::new(bounds);
    let b = bounds.boundary_len();
    let pixels = bounds.boundary();
    let mut scratch = Vec::new();
    for j in 1..b {
        for i in 0..j {
            if bounds.share_side(i, j) {
                continue;
            }
            let (r, len) = line_sums(img, pixels[i], pixels[j], filter.w);
            scratch.clear();
            let chain = bresenham(pixels[i], pixels[j]);
            for p in &chain[1..chain.len() - 1] {
                if let Some(pos) = bounds.boundary_index(*p) {
                    scratch.push(pos as u32);
                }
            }
            let touch = store.push_touches(&mut scratch);
            store.entries[tri(i, j)] = Entry {
                r,
                len,
                src: SRC_LEAF,
                touch,
            };
        }
    }
    store.finish();
    store
}

// Index maps between a tile, its children and their interface.
struct MergeGeometry {
    // (parent position, child position) of boundary pixels of both the tile
    // and the child, interface pixels excluded
    outer1: Vec<(u32, u32)>,
    outer2: Vec<(u32, u32)>,
    // (child 1 position, child 2 position) along the interface
    iface: Vec<(u32, u32)>,
    // child position -> parent position or NONE
    up1: Vec<u32>,
    up2: Vec<u32>,
    // child position -> interface position or NONE
    on_iface1: Vec<u32>,
    on_iface2: Vec<u32>,
    // interface position -> parent position or NONE
    iface_up: Vec<u32>,
}

impl MergeGeometry {
    fn new(v: Rect, r1: Rect, r2: Rect, line: &[Pixel]) -> Self {
        let up = |r: &Rect| -> Vec<u32> {
            (0..r.boundary_len())
                .map(|i| v.boundary_index(r.boundary_pixel(i)).map_or(NONE, |p| p as u32))
                .collect()
        };
        let (up1, up2) = (up(&r1), up(&r2));
        let mut on_iface1 = vec![NONE; r1.boundary_len()];
        let mut on_iface2 = vec![NONE; r2.boundary_len()];
        let mut iface = Vec::with_capacity(line.len());
        let mut iface_up = Vec::with_capacity(line.len());
        for (t, p) in line.iter().enumerate() {
            let a = r1.boundary_index(*p).expect("interface lies on child 1 boundary");
            let b = r2.boundary_index(*p).expect("interface lies on child 2 boundary");
            on_iface1[a] = t as u32;
            on_iface2[b] = t as u32;
            iface.push((a as u32, b as u32));
            iface_up.push(v.boundary_index(*p).map_or(NONE, |q| q as u32));
        }
        let outer = |r: &Rect, upc: &[u32], on: &[u32]| -> Vec<(u32, u32)> {
            let mut out: Vec<(u32, u32)> = (0..r.boundary_len())
                .filter(|&i| upc[i] != NONE && on[i] == NONE)
                .map(|i| (upc[i], i as u32))
                .collect();
            out.sort_unstable();
            out
        };
        let outer1 = outer(&r1, &up1, &on_iface1);
        let outer2 = outer(&r2, &up2, &on_iface2);
        MergeGeometry {
            outer1,
            outer2,
            iface,
            up1,
            up2,
            on_iface1,
            on_iface2,
            iface_up,
        }
    }
}

#[derive(Clone, Copy)]
struct Half {
    r: f64,
    len: f64,
    touch: u32,
}

const NO_HALF: Half = Half {
    r: 0.0,
    len: 0.0,
    touch: 0,
};

/// Interface positions to scan in best-k mode: the `k` pixels whose best
/// incoming child curve ranks highest, returned in interface order. Ties
/// go to the earlier pixel. The two end pixels of the interface are left
/// out unless fewer than `k` others remain.
pub fn best_pixels(
    line_len: usize,
    child1: &TileStore,
    child2: &TileStore,
    line: &[Pixel],
    k: usize,
    selection: &Selection,
    filter: FilterParams,
) -> Vec<usize> {
    let ranker = Ranker::new(selection, filter);
    let mut ops = 0u64;
    best_pixels_inner(line_len, child1, child2, line, k, &ranker, &mut ops)
}

fn best_pixels_inner(
    line_len: usize,
    child1: &TileStore,
    child2: &TileStore,
    line: &[Pixel],
    k: usize,
    ranker: &Ranker,
    ops: &mut u64,
) -> Vec<usize> {
    if k >= line_len {
        return (0..line_len).collect();
    }
    let best_at = |store: &TileStore, p: Pixel, ops: &mut u64| -> f64 {
        let Some(c) = store.bounds.boundary_index(p) else {
            return f64::NEG_INFINITY;
        };
        let b = store.bounds.boundary_len();
        *ops += b as u64;
        (0..b)
            .filter(|&j| j != c)
            .map(|j| store.entries[tri(c, j)])
            .filter(|e| e.len > 0.0)
            .map(|e| ranker.key(e.r, e.len))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    // The two ends of the interface lie on the parent's boundary, where a
    // junction only serves pairs away from that corner; they compete only
    // when there are too few inner pixels.
    let inner = if line_len >= k + 2 { 1..line_len - 1 } else { 0..line_len };
    let mut ranked: Vec<(f64, usize)> = line[inner.clone()]
        .iter()
        .zip(inner)
        .map(|(&p, t)| {
            let (a, b) = (best_at(child1, p, ops), best_at(child2, p, ops));
            (a.max(b), t)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = ranked[..k].iter().map(|&(_, t)| t).collect();
    chosen.sort_unstable();
    *ops += (line_len as f64 * (k as f64).log2().max(1.0)) as u64;
    chosen
}

/// Fills an internal tile from its two children.
#[allow(clippy::too_many_arguments)]
pub fn coarser_level(
    v: Rect,
    line: &[Pixel],
    child1: &TileStore,
    child2: &TileStore,
    mode: MergeMode,
    selection: &Selection,
    filter: FilterParams,
) -> TileStore {
    let ranker = Ranker::new(selection, filter);
    let g = MergeGeometry::new(v, child1.bounds, child2.bounds, line);
    let mut store = TileStore::new(v);
    let mut scratch: Vec<u32> = Vec::new();

    // Curves of either child whose endpoints both lie on this tile's boundary.
    let mut keys = vec![f64::NEG_INFINITY; store.entries.len()];
    for (child, up, src) in [(child1, &g.up1, SRC_CHILD1), (child2, &g.up2, SRC_CHILD2)] {
        let b = child.bounds.boundary_len();
        for j in 1..b {
            let pj = up[j];
            if pj == NONE {
                continue;
            }
            for i in 0..j {
                let pi = up[i];
                if pi == NONE {
                    continue;
                }
                let (pi, pj) = (pi as usize, pj as usize);
                if pi == pj || v.share_side(pi, pj) {
                    continue;
                }
                let e = child.entries[tri(i, j)];
                if e.len <= 0.0 {
                    continue;
                }
                let r = if pi < pj { e.r } else { -e.r };
                let slot = tri(pi, pj);
                let key = ranker.key(r, e.len);
                let old = store.entries[slot];
                if old.len > 0.0 && !ranker.better(key, r, e.len, keys[slot], old.r, old.len) {
                    continue;
                }
                scratch.clear();
                scratch.extend(child.touches(&e).iter().map(|&q| up[q as usize]).filter(|&q| q != NONE));
                let touch = store.push_touches(&mut scratch);
                store.entries[slot] = Entry {
                    r,
                    len: e.len,
                    src,
                    touch,
                };
                keys[slot] = key;
            }
        }
    }

    let set: Vec<usize> = match mode {
        MergeMode::Basic => (0..line.len()).collect(),
        MergeMode::Optimized { k } => {
            best_pixels_inner(line.len(), child1, child2, line, k, &ranker, &mut store.stats.selection_ops)
        }
    };
    let n_set = set.len();

    // Second halves p3 -> p2 for every p2, laid out contiguously per p2.
    let mut halves2 = vec![NO_HALF; g.outer2.len() * n_set];
    for (q, &(_, c2)) in g.outer2.iter().enumerate() {
        for (s, &t) in set.iter().enumerate() {
            let p3 = g.iface[t].1 as usize;
            let e = child2.entries[tri(p3, c2 as usize)];
            if e.len > 0.0 {
                halves2[q * n_set + s] = Half {
                    r: if p3 < c2 as usize { e.r } else { -e.r },
                    len: e.len,
                    touch: e.touch,
                };
            }
        }
    }

    let mut halves1 = vec![NO_HALF; n_set];
    let mut concatenations = 0u64;
    for &(a, c1) in &g.outer1 {
        let mut any = false;
        for (s, &t) in set.iter().enumerate() {
            let p3 = g.iface[t].0 as usize;
            let e = child1.entries[tri(c1 as usize, p3)];
            halves1[s] = if e.len > 0.0 {
                any = true;
                Half {
                    r: if (c1 as usize) < p3 { e.r } else { -e.r },
                    len: e.len,
                    touch: e.touch,
                }
            } else {
                NO_HALF
            };
        }
        if !any {
            continue;
        }
        for (q, &(b, _)) in g.outer2.iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            if a == b || v.share_side(a, b) {
                continue;
            }
            let row2 = &halves2[q * n_set..(q + 1) * n_set];
            let mut best: Option<(usize, f64, f64, f64)> = None;
            for s in 0..n_set {
                let h1 = halves1[s];
                let h2 = row2[s];
                if h1.len <= 0.0 || h2.len <= 0.0 {
                    continue;
                }
                concatenations += 1;
                if h1.touch != 0 && h2.touch != 0 && crosses(child1, h1.touch, &g.on_iface1, child2, h2.touch, &g.on_iface2) {
                    continue;
                }
                let r = h1.r + h2.r;
                let len = h1.len + h2.len;
                let key = ranker.key(r, len);
                let take = match best {
                    None => true,
                    Some((_, bk, br, bl)) => ranker.better(key, r, len, bk, br, bl),
                };
                if take {
                    best = Some((s, key, r, len));
                }
            }
            let Some((s, key, r, len)) = best else {
                continue;
            };
            let slot = tri(a, b);
            let old = store.entries[slot];
            if old.len > 0.0 && !ranker.better(key, r, len, keys[slot], old.r, old.len) {
                continue;
            }
            let t = set[s];
            let (h1, h2) = (halves1[s], halves2[q * n_set + s]);
            scratch.clear();
            if h1.touch != 0 {
                let e = Entry { touch: h1.touch, ..EMPTY };
                scratch.extend(child1.touches(&e).iter().map(|&p| g.up1[p as usize]));
            }
            if h2.touch != 0 {
                let e = Entry { touch: h2.touch, ..EMPTY };
                scratch.extend(child2.touches(&e).iter().map(|&p| g.up2[p as usize]));
            }
            scratch.push(g.iface_up[t]);
            scratch.retain(|&p| p != NONE && p as usize != a && p as usize != b);
            let touch = store.push_touches(&mut scratch);
            store.entries[slot] = Entry {
                r: if a < b { r } else { -r },
                len,
                src: (t as u32) << 1 | (a < b) as u32,
                touch,
            };
            keys[slot] = key;
        }
    }
    store.stats.concatenations = concatenations;
    store.finish();
    store
}

// Whether two half curves share an interface pixel besides the junction.
fn crosses(c1: &TileStore, t1: u32, on1: &[u32], c2: &TileStore, t2: u32, on2: &[u32]) -> bool {
    let l1 = c1.touches(&Entry { touch: t1, ..EMPTY });
    let l2 = c2.touches(&Entry { touch: t2, ..EMPTY });
    l1.iter()
        .map(|&p| on1[p as usize])
        .filter(|&t| t != NONE)
        .any(|t| l2.iter().any(|&q| on2[q as usize] == t))
}

/// Totals for one level of the tree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LevelCounts {
    pub tiles: u64,
    pub concatenations: u64,
    pub stored: u64,
    pub selection_ops: u64,
}

/// Operation counts of one build, exact regardless of threading.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub concatenations: u64,
    pub stored: u64,
    pub selection_ops: u64,
    pub per_level: Vec<LevelCounts>,
}

/// Options of [`BeamTree::build`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub n_min: usize,
    pub filter: FilterParams,
    pub mode: MergeMode,
    pub selection: Selection,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// Handle to one stored curve: tile id and the two boundary positions,
/// `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CurveHandle {
    pub tile: usize,
    pub lo: usize,
    pub hi: usize,
}

/// A straight piece of a stored curve; `r` is oriented `from → to`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub from: Pixel,
    pub to: Pixel,
    pub r: f64,
    pub len: f64,
}

/// A positive-score curve found by [`BeamTree::collect_curves`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredCurve {
    pub handle: CurveHandle,
    pub score: f64,
    pub c: f64,
    pub len: f64,
}

/// The built tree: partition, per-tile stores and counters.
#[derive(Debug)]
pub struct BeamTree {
    partition: PartitionTree,
    stores: Vec<TileStore>,
    filter: FilterParams,
    counters: OpCounters,
}

// Subtrees smaller than this are built on the calling thread.
const PARALLEL_AREA: usize = 32 * 32;

impl BeamTree {
    pub fn build(img: &Image, opts: &BuildOptions) -> Result<BeamTree> {
        opts.mode.validate()?;
        if opts.filter.w == 0 {
            return Err(Error::invalid("filter width must be at least 1"));
        }
        if let Selection::Score(p) = opts.selection {
            p.validate()?;
            if p.w != opts.filter.w {
                return Err(Error::invalid(format!(
                    "threshold width {} differs from filter width {}",
                    p.w, opts.filter.w
                )));
            }
        }
        let partition = PartitionTree::build(img.width(), img.height(), opts.n_min)?;
        let slots: Vec<OnceLock<TileStore>> = (0..partition.len()).map(|_| OnceLock::new()).collect();
        let run = || build_node(&partition, img, opts, &slots, 0);
        match opts.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(e.to_string()))?
                .install(run),
            None => run(),
        }
        let stores: Vec<TileStore> = slots
            .into_iter()
            .map(|s| s.into_inner().expect("every tile is built"))
            .collect();
        let mut counters = OpCounters {
            per_level: vec![LevelCounts::default(); partition.levels()],
            ..OpCounters::default()
        };
        for (tile, store) in partition.tiles().iter().zip(&stores) {
            let lc = &mut counters.per_level[tile.level];
            lc.tiles += 1;
            lc.concatenations += store.stats.concatenations;
            lc.stored += store.stats.stored;
            lc.selection_ops += store.stats.selection_ops;
            counters.concatenations += store.stats.concatenations;
            counters.stored += store.stats.stored;
            counters.selection_ops += store.stats.selection_ops;
        }
        Ok(BeamTree {
            partition,
            stores,
            filter: opts.filter,
            counters,
        })
    }

    pub fn partition(&self) -> &PartitionTree {
        &self.partition
    }

    pub fn store(&self, tile: usize) -> &TileStore {
        &self.stores[tile]
    }

    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }

    pub fn filter(&self) -> FilterParams {
        self.filter
    }

    /// Handle of the stored curve between two boundary pixels of `tile`.
    pub fn handle(&self, tile: usize, p1: Pixel, p2: Pixel) -> Option<CurveHandle> {
        let b = self.stores[tile].bounds;
        let i = b.boundary_index(p1)?;
        let j = b.boundary_index(p2)?;
        self.stores[tile].get_pos(i, j)?;
        Some(CurveHandle {
            tile,
            lo: i.min(j),
            hi: i.max(j),
        })
    }

    /// Full response vector, oriented from the handle's `lo` endpoint.
    pub fn response(&self, h: CurveHandle) -> ResponseVector {
        let e = self.stores[h.tile].entries[tri(h.lo, h.hi)];
        ResponseVector::new(e.r, e.len, self.pixels(h), self.filter)
    }

    /// Pixel chain of a stored curve from its `lo` to its `hi` endpoint.
    pub fn pixels(&self, h: CurveHandle) -> Vec<Pixel> {
        let mut out: Vec<Pixel> = Vec::new();
        self.walk(h.tile, h.lo, h.hi, &mut |s| {
            out.pop();
            out.extend(bresenham(s.from, s.to));
        });
        out
    }

    /// Straight leaf pieces of a stored curve, in order from its `lo` to its
    /// `hi` endpoint.
    pub fn segments(&self, h: CurveHandle) -> Vec<Segment> {
        let mut out = Vec::new();
        self.walk(h.tile, h.lo, h.hi, &mut |s| out.push(s));
        out
    }

    fn walk(&self, tile: usize, i: usize, j: usize, f: &mut impl FnMut(Segment)) {
        let store = &self.stores[tile];
        let e = store.entries[tri(i, j)];
        debug_assert!(e.len > 0.0);
        let b = store.bounds;
        let (pi, pj) = (b.boundary_pixel(i), b.boundary_pixel(j));
        let children = self.partition.tile(tile).children;
        match e.src {
            SRC_LEAF => f(Segment {
                from: pi,
                to: pj,
                r: if i < j { e.r } else { -e.r },
                len: e.len,
            }),
            SRC_CHILD1 | SRC_CHILD2 => {
                let (c1, c2) = children.expect("inherited curve has children");
                let c = if e.src == SRC_CHILD1 { c1 } else { c2 };
                let cb = self.stores[c].bounds;
                let ci = cb.boundary_index(pi).expect("endpoint on child boundary");
                let cj = cb.boundary_index(pj).expect("endpoint on child boundary");
                self.walk(c, ci, cj, f);
            }
            src => {
                let (c1, c2) = children.expect("concatenated curve has children");
                let t = (src >> 1) as usize;
                let lo_in_1 = src & 1 == 1;
                let p3 = self.partition.interface(tile)[t];
                let i_in_1 = (i < j) == lo_in_1;
                let (first, second) = if i_in_1 { (c1, c2) } else { (c2, c1) };
                let fb = self.stores[first].bounds;
                let sb = self.stores[second].bounds;
                self.walk(
                    first,
                    fb.boundary_index(pi).expect("endpoint on child boundary"),
                    fb.boundary_index(p3).expect("junction on child boundary"),
                    f,
                );
                self.walk(
                    second,
                    sb.boundary_index(p3).expect("junction on child boundary"),
                    sb.boundary_index(pj).expect("endpoint on child boundary"),
                    f,
                );
            }
        }
    }

    /// Every stored curve with positive score, best first. Curves a tile
    /// inherits verbatim from a child are reported once, under the child.
    /// Ties keep tile order, then pair order.
    pub fn collect_curves(&self, params: &ThresholdParams) -> Vec<ScoredCurve> {
        let (k, a, b) = params.threshold_coefficients();
        let inv_w = 1.0 / self.filter.w as f64;
        let mut out = Vec::new();
        for (tile, store) in self.stores.iter().enumerate() {
            let bl = store.bounds.boundary_len();
            for hi in 1..bl {
                for lo in 0..hi {
                    let e = store.entries[tri(lo, hi)];
                    if e.len <= 0.0 || e.src == SRC_CHILD1 || e.src == SRC_CHILD2 {
                        continue;
                    }
                    let c = e.r * inv_w / e.len;
                    let score = c.abs() - (k * (a / e.len + b)).sqrt();
                    if score > 0.0 {
                        out.push(ScoredCurve {
                            handle: CurveHandle { tile, lo, hi },
                            score,
                            c,
                            len: e.len,
                        });
                    }
                }
            }
        }
        out.sort_by(|x, y| y.score.total_cmp(&x.score));
        out
    }

    /// `(|C|, L)` of every distinct stored curve (inherited copies skipped).
    pub fn contrasts(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let inv_w = 1.0 / self.filter.w as f64;
        self.stores.iter().flat_map(move |s| {
            s.entries
                .iter()
                .filter(|e| e.len > 0.0 && e.src != SRC_CHILD1 && e.src != SRC_CHILD2)
                .map(move |e| (e.r.abs() * inv_w / e.len, e.len))
        })
    }
}

fn build_node(
    tree: &PartitionTree,
    img: &Image,
    opts: &BuildOptions,
    slots: &[OnceLock<TileStore>],
    id: usize,
) {
    let tile = tree.tile(id);
    let store = match tile.children {
        None => bottom_level(tile.bounds, img, opts.filter),
        Some((a, b)) => {
            if tile.bounds.area() >= PARALLEL_AREA {
                rayon::join(
                    || build_node(tree, img, opts, slots, a),
                    || build_node(tree, img, opts, slots, b),
                );
            } else {
                build_node(tree, img, opts, slots, a);
                build_node(tree, img, opts, slots, b);
            }
            coarser_level(
                tile.bounds,
                tree.interface(id),
                slots[a].get().expect("child built"),
                slots[b].get().expect("child built"),
                opts.mode,
                &opts.selection,
                opts.filter,
            )
        }
    };
    let _ = slots[id].set(store);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{add_noise, NoiseSpec};
    use crate::partition::split;
    use std::collections::HashSet;

    fn noisy(size: usize, seed: u64) -> Image {
        let base = Image::from_fn(size, size, |x, y| if 2 * x + y > 2 * size / 2 { 1.0 } else { 0.0 });
        add_noise(&base, &NoiseSpec::gaussian(0.5, seed)).unwrap()
    }

    fn opts(mode: MergeMode, selection: Selection) -> BuildOptions {
        BuildOptions {
            n_min: 5,
            filter: FilterParams::new(4).unwrap(),
            mode,
            selection,
            threads: Some(1),
        }
    }

    fn score_sel(n: usize) -> Selection {
        Selection::Score(ThresholdParams::from_pixel_noise(0.5, 4, n, 0.6).unwrap())
    }

    fn same_stores(a: &BeamTree, b: &BeamTree) -> bool {
        a.stores.iter().zip(&b.stores).all(|(x, y)| {
            x.entries.len() == y.entries.len()
                && x.entries.iter().zip(&y.entries).all(|(e, f)| {
                    e.r.to_bits() == f.r.to_bits() && e.len.to_bits() == f.len.to_bits() && e.src == f.src
                })
        })
    }

    #[test]
    fn leaf_holds_every_cross_side_segment() {
        let img = noisy(9, 1);
        let f = FilterParams::new(4).unwrap();
        let r = Rect::new(0, 0, 4, 4);
        let s = bottom_level(r, &img, f);
        let b = r.boundary_len();
        let mut n = 0;
        for j in 1..b {
            for i in 0..j {
                let got = s.get(r.boundary_pixel(i), r.boundary_pixel(j));
                if r.share_side(i, j) {
                    assert!(got.is_none());
                } else {
                    let (rr, len) = line_sums(&img, r.boundary_pixel(i), r.boundary_pixel(j), 4);
                    assert_eq!(got, Some((rr, len)));
                    let back = s.get(r.boundary_pixel(j), r.boundary_pixel(i)).unwrap();
                    assert_eq!(back.0, -rr);
                    n += 1;
                }
            }
        }
        assert_eq!(s.len(), n);
    }

    #[test]
    fn best_pixels_skip_interface_ends() {
        let img = noisy(9, 4);
        let f = FilterParams::new(4).unwrap();
        let (a, b, line) = split(&Rect::new(0, 0, 8, 8));
        let (sa, sb) = (bottom_level(a, &img, f), bottom_level(b, &img, f));
        let sel = Selection::MaxContrast;
        let n = line.len();
        let best = |p: Pixel| {
            [&sa, &sb]
                .iter()
                .flat_map(|s| {
                    let r = s.bounds;
                    (0..r.boundary_len()).filter_map(move |j| s.get(p, r.boundary_pixel(j)))
                })
                .map(|(r, len)| (r / len).abs())
                .fold(0.0, f64::max)
        };
        for k in 1..n - 1 {
            let got = best_pixels(n, &sa, &sb, &line, k, &sel, f);
            assert_eq!(got.len(), k);
            assert!(got.windows(2).all(|w| w[0] < w[1]));
            assert!(!got.contains(&0) && !got.contains(&(n - 1)));
            let worst_in = got.iter().map(|&t| best(line[t])).fold(f64::INFINITY, f64::min);
            for t in (1..n - 1).filter(|t| !got.contains(t)) {
                assert!(best(line[t]) <= worst_in + 1e-12);
            }
        }
        // too few inner pixels: the ends compete again
        assert_eq!(best_pixels(n, &sa, &sb, &line, n - 1, &sel, f).len(), n - 1);
        assert_eq!(best_pixels(n, &sa, &sb, &line, n, &sel, f), (0..n).collect::<Vec<_>>());
    }

    // Every stored cross-interface curve must be the best non-overlapping
    // concatenation over all junctions.
    fn check_merge_against_brute_force(selection: Selection) {
        let img = noisy(9, 7);
        let f = FilterParams::new(4).unwrap();
        let v = Rect::new(0, 0, 4, 8);
        let (r1, r2, line) = split(&v);
        let (c1, c2) = (bottom_level(r1, &img, f), bottom_level(r2, &img, f));
        let store = coarser_level(v, &line, &c1, &c2, MergeMode::Basic, &selection, f);
        let ranker = Ranker::new(&selection, f);
        let on_line: HashSet<Pixel> = line.iter().copied().collect();
        let mut checked = 0;
        for p1 in r1.boundary() {
            for p2 in r2.boundary() {
                let (Some(i), Some(j)) = (v.boundary_index(p1), v.boundary_index(p2)) else {
                    continue;
                };
                if on_line.contains(&p1) || on_line.contains(&p2) || v.share_side(i, j) {
                    continue;
                }
                let mut best: Option<(f64, f64, f64)> = None;
                for &p3 in &line {
                    let (Some(h1), Some(h2)) = (c1.get(p1, p3), c2.get(p3, p2)) else {
                        continue;
                    };
                    let a: HashSet<Pixel> = bresenham(p1, p3).into_iter().collect();
                    if bresenham(p3, p2).iter().any(|p| *p != p3 && a.contains(p)) {
                        continue;
                    }
                    let (r, len) = (h1.0 + h2.0, h1.1 + h2.1);
                    let key = ranker.key(r, len);
                    if best.map_or(true, |(bk, br, bl)| ranker.better(key, r, len, bk, br, bl)) {
                        best = Some((key, r, len));
                    }
                }
                let got = store.get(p1, p2);
                match best {
                    None => assert!(got.is_none()),
                    Some((_, r, len)) => {
                        assert_eq!(got, Some((r, len)), "{p1} -> {p2}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn merge_matches_brute_force_by_score() {
        check_merge_against_brute_force(score_sel(81));
    }

    #[test]
    fn merge_matches_brute_force_by_contrast() {
        check_merge_against_brute_force(Selection::MaxContrast);
    }

    #[test]
    fn stored_curves_are_consistent_chains() {
        let img = noisy(17, 3);
        let t = BeamTree::build(&img, &opts(MergeMode::Basic, score_sel(289))).unwrap();
        let mut checked = 0;
        for tile in [0usize, 1, 2] {
            let store = t.store(tile);
            let b = store.bounds();
            for (lo, hi, r, len) in store.iter().step_by(7) {
                let h = CurveHandle { tile, lo, hi };
                let segs = t.segments(h);
                assert_eq!(segs[0].from, b.boundary_pixel(lo));
                assert_eq!(segs[segs.len() - 1].to, b.boundary_pixel(hi));
                for w in segs.windows(2) {
                    assert_eq!(w[0].to, w[1].from);
                }
                for s in &segs {
                    let (lr, ll) = line_sums(&img, s.from, s.to, 4);
                    assert!((s.r - lr).abs() < 1e-9 && s.len == ll);
                }
                let sr: f64 = segs.iter().map(|s| s.r).sum();
                let sl: f64 = segs.iter().map(|s| s.len).sum();
                assert!((sr - r).abs() < 1e-9 && (sl - len).abs() < 1e-9);
                let px = t.pixels(h);
                let distinct: HashSet<Pixel> = px.iter().copied().collect();
                assert_eq!(distinct.len(), px.len(), "curve revisits a pixel");
                for w in px.windows(2) {
                    let dx = (w[0].x as i64 - w[1].x as i64).abs();
                    let dy = (w[0].y as i64 - w[1].y as i64).abs();
                    assert!(dx.max(dy) == 1);
                }
                let rv = t.response(h);
                assert_eq!(rv.pixels, px);
                assert!((rv.c - r / (4.0 * len)).abs() < 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn full_interface_best_k_equals_basic() {
        let img = noisy(33, 5);
        let basic = BeamTree::build(&img, &opts(MergeMode::Basic, score_sel(1089))).unwrap();
        let full = BeamTree::build(&img, &opts(MergeMode::Optimized { k: 33 }, score_sel(1089))).unwrap();
        assert!(same_stores(&basic, &full));
        assert_eq!(basic.counters(), full.counters());
        let small = BeamTree::build(&img, &opts(MergeMode::Optimized { k: 2 }, score_sel(1089))).unwrap();
        assert!(small.counters().concatenations < basic.counters().concatenations);
        assert!(small.counters().selection_ops > 0);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let img = noisy(65, 11);
        let mut o = opts(MergeMode::Optimized { k: 2 }, score_sel(65 * 65));
        let one = BeamTree::build(&img, &o).unwrap();
        o.threads = Some(3);
        let three = BeamTree::build(&img, &o).unwrap();
        assert!(same_stores(&one, &three));
        assert_eq!(one.counters(), three.counters());
    }

    #[test]
    fn counters_add_up_per_level() {
        let img = noisy(33, 2);
        let t = BeamTree::build(&img, &opts(MergeMode::Basic, score_sel(1089))).unwrap();
        let c = t.counters();
        assert_eq!(c.per_level.len(), t.partition().levels());
        assert_eq!(c.per_level.iter().map(|l| l.concatenations).sum::<u64>(), c.concatenations);
        assert_eq!(c.per_level.iter().map(|l| l.stored).sum::<u64>(), c.stored);
        for (j, l) in c.per_level.iter().enumerate() {
            assert_eq!(l.tiles, 1 << j);
        }
        assert_eq!(c.per_level.last().unwrap().concatenations, 0);
    }

    #[test]
    fn collected_curves_are_positive_and_sorted() {
        let img = noisy(33, 4);
        let sel = score_sel(1089);
        let Selection::Score(p) = sel else { unreachable!() };
        let t = BeamTree::build(&img, &opts(MergeMode::Basic, sel)).unwrap();
        let curves = t.collect_curves(&p);
        assert!(!curves.is_empty());
        for w in curves.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
        for c in &curves {
            assert!(c.score > 0.0);
            let rv = t.response(c.handle);
            assert!((crate::scoring::score(&rv, &p) - c.score).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_options() {
        let img = noisy(9, 0);
        assert!(BeamTree::build(&img, &opts(MergeMode::Optimized { k: 0 }, Selection::MaxContrast)).is_err());
        let other_w = Selection::Score(ThresholdParams::from_pixel_noise(1.0, 2, 81, 0.6).unwrap());
        assert!(BeamTree::build(&img, &opts(MergeMode::Basic, other_w)).is_err());
        let mut o = opts(MergeMode::Basic, Selection::MaxContrast);
        o.n_min = 2;
        assert!(BeamTree::build(&img, &o).is_err());
    }
}
