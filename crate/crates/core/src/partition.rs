//! Rectangle partition tree.
//!
//! A square tile is split into two rectangles by its middle column and each
//! rectangle into two squares by its middle row, recursively, until the
//! longer side is at most `n_min`. The split line belongs to both children,
//! so a curve crossing from one child to the other passes through a pixel
//! that lies on the boundary of both. For sides of the form `2^m + 1` every
//! split is exact; other sizes split at `⌊(side - 1) / 2⌋` and are off by one
//! row or column.
//!
//! Tile boundaries are enumerated clockwise from the top-left corner. Corner
//! pixels sit on two sides; a pair of boundary pixels that shares any side is
//! never stored.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

/// Default leaf side bound.
pub const DEFAULT_N_MIN: usize = 5;

/// Integer pixel position, ordered in raster order (row, then column).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    #[inline]
    pub const fn new(x: u32, y: u32) -> Self {
        Pixel { x, y }
    }

    #[inline]
    pub fn index(self, width: usize) -> usize {
        self.y as usize * width + self.x as usize
    }
}

impl Ord for Pixel {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Pixel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Top,
    Right,
    Bottom,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Top, Side::Right, Side::Bottom, Side::Left];

    #[inline]
    fn bit(self) -> u8 {
        1 << self as u8
    }
}

/// Inclusive pixel rectangle `[x0, x1] × [y0, y1]`, at least 2×2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        debug_assert!(x1 > x0 && y1 > y0, "degenerate rect");
        Rect { x0, y0, x1, y1 }
    }

    #[inline]
    pub fn width(&self) -> usize {
        (self.x1 - self.x0 + 1) as usize
    }

    #[inline]
    pub fn height(&self) -> usize {
        (self.y1 - self.y0 + 1) as usize
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    #[inline]
    pub fn max_side(&self) -> usize {
        self.width().max(self.height())
    }

    #[inline]
    pub fn contains(&self, p: Pixel) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    /// Number of boundary pixels.
    #[inline]
    pub fn boundary_len(&self) -> usize {
        2 * self.width() + 2 * self.height() - 4
    }

    /// Boundary pixel at clockwise position `i`.
    pub fn boundary_pixel(&self, i: usize) -> Pixel {
        let (w, h) = (self.width(), self.height());
        debug_assert!(i < self.boundary_len());
        let i = i as u32;
        let (w32, h32) = (w as u32, h as u32);
        if i < w32 {
            Pixel::new(self.x0 + i, self.y0)
        } else if i < w32 + h32 - 1 {
            Pixel::new(self.x1, self.y0 + (i - (w32 - 1)))
        } else if i < 2 * w32 + h32 - 2 {
            Pixel::new(self.x1 - (i - (w32 + h32 - 2)), self.y1)
        } else {
            Pixel::new(self.x0, self.y1 - (i - (2 * w32 + h32 - 3)))
        }
    }

    /// Clockwise position of `p` on the boundary, if it is a boundary pixel.
    pub fn boundary_index(&self, p: Pixel) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let (w, h) = (self.width() as u32, self.height() as u32);
        let i = if p.y == self.y0 {
            p.x - self.x0
        } else if p.x == self.x1 {
            (w - 1) + (p.y - self.y0)
        } else if p.y == self.y1 {
            (w + h - 2) + (self.x1 - p.x)
        } else if p.x == self.x0 {
            (2 * w + h - 3) + (self.y1 - p.y)
        } else {
            return None;
        };
        Some(i as usize)
    }

    /// Clockwise boundary pixels.
    pub fn boundary(&self) -> Vec<Pixel> {
        (0..self.boundary_len()).map(|i| self.boundary_pixel(i)).collect()
    }

    /// Bit set of the sides holding boundary position `i`.
    #[inline]
    pub fn side_mask(&self, i: usize) -> u8 {
        let (w, h) = (self.width(), self.height());
        let mut m = 0;
        if i < w {
            m |= Side::Top.bit();
        }
        if i + 1 >= w && i < w + h - 1 {
            m |= Side::Right.bit();
        }
        if i + 2 >= w + h && i < 2 * w + h - 2 {
            m |= Side::Bottom.bit();
        }
        if i + 3 >= 2 * w + h || i == 0 {
            m |= Side::Left.bit();
        }
        m
    }

    pub fn sides_of(&self, i: usize) -> Vec<Side> {
        let m = self.side_mask(i);
        Side::ALL.into_iter().filter(|s| m & s.bit() != 0).collect()
    }

    /// Ordered pixels of one side (top left→right, right top→bottom,
    /// bottom right→left, left bottom→top).
    pub fn side_pixels(&self, side: Side) -> Vec<Pixel> {
        let bit = side.bit();
        let mut idx: Vec<usize> = (0..self.boundary_len()).filter(|&i| self.side_mask(i) & bit != 0).collect();
        if side == Side::Left {
            // wraps around position 0
            idx.rotate_left(1);
        }
        idx.into_iter().map(|i| self.boundary_pixel(i)).collect()
    }

    /// Whether boundary positions `i` and `j` lie on a common side.
    #[inline]
    pub fn share_side(&self, i: usize, j: usize) -> bool {
        self.side_mask(i) & self.side_mask(j) != 0
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]x[{},{}]", self.x0, self.x1, self.y0, self.y1)
    }
}

/// Splits `r` across its longer side (columns first for squares). Returns
/// both children and the shared interface line, ordered left→right or
/// top→bottom.
pub fn split(r: &Rect) -> (Rect, Rect, Vec<Pixel>) {
    let (w, h) = (r.width() as u32, r.height() as u32);
    if w >= h {
        let mid = r.x0 + (w - 1) / 2;
        let a = Rect::new(r.x0, r.y0, mid, r.y1);
        let b = Rect::new(mid, r.y0, r.x1, r.y1);
        let line = (r.y0..=r.y1).map(|y| Pixel::new(mid, y)).collect();
        (a, b, line)
    } else {
        let mid = r.y0 + (h - 1) / 2;
        let a = Rect::new(r.x0, r.y0, r.x1, mid);
        let b = Rect::new(r.x0, mid, r.x1, r.y1);
        let line = (r.x0..=r.x1).map(|x| Pixel::new(x, mid)).collect();
        (a, b, line)
    }
}

/// Node of the partition tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tile {
    pub id: usize,
    pub level: usize,
    pub bounds: Rect,
    pub parent: Option<usize>,
    pub children: Option<(usize, usize)>,
}

impl Tile {
    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary partition of a `width`×`height` image. Tiles are numbered in
/// breadth-first order, so the tiles of one level are contiguous.
#[derive(Clone, Debug)]
pub struct PartitionTree {
    width: usize,
    height: usize,
    n_min: usize,
    tiles: Vec<Tile>,
    interfaces: Vec<Vec<Pixel>>,
    level_start: Vec<usize>,
}

impl PartitionTree {
    pub fn build(width: usize, height: usize, n_min: usize) -> Result<Self> {
        if n_min < 3 {
            return Err(Error::invalid(format!("n_min must be at least 3, got {n_min}")));
        }
        if width < n_min || height < n_min {
            return Err(Error::invalid(format!(
                "image {width}x{height} is smaller than n_min = {n_min}"
            )));
        }
        if width > u32::MAX as usize / 2 || height > u32::MAX as usize / 2 {
            return Err(Error::invalid("image too large"));
        }
        let root = Rect::new(0, 0, width as u32 - 1, height as u32 - 1);
        let mut tiles = vec![Tile {
            id: 0,
            level: 0,
            bounds: root,
            parent: None,
            children: None,
        }];
        let mut interfaces = vec![Vec::new()];
        let mut next = 0;
        while next < tiles.len() {
            let bounds = tiles[next].bounds;
            if bounds.max_side() > n_min {
                let (a, b, line) = split(&bounds);
                let level = tiles[next].level + 1;
                let ids = (tiles.len(), tiles.len() + 1);
                for (id, r) in [(ids.0, a), (ids.1, b)] {
                    tiles.push(Tile {
                        id,
                        level,
                        bounds: r,
                        parent: Some(next),
                        children: None,
                    });
                    interfaces.push(Vec::new());
                }
                tiles[next].children = Some(ids);
                interfaces[next] = line;
            }
            next += 1;
        }
        let mut level_start = vec![0];
        for (i, t) in tiles.iter().enumerate() {
            if t.level + 1 > level_start.len() {
                level_start.push(i);
            }
        }
        level_start.push(tiles.len());
        Ok(PartitionTree {
            width,
            height,
            n_min,
            tiles,
            interfaces,
            level_start,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn root(&self) -> &Tile {
        &self.tiles[0]
    }

    pub fn tile(&self, id: usize) -> &Tile {
        &self.tiles[id]
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Interface line of an internal tile (empty for leaves).
    pub fn interface(&self, id: usize) -> &[Pixel] {
        &self.interfaces[id]
    }

    /// Number of levels, `j = 0..levels()`.
    pub fn levels(&self) -> usize {
        self.level_start.len() - 1
    }

    pub fn level(&self, j: usize) -> &[Tile] {
        &self.tiles[self.level_start[j]..self.level_start[j + 1]]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Tile> {
        self.tiles.iter().filter(|t| t.is_leaf())
    }

    /// Pairs `(p1, p2)` with `p1` on the boundary of both the tile and its
    /// first child, `p2` on the boundary of both the tile and its second
    /// child, `p1 != p2`, and the two on different sides of the tile. Ordered
    /// by the clockwise position of `p1`, then `p2`.
    pub fn boundary_pairs(&self, id: usize) -> Result<Vec<(Pixel, Pixel)>> {
        let tile = &self.tiles[id];
        let (c1, c2) = tile
            .children
            .ok_or_else(|| Error::invalid(format!("tile {id} is a leaf")))?;
        let v = tile.bounds;
        let (r1, r2) = (self.tiles[c1].bounds, self.tiles[c2].bounds);
        let outer = |r: &Rect| -> Vec<usize> {
            (0..v.boundary_len())
                .filter(|&i| r.boundary_index(v.boundary_pixel(i)).is_some())
                .collect()
        };
        let (o1, o2) = (outer(&r1), outer(&r2));
        let mut pairs = Vec::new();
        for &i in &o1 {
            for &j in &o2 {
                if i != j && !v.share_side(i, j) {
                    pairs.push((v.boundary_pixel(i), v.boundary_pixel(j)));
                }
            }
        }
        Ok(pairs)
    }

    /// Line-oriented dump of every tile for golden comparisons.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# partition {}x{} n_min={} tiles={} levels={}",
            self.width,
            self.height,
            self.n_min,
            self.tiles.len(),
            self.levels()
        );
        for t in &self.tiles {
            let b = t.bounds;
            let _ = write!(out, "tile {} level {} bounds {} {} {} {}", t.id, t.level, b.x0, b.y0, b.x1, b.y1);
            if let Some((a, c)) = t.children {
                let line = &self.interfaces[t.id];
                let _ = write!(
                    out,
                    " children {a} {c} interface {} {}-{}",
                    line.len(),
                    line[0],
                    line[line.len() - 1]
                );
            }
            out.push('\n');
        }
        out
    }
}
